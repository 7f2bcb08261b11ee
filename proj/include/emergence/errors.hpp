#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emergence {

enum class ErrorCode {
  kSpaceMismatch,
  kNotRightInvertible,
  kBadSpec,
  kNoSquareRoot,
  kNotInCarrier,
  kNotInIdentityOrbit,
  kNoPreimage,
  kNotWellDefined,
  kDegreeMismatch,
  kUnknownParameter,
  kUnivariate,
  kNotScalarForm,
  kNotMultiplicative,
  kNotScalarInvariant,
  kEmptyAccumulation,
  kHypothesisViolated,
  kDimensionTooLarge,
  kInfeasibleTarget,
  kParseError,
  kSchemaError,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
// Numeric diagnostics ride along where the failing check produced one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

  std::optional<double> residual;
  std::optional<long> frequency;  // flat Fourier index for spectral failures
  std::string path;               // recursion/fold path inside the engine

  Error with_residual(double r) && {
    residual = r;
    return std::move(*this);
  }
  Error with_frequency(long k) && {
    frequency = k;
    return std::move(*this);
  }

 private:
  ErrorCode code_;
};

// Rethrows `e` with a different code, keeping diagnostics and prefixing context.
[[noreturn]] void rethrow_as(const Error& e, ErrorCode code, const std::string& context);

}  // namespace emergence
