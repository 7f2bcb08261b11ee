#include "emergence/errors.hpp"

namespace emergence {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSpaceMismatch: return "SpaceMismatch";
    case ErrorCode::kNotRightInvertible: return "NotRightInvertible";
    case ErrorCode::kBadSpec: return "BadSpec";
    case ErrorCode::kNoSquareRoot: return "NoSquareRoot";
    case ErrorCode::kNotInCarrier: return "NotInCarrier";
    case ErrorCode::kNotInIdentityOrbit: return "NotInIdentityOrbit";
    case ErrorCode::kNoPreimage: return "NoPreimage";
    case ErrorCode::kNotWellDefined: return "NotWellDefined";
    case ErrorCode::kDegreeMismatch: return "DegreeMismatch";
    case ErrorCode::kUnknownParameter: return "UnknownParameter";
    case ErrorCode::kUnivariate: return "Univariate";
    case ErrorCode::kNotScalarForm: return "NotScalarForm";
    case ErrorCode::kNotMultiplicative: return "NotMultiplicative";
    case ErrorCode::kNotScalarInvariant: return "NotScalarInvariant";
    case ErrorCode::kEmptyAccumulation: return "EmptyAccumulation";
    case ErrorCode::kHypothesisViolated: return "HypothesisViolated";
    case ErrorCode::kDimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::kInfeasibleTarget: return "InfeasibleTarget";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kSchemaError: return "SchemaError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

void rethrow_as(const Error& e, ErrorCode code, const std::string& context) {
  Error out(code, context + " (" + e.what() + ")");
  out.residual = e.residual;
  out.frequency = e.frequency;
  out.path = e.path;
  throw out;
}

}  // namespace emergence
