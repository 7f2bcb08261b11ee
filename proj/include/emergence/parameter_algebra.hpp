#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "emergence/operator_core.hpp"
#include "emergence/serialization.hpp"

namespace emergence {

// A parameter is a coordinate vector in the algebra's carrier representation.
using Param = Vector;
using Rng = std::mt19937_64;

// Commutative parameter algebra with square roots acting on operators.
// All shipped carriers multiply coordinatewise in their representation, so
// add/mul/scale have coordinatewise defaults and instances override the
// carrier checks, the action and the sampler.
class ParameterAlgebra {
 public:
  virtual ~ParameterAlgebra() = default;

  virtual std::string kind() const = 0;
  virtual Json describe() const;
  virtual int degree() const { return 1; }
  virtual long coord_count() const = 0;
  // Coordinates are real (imaginary parts must vanish).
  virtual bool real_carrier() const { return false; }
  // Sampled elements are exactly representable and ops are exact on them.
  virtual bool exact() const { return false; }

  virtual bool contains(const Param& x, double tol = 1e-12) const;

  Param zero() const;
  Param one() const;
  virtual Param add(const Param& a, const Param& b) const;
  virtual Param mul(const Param& a, const Param& b) const;
  virtual Param scale(Scalar c, const Param& a) const;
  virtual Param sqrt_select(const Param& a) const;
  virtual std::string sqrt_branch() const { return "principal"; }

  virtual Operator act(const Param& eps, const Operator& psi) const = 0;
  // Spanning set used for identity-orbit least squares.
  virtual std::vector<Param> basis() const;
  virtual Param sample(Rng& rng) const = 0;

 protected:
  void check_size(const Param& x, const char* op) const;
};

using AlgebraPtr = std::shared_ptr<const ParameterAlgebra>;

// C with scalar multiplication.
class ComplexScalars final : public ParameterAlgebra {
 public:
  explicit ComplexScalars(double sample_min_modulus = 0.25, double sample_max_modulus = 2.0);
  std::string kind() const override { return "complex_scalars"; }
  long coord_count() const override { return 1; }
  Operator act(const Param& eps, const Operator& psi) const override;
  Param sample(Rng& rng) const override;

 private:
  double lo_, hi_;
};

// The cone R>=0 inside R; subtraction and negative scaling are not offered.
class NonnegativeReals final : public ParameterAlgebra {
 public:
  explicit NonnegativeReals(double sample_lo = 0.0, double sample_hi = 4.0);
  std::string kind() const override { return "nonnegative_reals"; }
  long coord_count() const override { return 1; }
  bool real_carrier() const override { return true; }
  bool contains(const Param& x, double tol = 1e-12) const override;
  Param scale(Scalar c, const Param& a) const override;
  Param sqrt_select(const Param& a) const override;
  std::string sqrt_branch() const override { return "nonnegative"; }
  Operator act(const Param& eps, const Operator& psi) const override;
  Param sample(Rng& rng) const override;
  // Squares of dyadic rationals k/16: sqrt and products are exact in binary64.
  Param sample_dyadic_square(Rng& rng) const;

 private:
  double lo_, hi_;
};

// Cartesian product with componentwise operations; TuplePower(A, k) is the
// product of k copies. When every factor is one-dimensional the tuple acts by
// the block-diagonal representation diag(e_1 I, ..., e_k I) o Psi.
class ProductAlgebra final : public ParameterAlgebra {
 public:
  explicit ProductAlgebra(std::vector<AlgebraPtr> factors);

  std::string kind() const override;
  Json describe() const override;
  int degree() const override;
  long coord_count() const override { return total_; }
  bool real_carrier() const override;
  bool exact() const override;
  bool contains(const Param& x, double tol = 1e-12) const override;
  Param scale(Scalar c, const Param& a) const override;
  Param sqrt_select(const Param& a) const override;
  std::string sqrt_branch() const override { return "componentwise"; }
  Operator act(const Param& eps, const Operator& psi) const override;
  std::vector<Param> basis() const override;
  Param sample(Rng& rng) const override;

  const std::vector<AlgebraPtr>& factors() const { return factors_; }
  Param component(const Param& x, std::size_t i) const;

 private:
  std::vector<AlgebraPtr> factors_;
  std::vector<long> offsets_;
  long total_ = 0;
};

AlgebraPtr tuple_power(const AlgebraPtr& base, int k);

// Nonnegative diagonal matrices commuting with a fixed idempotent power
// P = Psi0^n, acting by left composition. Coordinates are the full diagonal.
class CentralizerDiagonal final : public ParameterAlgebra {
 public:
  CentralizerDiagonal(const Operator& psi0, int n, double sample_hi = 4.0);

  std::string kind() const override { return "centralizer_diagonal"; }
  Json describe() const override;
  long coord_count() const override { return dim_; }
  bool real_carrier() const override { return true; }
  bool contains(const Param& x, double tol = 1e-12) const override;
  Param scale(Scalar c, const Param& a) const override;
  Param sqrt_select(const Param& a) const override;
  std::string sqrt_branch() const override { return "nonnegative"; }
  Operator act(const Param& eps, const Operator& psi) const override;
  std::vector<Param> basis() const override;
  Param sample(Rng& rng) const override;

  const Operator& idempotent() const { return projector_; }
  const std::vector<int>& classes() const { return class_of_; }

 private:
  Operator projector_;
  int power_;
  long dim_;
  double hi_;
  std::vector<int> class_of_;
  int class_count_ = 0;
};

// (Z_2)^m tensor C = C^m with pointwise operations, acting through the
// faithful representation by m diagonal blocks.
class BooleanComplex final : public ParameterAlgebra {
 public:
  explicit BooleanComplex(int m);

  std::string kind() const override { return "boolean_complex"; }
  Json describe() const override;
  long coord_count() const override { return m_; }
  bool exact() const override { return true; }
  Operator act(const Param& eps, const Operator& psi) const override;
  Param sample(Rng& rng) const override;
  // Idempotent element: every coordinate 0 or 1.
  Param sample_idempotent(Rng& rng) const;
  Operator representation(const Param& eps, const SpacePtr& space) const;

 private:
  int m_;
};

// Circulant operators on a periodic grid, coordinatized by their Fourier
// symbol and acting by left composition.
class CirculantAlgebra final : public ParameterAlgebra {
 public:
  explicit CirculantAlgebra(SpacePtr space);

  std::string kind() const override { return "circulant"; }
  Json describe() const override;
  long coord_count() const override { return space_->dim(); }
  Operator act(const Param& eps, const Operator& psi) const override;
  Param sample(Rng& rng) const override;
  Operator operator_of(const Param& symbol) const;

 private:
  SpacePtr space_;
  Matrix fourier_;  // columns are normalized Fourier modes
};

// ---- action diagnostics ----

struct ActionSample {
  Param eps;
  Param delta;
  Operator psi;
  Operator psi_prime;
};

struct CompatibilityReport {
  std::size_t samples = 0;
  double left_composition_residual = 0.0;   // (e.P) o P' vs e.(P o P')
  double product_residual = 0.0;            // (e*d).P vs e.(d.P)
  double right_composition_residual = 0.0;  // P o (e.P') vs e.(P o P')
  std::optional<bool> left_composition_holds;
  std::optional<bool> product_holds;
  std::optional<bool> right_composition_holds;
};

CompatibilityReport check_action_compatibility(const ParameterAlgebra& algebra,
                                               const std::vector<ActionSample>& samples,
                                               double tol = 1e-12);

// Unique parameter e with ||act(e, I) - A||_F <= tol * max(1, ||A||_F);
// throws kNotInIdentityOrbit carrying the least-squares residual.
Param solve_action_on_identity(const ParameterAlgebra& algebra, const Operator& a,
                               double tol = kDefaultTol);

// ---- coefficient functions ----

enum class CoefficientForm { kLinear, kAffine, kExp, kPower, kConstant };
enum class CoefficientDomain { kComplex, kReal, kNonnegative };

// Scalar coefficient form applied coordinatewise to a parameter. On
// one-dimensional carriers this is an ordinary map Par -> K.
class CoefficientFunction {
 public:
  static CoefficientFunction linear(Scalar a, CoefficientDomain domain = CoefficientDomain::kComplex);
  static CoefficientFunction affine(Scalar a, Scalar b, CoefficientDomain domain = CoefficientDomain::kComplex);
  static CoefficientFunction exp(Scalar a, Scalar b, CoefficientDomain domain = CoefficientDomain::kComplex);
  static CoefficientFunction power(Scalar a, double p, CoefficientDomain domain = CoefficientDomain::kComplex);
  static CoefficientFunction constant(Scalar c);

  CoefficientForm form() const { return form_; }
  CoefficientDomain domain() const { return domain_; }
  Scalar a() const { return a_; }
  Scalar b() const { return b_; }
  double p() const { return p_; }
  bool nowhere_vanishing() const { return nowhere_vanishing_; }
  CoefficientFunction with_nowhere_vanishing(bool claim) const;
  // Affine in the parameter (linear, affine or constant form).
  bool affine_in_parameter() const;

  Scalar eval_scalar(Scalar x) const;
  Scalar preimage_scalar(Scalar c, double tol = 1e-12) const;
  Param eval(const Param& x) const;
  Param preimage(const Param& c, double tol = 1e-12) const;

  std::string describe() const;
  Json to_json() const;
  static CoefficientFunction from_json(const Json& j);

  bool operator==(const CoefficientFunction&) const = default;

 private:
  CoefficientFunction(CoefficientForm form, Scalar a, Scalar b, double p, CoefficientDomain domain);

  CoefficientForm form_;
  Scalar a_;
  Scalar b_;
  double p_;
  CoefficientDomain domain_;
  bool nowhere_vanishing_ = true;
};

// Preimage c -> delta with eval(delta) = c; the result must also lie in the carrier.
Param coefficient_preimage(const CoefficientFunction& f, const ParameterAlgebra& algebra, const Param& c,
                           double tol = 1e-12);

// ---- functional calculus ----

struct FunctionalCalculus {
  std::vector<std::pair<CoefficientFunction, Operator>> entries;
  bool unital() const;
};

// Psi_f = act(e / f(e), I), checked to be independent of e on sampled e.
Operator canonical_calculus(const CoefficientFunction& f, const ParameterAlgebra& algebra,
                            const SpacePtr& space, double tol = 1e-12);

struct CalculusReport {
  std::size_t samples = 0;
  double max_residual = 0.0;
  bool pass = true;
  bool unital = false;
  std::string warning;
};

// Residual of Psi_f o act(f(e), Psi) = act(e, Psi) over all entries and samples.
CalculusReport validate_functional_calculus(const FunctionalCalculus& calculus,
                                            const ParameterAlgebra& algebra,
                                            const std::vector<Param>& eps_samples,
                                            const std::vector<Operator>& psi_samples, double tol = 1e-12);

// ---- degree embeddings ----

// (e_1..e_l) -> (e_1..e_l, 0..0) with k blocks of `block` coordinates.
Param embed_parameters(const Param& eps, int l, int k, long block = 1);

using ScalarMap = std::function<Scalar(const Param&)>;
// Pullback of f on Par^{k block} along the zero-padding embedding of Par^{l block}.
ScalarMap pullback(ScalarMap f, int l, int k, long block = 1);

// Parse {"kind": ..., ...} into an algebra; `space` is needed by
// space-dependent carriers (circulant, centralizer_diagonal).
AlgebraPtr algebra_from_json(const Json& j, const SpacePtr& space);

}  // namespace emergence
