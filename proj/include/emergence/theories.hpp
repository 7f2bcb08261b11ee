#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "emergence/operator_core.hpp"
#include "emergence/parameter_algebra.hpp"
#include "emergence/serialization.hpp"

namespace emergence {

enum class StructureFlag { kHomomorphic, kAdditive, kMultiplicative, kScalarInvariant };

std::string_view structure_flag_name(StructureFlag flag);

// Homomorphic means all three of additive, multiplicative, scalar invariant.
struct StructureClaims {
  bool additive = false;
  bool multiplicative = false;
  bool scalar_invariant = false;

  static StructureClaims homomorphic() { return {true, true, true}; }
  bool is_homomorphic() const { return additive && multiplicative && scalar_invariant; }
  bool any() const { return additive || multiplicative || scalar_invariant; }
  bool includes(StructureFlag flag) const;

  bool operator==(const StructureClaims&) const = default;
};

enum class GptForm {
  kScalarTimesFixed,     // e -> act(e, Psi0^n)
  kRepresentation,       // e -> rho(e) o Psi0
  kLinearCombination,    // h -> offset + sum_i h_i B_i
  kCoefficientMonomial,  // d -> act(f(d), Psi)
  kSum,
  kCompose,
  kTabulated,
};

std::string_view gpt_form_name(GptForm form);

class Gpt;
using GptPtr = std::shared_ptr<const Gpt>;
using Sampler = std::function<Param(Rng&)>;

// Parameterized family of operators on one field space. Immutable; the
// with_* methods return modified copies.
class Gpt {
 public:
  static GptPtr scalar_times_fixed(AlgebraPtr algebra, const Operator& psi0, int n = 1);
  static GptPtr representation(AlgebraPtr algebra, const Operator& psi0);
  // Parameters are a tuple of complex scalars; the default sampler draws real
  // components in [-1, 1].
  static GptPtr linear_combination(const Operator& offset, std::vector<Operator> basis,
                                   std::vector<std::string> names = {});
  static GptPtr coefficient_monomial(AlgebraPtr algebra, CoefficientFunction f, const Operator& op);
  static GptPtr tabulated(AlgebraPtr algebra, SpacePtr space, std::vector<std::pair<Param, Operator>> table,
                          double match_tol = 1e-12);

  friend GptPtr sum_gpt(const GptPtr& a, const GptPtr& b);
  friend GptPtr compose_gpt(const GptPtr& a, const GptPtr& b);

  GptForm form() const { return form_; }
  int degree() const { return algebra_->degree(); }
  const AlgebraPtr& algebra() const { return algebra_; }
  const SpacePtr& space() const { return space_; }
  const std::vector<GptPtr>& children() const { return children_; }
  // Fixed operator of the structural leaf forms (Psi0^n, Psi0 or the monomial operator).
  const Operator& fixed() const;
  int power() const { return power_; }
  const std::vector<Operator>& basis() const { return basis_; }
  const CoefficientFunction& coefficient() const;

  Operator evaluate(const Param& eps) const;
  Param sample(Rng& rng) const;

  const StructureClaims& claims() const { return claims_; }
  bool verified() const { return verified_; }
  GptPtr with_claims(StructureClaims claims) const;
  GptPtr with_sampler(Sampler sampler, std::string description) const;
  GptPtr with_verified(bool verified) const;

  Json describe() const;

 private:
  Gpt(GptForm form, AlgebraPtr algebra, SpacePtr space);

  GptForm form_;
  AlgebraPtr algebra_;
  SpacePtr space_;
  std::vector<Operator> fixed_;  // 0 or 1 entries
  int power_ = 1;
  std::vector<Operator> basis_;
  std::vector<std::string> basis_names_;
  std::vector<CoefficientFunction> coefficient_;  // 0 or 1 entries
  std::vector<GptPtr> children_;
  std::vector<std::pair<Param, Operator>> table_;
  double match_tol_ = 1e-12;
  Sampler sampler_;
  std::string sampler_description_;
  StructureClaims claims_;
  bool verified_ = false;
};

GptPtr sum_gpt(const GptPtr& a, const GptPtr& b);
GptPtr compose_gpt(const GptPtr& a, const GptPtr& b);
Operator evaluate_gpt(const Gpt& t, const Param& eps);

struct StructureReport {
  StructureFlag flag = StructureFlag::kHomomorphic;
  std::size_t samples = 0;
  double additive_residual = 0.0;
  double multiplicative_residual = 0.0;
  double scalar_residual = 0.0;
  bool pass = true;
  std::string detail;
};

// Relative residuals of Psi_{e+d} = Psi_e + Psi_d, Psi_{e*d} = Psi_e o Psi_d and
// Psi_{c e} = c Psi_e on seeded samples, as applicable to `flag`.
StructureReport check_structure(const Gpt& t, StructureFlag flag, int samples = 32, double tol = 1e-10,
                                std::uint64_t seed = 42);

// Checks every claimed flag and returns a verified copy. Failures throw
// NotMultiplicative, NotScalarInvariant or HypothesisViolated (additivity).
GptPtr verify_claims(const GptPtr& t, int samples = 32, double tol = 1e-10, std::uint64_t seed = 42);

// ---- polynomial theories ----

struct PptTerm {
  std::vector<int> alpha;
  CoefficientFunction f;
};

// p[Psi_1..Psi_r](d) = sum_alpha act(f_alpha(d), Psi_1^a1 o ... o Psi_r^ar).
class Ppt {
 public:
  Ppt(std::vector<Operator> slots, std::vector<PptTerm> terms, AlgebraPtr algebra = nullptr);

  int variables() const { return static_cast<int>(slots_.size()); }
  int total_degree() const;
  const std::vector<Operator>& slots() const { return slots_; }
  const std::vector<PptTerm>& terms() const { return terms_; }
  const AlgebraPtr& algebra() const { return algebra_; }
  const SpacePtr& space() const { return slots_.front().space(); }

  Operator monomial(const std::vector<int>& alpha) const;
  const Operator& term_monomial(std::size_t i) const { return monomials_.at(i); }
  // R_r^{ar} o ... o R_1^{a1}; requires stored right inverses.
  Operator monomial_right_inverse(const std::vector<int>& alpha) const;

  Operator term_operator(std::size_t i, const Param& delta) const;
  Operator evaluate(const Param& delta) const;
  Operator evaluate_per_term(const std::vector<Param>& deltas) const;

  bool right_invertible() const { return !right_inverses_.empty(); }
  const std::vector<Operator>& right_inverses() const { return right_inverses_; }
  // Computes and verifies a right inverse for every slot; throws NotRightInvertible.
  Ppt with_right_inverses(InverseMethod method = InverseMethod::kAuto, double tol = kDefaultTol) const;
  Ppt with_given_right_inverses(std::vector<Operator> inverses, double tol = kDefaultTol) const;

  Json describe() const;

 private:
  std::vector<Operator> slots_;
  std::vector<PptTerm> terms_;
  AlgebraPtr algebra_;
  std::vector<Operator> monomials_;
  std::vector<Operator> right_inverses_;
};

Operator evaluate_ppt(const Ppt& t, const Param& delta);

// The one-variable PPT d -> act(d, Psi0^n) describing a structural leaf GPT.
Ppt ppt_from_gpt(const Gpt& t);

struct FactorPiece {
  Ppt q;                            // polynomial in the first r-1 slots
  int exponent = 0;                 // power of the last slot
  std::vector<std::size_t> origin;  // term index in the factored PPT for each term of q
};

// p = sum_j q_j o Psi_r^j, ordered by j.
std::vector<FactorPiece> ppt_factor_last_variable(const Ppt& t);

}  // namespace emergence
