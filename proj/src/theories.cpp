#include "emergence/theories.hpp"

#include <algorithm>
#include <map>
#include <numbers>

namespace emergence {

namespace {

double rel_distance(const Operator& a, const Operator& b) {
  return frobenius_distance(a, b) / std::max(1.0, std::max(a.matrix().norm(), b.matrix().norm()));
}

Scalar sample_scalar(Rng& rng, bool real) {
  std::uniform_real_distribution<double> mod(0.25, 2.0);
  if (real) return mod(rng);
  std::uniform_real_distribution<double> arg(-std::numbers::pi, std::numbers::pi);
  const double r = mod(rng);
  return std::polar(r, arg(rng));
}

Json claims_json(const StructureClaims& c) {
  Json j = Json::array();
  if (c.is_homomorphic()) {
    j.push_back("homomorphic");
    return j;
  }
  if (c.additive) j.push_back("additive");
  if (c.multiplicative) j.push_back("multiplicative");
  if (c.scalar_invariant) j.push_back("scalar_invariant");
  return j;
}

}  // namespace

std::string_view structure_flag_name(StructureFlag flag) {
  switch (flag) {
    case StructureFlag::kHomomorphic: return "homomorphic";
    case StructureFlag::kAdditive: return "additive";
    case StructureFlag::kMultiplicative: return "multiplicative";
    case StructureFlag::kScalarInvariant: return "scalar_invariant";
  }
  return "?";
}

bool StructureClaims::includes(StructureFlag flag) const {
  switch (flag) {
    case StructureFlag::kHomomorphic: return is_homomorphic();
    case StructureFlag::kAdditive: return additive;
    case StructureFlag::kMultiplicative: return multiplicative;
    case StructureFlag::kScalarInvariant: return scalar_invariant;
  }
  return false;
}

std::string_view gpt_form_name(GptForm form) {
  switch (form) {
    case GptForm::kScalarTimesFixed: return "scalar_times_fixed";
    case GptForm::kRepresentation: return "representation";
    case GptForm::kLinearCombination: return "linear_combination";
    case GptForm::kCoefficientMonomial: return "coefficient_monomial";
    case GptForm::kSum: return "sum";
    case GptForm::kCompose: return "compose";
    case GptForm::kTabulated: return "tabulated";
  }
  return "?";
}

// ------------------------------------------------------------------ Gpt

Gpt::Gpt(GptForm form, AlgebraPtr algebra, SpacePtr space)
    : form_(form), algebra_(std::move(algebra)), space_(std::move(space)) {
  if (!algebra_) throw Error(ErrorCode::kBadSpec, "GPT needs a parameter algebra");
  if (!space_) throw Error(ErrorCode::kBadSpec, "GPT needs a field space");
}

GptPtr Gpt::scalar_times_fixed(AlgebraPtr algebra, const Operator& psi0, int n) {
  if (n < 1) throw Error(ErrorCode::kBadSpec, "scalar_times_fixed needs n >= 1");
  auto g = std::shared_ptr<Gpt>(new Gpt(GptForm::kScalarTimesFixed, std::move(algebra), psi0.space()));
  g->fixed_.push_back(emergence::power(psi0, n));
  g->power_ = n;
  return g;
}

GptPtr Gpt::representation(AlgebraPtr algebra, const Operator& psi0) {
  auto g = std::shared_ptr<Gpt>(new Gpt(GptForm::kRepresentation, std::move(algebra), psi0.space()));
  g->fixed_.push_back(psi0);
  return g;
}

GptPtr Gpt::linear_combination(const Operator& offset, std::vector<Operator> basis, std::vector<std::string> names) {
  if (basis.empty()) throw Error(ErrorCode::kBadSpec, "linear_combination needs at least one basis operator");
  for (const auto& b : basis) require_same_space(offset, b, "linear_combination");
  if (names.empty()) {
    for (std::size_t i = 0; i < basis.size(); ++i) names.push_back("p" + std::to_string(i));
  }
  if (names.size() != basis.size()) throw Error(ErrorCode::kBadSpec, "linear_combination: one name per basis operator");
  auto alg = tuple_power(std::make_shared<ComplexScalars>(), static_cast<int>(basis.size()));
  auto g = std::shared_ptr<Gpt>(new Gpt(GptForm::kLinearCombination, alg, offset.space()));
  g->fixed_.push_back(offset);
  g->basis_ = std::move(basis);
  g->basis_names_ = std::move(names);
  const long k = static_cast<long>(g->basis_.size());
  g->sampler_ = [k](Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Param p(k);
    for (long i = 0; i < k; ++i) p(i) = u(rng);
    return p;
  };
  g->sampler_description_ = "real components in [-1, 1]";
  return g;
}

GptPtr Gpt::coefficient_monomial(AlgebraPtr algebra, CoefficientFunction f, const Operator& op) {
  auto g = std::shared_ptr<Gpt>(new Gpt(GptForm::kCoefficientMonomial, std::move(algebra), op.space()));
  g->fixed_.push_back(op);
  g->coefficient_.push_back(std::move(f));
  return g;
}

GptPtr Gpt::tabulated(AlgebraPtr algebra, SpacePtr space, std::vector<std::pair<Param, Operator>> table,
                      double match_tol) {
  if (table.empty()) throw Error(ErrorCode::kBadSpec, "tabulated GPT needs at least one entry");
  auto g = std::shared_ptr<Gpt>(new Gpt(GptForm::kTabulated, std::move(algebra), std::move(space)));
  for (const auto& [p, op] : table) {
    if (!(*op.space() == *g->space_)) throw Error(ErrorCode::kSpaceMismatch, "tabulated entry on a different space");
  }
  g->table_ = std::move(table);
  g->match_tol_ = match_tol;
  const auto keys = g->table_;
  g->sampler_ = [keys](Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, keys.size() - 1);
    return keys[pick(rng)].first;
  };
  g->sampler_description_ = "uniform over table keys";
  return g;
}

GptPtr sum_gpt(const GptPtr& a, const GptPtr& b) {
  if (!(*a->space() == *b->space())) throw Error(ErrorCode::kSpaceMismatch, "sum_gpt: operands on different spaces");
  auto alg = std::make_shared<ProductAlgebra>(std::vector<AlgebraPtr>{a->algebra(), b->algebra()});
  auto g = std::shared_ptr<Gpt>(new Gpt(GptForm::kSum, alg, a->space()));
  g->children_ = {a, b};
  return g;
}

GptPtr compose_gpt(const GptPtr& a, const GptPtr& b) {
  if (!(*a->space() == *b->space())) throw Error(ErrorCode::kSpaceMismatch, "compose_gpt: operands on different spaces");
  auto alg = std::make_shared<ProductAlgebra>(std::vector<AlgebraPtr>{a->algebra(), b->algebra()});
  auto g = std::shared_ptr<Gpt>(new Gpt(GptForm::kCompose, alg, a->space()));
  g->children_ = {a, b};
  return g;
}

const Operator& Gpt::fixed() const {
  if (fixed_.empty()) throw Error(ErrorCode::kBadSpec, std::string(gpt_form_name(form_)) + " GPT has no fixed operator");
  return fixed_.front();
}

const CoefficientFunction& Gpt::coefficient() const {
  if (coefficient_.empty()) throw Error(ErrorCode::kBadSpec, "GPT has no coefficient function");
  return coefficient_.front();
}

Operator Gpt::evaluate(const Param& eps) const {
  if (form_ == GptForm::kTabulated) {
    for (const auto& [key, op] : table_) {
      if (key.size() == eps.size() && (key - eps).norm() <= match_tol_ * std::max(1.0, key.norm())) return op;
    }
    throw Error(ErrorCode::kUnknownParameter, "tabulated GPT has no entry for the requested parameter");
  }
  if (!algebra_->contains(eps, 1e-12)) {
    throw Error(ErrorCode::kNotInCarrier, std::string(gpt_form_name(form_)) + " GPT: parameter outside the " +
                                              algebra_->kind() + " carrier");
  }
  switch (form_) {
    case GptForm::kScalarTimesFixed:
    case GptForm::kRepresentation:
      return algebra_->act(eps, fixed_.front());
    case GptForm::kLinearCombination: {
      Matrix m = fixed_.front().matrix();
      for (std::size_t i = 0; i < basis_.size(); ++i) m += eps(static_cast<long>(i)) * basis_[i].matrix();
      return Operator(space_, std::move(m));
    }
    case GptForm::kCoefficientMonomial:
      return algebra_->act(coefficient_.front().eval(eps), fixed_.front());
    case GptForm::kSum:
    case GptForm::kCompose: {
      const auto& prod = static_cast<const ProductAlgebra&>(*algebra_);
      const Operator a = children_[0]->evaluate(prod.component(eps, 0));
      const Operator b = children_[1]->evaluate(prod.component(eps, 1));
      return form_ == GptForm::kSum ? add(a, b) : compose(a, b);
    }
    case GptForm::kTabulated:
      break;
  }
  throw Error(ErrorCode::kBadSpec, "unhandled GPT form");
}

Param Gpt::sample(Rng& rng) const {
  if (sampler_) return sampler_(rng);
  if (form_ == GptForm::kSum || form_ == GptForm::kCompose) {
    const Param a = children_[0]->sample(rng);
    const Param b = children_[1]->sample(rng);
    Param out(a.size() + b.size());
    out << a, b;
    return out;
  }
  return algebra_->sample(rng);
}

GptPtr Gpt::with_claims(StructureClaims claims) const {
  auto g = std::make_shared<Gpt>(*this);
  g->claims_ = claims;
  g->verified_ = false;
  return g;
}

GptPtr Gpt::with_sampler(Sampler sampler, std::string description) const {
  auto g = std::make_shared<Gpt>(*this);
  g->sampler_ = std::move(sampler);
  g->sampler_description_ = std::move(description);
  g->verified_ = false;
  return g;
}

GptPtr Gpt::with_verified(bool verified) const {
  auto g = std::make_shared<Gpt>(*this);
  g->verified_ = verified;
  return g;
}

Json Gpt::describe() const {
  Json j;
  j["form"] = gpt_form_name(form_);
  j["degree"] = degree();
  j["algebra"] = algebra_->describe();
  j["dim"] = space_->dim();
  if (form_ == GptForm::kScalarTimesFixed) j["power"] = power_;
  if (form_ == GptForm::kLinearCombination) j["parameters"] = basis_names_;
  if (form_ == GptForm::kCoefficientMonomial) j["coefficient"] = coefficient_.front().to_json();
  if (form_ == GptForm::kTabulated) j["entries"] = table_.size();
  if (!children_.empty()) {
    Json c = Json::array();
    for (const auto& ch : children_) c.push_back(ch->describe());
    j["children"] = c;
  }
  if (!sampler_description_.empty()) j["sampler"] = sampler_description_;
  j["claims"] = claims_json(claims_);
  j["verified"] = verified_;
  return j;
}

Operator evaluate_gpt(const Gpt& t, const Param& eps) { return t.evaluate(eps); }

// ---------------------------------------------------------- structure

StructureReport check_structure(const Gpt& t, StructureFlag flag, int samples, double tol, std::uint64_t seed) {
  StructureReport r;
  r.flag = flag;
  const bool want_add = flag == StructureFlag::kHomomorphic || flag == StructureFlag::kAdditive;
  const bool want_mul = flag == StructureFlag::kHomomorphic || flag == StructureFlag::kMultiplicative;
  const bool want_scale = flag == StructureFlag::kHomomorphic || flag == StructureFlag::kScalarInvariant;
  const ParameterAlgebra& alg = *t.algebra();
  Rng rng(seed);
  try {
    for (int s = 0; s < samples; ++s) {
      const Param e = t.sample(rng);
      const Param d = t.sample(rng);
      const Scalar c = sample_scalar(rng, alg.real_carrier());
      const Operator pe = t.evaluate(e);
      const Operator pd = t.evaluate(d);
      if (want_add) {
        r.additive_residual = std::max(r.additive_residual, rel_distance(t.evaluate(alg.add(e, d)), add(pe, pd)));
      }
      if (want_mul) {
        r.multiplicative_residual =
            std::max(r.multiplicative_residual, rel_distance(t.evaluate(alg.mul(e, d)), compose(pe, pd)));
      }
      if (want_scale) {
        r.scalar_residual = std::max(r.scalar_residual, rel_distance(t.evaluate(alg.scale(c, e)), scale(c, pe)));
      }
      ++r.samples;
    }
  } catch (const Error& e) {
    r.pass = false;
    r.detail = e.what();
    return r;
  }
  r.pass = r.additive_residual <= tol && r.multiplicative_residual <= tol && r.scalar_residual <= tol;
  if (!r.pass) {
    r.detail = "residuals: additive " + std::to_string(r.additive_residual) + ", multiplicative " +
               std::to_string(r.multiplicative_residual) + ", scalar " + std::to_string(r.scalar_residual);
  }
  return r;
}

GptPtr verify_claims(const GptPtr& t, int samples, double tol, std::uint64_t seed) {
  const StructureClaims& c = t->claims();
  struct Check {
    bool claimed;
    StructureFlag flag;
    ErrorCode code;
  };
  for (const Check& ch : {Check{c.multiplicative, StructureFlag::kMultiplicative, ErrorCode::kNotMultiplicative},
                          Check{c.scalar_invariant, StructureFlag::kScalarInvariant, ErrorCode::kNotScalarInvariant},
                          Check{c.additive, StructureFlag::kAdditive, ErrorCode::kHypothesisViolated}}) {
    if (!ch.claimed) continue;
    const StructureReport r = check_structure(*t, ch.flag, samples, tol, seed);
    if (!r.pass) {
      const double res = std::max({r.additive_residual, r.multiplicative_residual, r.scalar_residual});
      throw Error(ch.code, "claimed " + std::string(structure_flag_name(ch.flag)) + " structure fails: " + r.detail)
          .with_residual(res);
    }
  }
  return t->with_verified(true);
}

// ------------------------------------------------------------------ Ppt

Ppt::Ppt(std::vector<Operator> slots, std::vector<PptTerm> terms, AlgebraPtr algebra)
    : slots_(std::move(slots)), terms_(std::move(terms)), algebra_(std::move(algebra)) {
  if (slots_.empty()) throw Error(ErrorCode::kBadSpec, "PPT needs at least one operator slot");
  if (!algebra_) algebra_ = std::make_shared<ComplexScalars>();
  for (const auto& s : slots_) require_same_space(slots_.front(), s, "PPT slots");
  std::map<std::vector<int>, int> seen;
  for (const auto& t : terms_) {
    if (t.alpha.size() != slots_.size()) {
      throw Error(ErrorCode::kBadSpec, "multi-index length " + std::to_string(t.alpha.size()) + " differs from " +
                                           std::to_string(slots_.size()) + " slots");
    }
    for (int a : t.alpha) {
      if (a < 0) throw Error(ErrorCode::kBadSpec, "multi-index entries must be nonnegative");
    }
    if (seen[t.alpha]++) throw Error(ErrorCode::kBadSpec, "duplicate multi-index in PPT");
    monomials_.push_back(monomial(t.alpha));
  }
}

int Ppt::total_degree() const {
  int l = 0;
  for (const auto& t : terms_) {
    int s = 0;
    for (int a : t.alpha) s += a;
    l = std::max(l, s);
  }
  return l;
}

Operator Ppt::monomial(const std::vector<int>& alpha) const {
  Operator acc = Operator::identity(space());
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (alpha.at(i) > 0) acc = compose(acc, power(slots_[i], alpha[i]));
  }
  return acc;
}

Operator Ppt::monomial_right_inverse(const std::vector<int>& alpha) const {
  if (!right_invertible()) throw Error(ErrorCode::kNotRightInvertible, "PPT has no stored right inverses");
  Operator acc = Operator::identity(space());
  for (std::size_t i = slots_.size(); i-- > 0;) {
    if (alpha.at(i) > 0) acc = compose(acc, power(right_inverses_[i], alpha[i]));
  }
  return acc;
}

Operator Ppt::term_operator(std::size_t i, const Param& delta) const {
  return algebra_->act(terms_.at(i).f.eval(delta), monomials_.at(i));
}

Operator Ppt::evaluate(const Param& delta) const {
  Operator acc = Operator::zero(space());
  for (std::size_t i = 0; i < terms_.size(); ++i) acc = add(acc, term_operator(i, delta));
  return acc;
}

Operator Ppt::evaluate_per_term(const std::vector<Param>& deltas) const {
  if (deltas.size() != terms_.size()) {
    throw Error(ErrorCode::kDegreeMismatch, "per-term assignment has " + std::to_string(deltas.size()) +
                                                " entries for " + std::to_string(terms_.size()) + " terms");
  }
  Operator acc = Operator::zero(space());
  for (std::size_t i = 0; i < terms_.size(); ++i) acc = add(acc, term_operator(i, deltas[i]));
  return acc;
}

Ppt Ppt::with_right_inverses(InverseMethod method, double tol) const {
  Ppt out = *this;
  out.right_inverses_.clear();
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    try {
      out.right_inverses_.push_back(right_inverse(slots_[i], method, tol));
    } catch (const Error& e) {
      rethrow_as(e, ErrorCode::kNotRightInvertible, "slot " + std::to_string(i + 1));
    }
  }
  return out;
}

Ppt Ppt::with_given_right_inverses(std::vector<Operator> inverses, double tol) const {
  if (inverses.size() != slots_.size()) throw Error(ErrorCode::kBadSpec, "one right inverse per slot required");
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const Matrix eye = Matrix::Identity(slots_[i].dim(), slots_[i].dim());
    const double res = (slots_[i].matrix() * inverses[i].matrix() - eye).norm();
    if (res > tol) {
      throw Error(ErrorCode::kNotRightInvertible, "supplied right inverse of slot " + std::to_string(i + 1) +
                                                      " has residual " + std::to_string(res))
          .with_residual(res);
    }
  }
  Ppt out = *this;
  out.right_inverses_ = std::move(inverses);
  return out;
}

Json Ppt::describe() const {
  Json j;
  j["variables"] = variables();
  j["degree"] = total_degree();
  j["algebra"] = algebra_->describe();
  Json ts = Json::array();
  for (const auto& t : terms_) {
    Json tj;
    tj["alpha"] = t.alpha;
    tj["coefficient"] = t.f.to_json();
    ts.push_back(tj);
  }
  j["terms"] = ts;
  j["right_invertible"] = right_invertible();
  return j;
}

Operator evaluate_ppt(const Ppt& t, const Param& delta) { return t.evaluate(delta); }

Ppt ppt_from_gpt(const Gpt& t) {
  if (t.form() != GptForm::kScalarTimesFixed && t.form() != GptForm::kRepresentation) {
    throw Error(ErrorCode::kBadSpec, "only structural leaf GPTs convert to a one-variable PPT");
  }
  return Ppt({t.fixed()}, {PptTerm{{1}, CoefficientFunction::linear(1.0)}}, t.algebra());
}

std::vector<FactorPiece> ppt_factor_last_variable(const Ppt& t) {
  if (t.variables() < 2) throw Error(ErrorCode::kUnivariate, "cannot factor the last variable of a univariate PPT");
  const std::size_t r = static_cast<std::size_t>(t.variables());
  std::map<int, std::pair<std::vector<PptTerm>, std::vector<std::size_t>>> by_exp;
  for (std::size_t i = 0; i < t.terms().size(); ++i) {
    const auto& term = t.terms()[i];
    auto& bucket = by_exp[term.alpha.back()];
    bucket.first.push_back(PptTerm{std::vector<int>(term.alpha.begin(), term.alpha.end() - 1), term.f});
    bucket.second.push_back(i);
  }
  const std::vector<Operator> head(t.slots().begin(), t.slots().begin() + static_cast<long>(r - 1));
  std::vector<FactorPiece> out;
  for (auto& [j, bucket] : by_exp) {
    Ppt q(head, std::move(bucket.first), t.algebra());
    if (t.right_invertible()) {
      q = q.with_given_right_inverses(
          std::vector<Operator>(t.right_inverses().begin(), t.right_inverses().begin() + static_cast<long>(r - 1)));
    }
    out.push_back(FactorPiece{std::move(q), j, std::move(bucket.second)});
  }
  return out;
}

}  // namespace emergence
