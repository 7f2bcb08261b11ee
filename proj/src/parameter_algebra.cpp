#include "emergence/parameter_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <boost/math/tools/toms748_solve.hpp>

namespace emergence {

namespace {

double rel(double r, double ref) { return r / std::max(1.0, ref); }

// Rows [floor(i n / m), floor((i + 1) n / m)) form block i.
Matrix block_representation(const Param& eps, long n) {
  const long m = eps.size();
  if (n < m) {
    throw Error(ErrorCode::kBadSpec, "block representation needs dim >= " + std::to_string(m) +
                                         ", got " + std::to_string(n));
  }
  Vector diag(n);
  for (long i = 0; i < m; ++i) {
    for (long r = i * n / m; r < (i + 1) * n / m; ++r) diag(r) = eps(i);
  }
  return diag.asDiagonal();
}

Param uniform_modulus(Rng& rng, long count, double lo, double hi) {
  std::uniform_real_distribution<double> mod(lo, hi);
  std::uniform_real_distribution<double> arg(-std::numbers::pi, std::numbers::pi);
  Param p(count);
  for (long i = 0; i < count; ++i) {
    const double r = mod(rng);
    p(i) = std::polar(r, arg(rng));
  }
  return p;
}

bool all_real(const Param& x, double tol) {
  for (long i = 0; i < x.size(); ++i) {
    if (std::abs(x(i).imag()) > tol * std::max(1.0, std::abs(x(i)))) return false;
  }
  return true;
}

bool nonnegative_real(const Param& x, double tol) {
  if (!all_real(x, tol)) return false;
  for (long i = 0; i < x.size(); ++i) {
    if (x(i).real() < -tol) return false;
  }
  return true;
}

Param real_sqrt(const Param& a, const ParameterAlgebra& alg) {
  if (!alg.contains(a)) throw Error(ErrorCode::kNoSquareRoot, alg.kind() + ": no square root outside the cone");
  Param r(a.size());
  for (long i = 0; i < a.size(); ++i) r(i) = std::sqrt(std::max(0.0, a(i).real()));
  return r;
}

Param nonneg_scale(Scalar c, const Param& a, const ParameterAlgebra& alg) {
  if (std::abs(c.imag()) > 0.0 || c.real() < 0.0) {
    throw Error(ErrorCode::kNotInCarrier, alg.kind() + ": scaling by a negative or complex number");
  }
  return c.real() * a;
}

std::string fmt_scalar(Scalar c) {
  char buf[96];
  if (c.imag() == 0.0) {
    std::snprintf(buf, sizeof buf, "%.12g", c.real());
  } else {
    std::snprintf(buf, sizeof buf, "(%.12g%+.12gi)", c.real(), c.imag());
  }
  return buf;
}

Json scalar_json(Scalar c) {
  if (c.imag() == 0.0) return c.real();
  return Json::array({c.real(), c.imag()});
}

Scalar scalar_from(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  throw Error(ErrorCode::kSchemaError, "scalar must be a number or [re, im]");
}

}  // namespace

// ------------------------------------------------------------- base class

Json ParameterAlgebra::describe() const {
  Json j;
  j["kind"] = kind();
  return j;
}

void ParameterAlgebra::check_size(const Param& x, const char* op) const {
  if (x.size() != coord_count()) {
    throw Error(ErrorCode::kNotInCarrier, kind() + "." + op + ": expected " + std::to_string(coord_count()) +
                                              " coordinates, got " + std::to_string(x.size()));
  }
}

bool ParameterAlgebra::contains(const Param& x, double tol) const {
  if (x.size() != coord_count() || !x.allFinite()) return false;
  return !real_carrier() || all_real(x, tol);
}

Param ParameterAlgebra::zero() const { return Param::Zero(coord_count()); }
Param ParameterAlgebra::one() const { return Param::Ones(coord_count()); }

Param ParameterAlgebra::add(const Param& a, const Param& b) const {
  check_size(a, "add");
  check_size(b, "add");
  return a + b;
}

Param ParameterAlgebra::mul(const Param& a, const Param& b) const {
  check_size(a, "mul");
  check_size(b, "mul");
  return a.cwiseProduct(b);
}

Param ParameterAlgebra::scale(Scalar c, const Param& a) const {
  check_size(a, "scale");
  return c * a;
}

Param ParameterAlgebra::sqrt_select(const Param& a) const {
  check_size(a, "sqrt");
  Param r(a.size());
  for (long i = 0; i < a.size(); ++i) r(i) = std::sqrt(a(i));
  return r;
}

std::vector<Param> ParameterAlgebra::basis() const {
  std::vector<Param> out;
  for (long i = 0; i < coord_count(); ++i) out.push_back(Param::Unit(coord_count(), i));
  return out;
}

// ---------------------------------------------------------- complex scalars

ComplexScalars::ComplexScalars(double lo, double hi) : lo_(lo), hi_(hi) {}

Operator ComplexScalars::act(const Param& eps, const Operator& psi) const {
  check_size(eps, "act");
  return emergence::scale(eps(0), psi);
}

Param ComplexScalars::sample(Rng& rng) const { return uniform_modulus(rng, 1, lo_, hi_); }

// -------------------------------------------------------- nonnegative reals

NonnegativeReals::NonnegativeReals(double lo, double hi) : lo_(lo), hi_(hi) {}

bool NonnegativeReals::contains(const Param& x, double tol) const {
  return x.size() == 1 && x.allFinite() && nonnegative_real(x, tol);
}

Param NonnegativeReals::scale(Scalar c, const Param& a) const {
  check_size(a, "scale");
  return nonneg_scale(c, a, *this);
}

Param NonnegativeReals::sqrt_select(const Param& a) const { return real_sqrt(a, *this); }

Operator NonnegativeReals::act(const Param& eps, const Operator& psi) const {
  if (!contains(eps)) throw Error(ErrorCode::kNotInCarrier, "nonnegative_reals.act: parameter outside the cone");
  return emergence::scale(eps(0).real(), psi);
}

Param NonnegativeReals::sample(Rng& rng) const {
  std::uniform_real_distribution<double> d(lo_, hi_);
  return Param::Constant(1, d(rng));
}

Param NonnegativeReals::sample_dyadic_square(Rng& rng) const {
  std::uniform_int_distribution<int> k(0, 32);
  const double r = k(rng) / 16.0;
  return Param::Constant(1, r * r);
}

// ----------------------------------------------------------------- product

ProductAlgebra::ProductAlgebra(std::vector<AlgebraPtr> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw Error(ErrorCode::kBadSpec, "product algebra needs at least one factor");
  for (const auto& f : factors_) {
    offsets_.push_back(total_);
    total_ += f->coord_count();
  }
}

std::string ProductAlgebra::kind() const {
  for (const auto& f : factors_) {
    if (f->describe() != factors_.front()->describe()) return "product";
  }
  return "tuple_power";
}

Json ProductAlgebra::describe() const {
  Json j;
  j["kind"] = kind();
  if (kind() == "tuple_power") {
    j["base"] = factors_.front()->describe();
    j["k"] = factors_.size();
  } else {
    Json fs = Json::array();
    for (const auto& f : factors_) fs.push_back(f->describe());
    j["factors"] = fs;
  }
  return j;
}

int ProductAlgebra::degree() const {
  int d = 0;
  for (const auto& f : factors_) d += f->degree();
  return d;
}

bool ProductAlgebra::real_carrier() const {
  for (const auto& f : factors_) {
    if (!f->real_carrier()) return false;
  }
  return true;
}

bool ProductAlgebra::exact() const {
  for (const auto& f : factors_) {
    if (!f->exact()) return false;
  }
  return true;
}

Param ProductAlgebra::component(const Param& x, std::size_t i) const {
  check_size(x, "component");
  return x.segment(offsets_.at(i), factors_.at(i)->coord_count());
}

bool ProductAlgebra::contains(const Param& x, double tol) const {
  if (x.size() != total_) return false;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (!factors_[i]->contains(component(x, i), tol)) return false;
  }
  return true;
}

Param ProductAlgebra::scale(Scalar c, const Param& a) const {
  Param out(total_);
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    out.segment(offsets_[i], factors_[i]->coord_count()) = factors_[i]->scale(c, component(a, i));
  }
  return out;
}

Param ProductAlgebra::sqrt_select(const Param& a) const {
  Param out(total_);
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    out.segment(offsets_[i], factors_[i]->coord_count()) = factors_[i]->sqrt_select(component(a, i));
  }
  return out;
}

Operator ProductAlgebra::act(const Param& eps, const Operator& psi) const {
  check_size(eps, "act");
  for (const auto& f : factors_) {
    if (f->coord_count() != 1) {
      throw Error(ErrorCode::kBadSpec, "product action is defined for one-dimensional factors only");
    }
  }
  if (!contains(eps)) throw Error(ErrorCode::kNotInCarrier, kind() + ".act: parameter outside the carrier");
  return Operator(psi.space(), block_representation(eps, psi.dim()) * psi.matrix());
}

std::vector<Param> ProductAlgebra::basis() const {
  std::vector<Param> out;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    for (const auto& b : factors_[i]->basis()) {
      Param p = Param::Zero(total_);
      p.segment(offsets_[i], b.size()) = b;
      out.push_back(p);
    }
  }
  return out;
}

Param ProductAlgebra::sample(Rng& rng) const {
  Param out(total_);
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    out.segment(offsets_[i], factors_[i]->coord_count()) = factors_[i]->sample(rng);
  }
  return out;
}

AlgebraPtr tuple_power(const AlgebraPtr& base, int k) {
  if (k < 1) throw Error(ErrorCode::kBadSpec, "tuple power needs k >= 1");
  return std::make_shared<ProductAlgebra>(std::vector<AlgebraPtr>(static_cast<std::size_t>(k), base));
}

// ---------------------------------------------------- centralizer diagonal

CentralizerDiagonal::CentralizerDiagonal(const Operator& psi0, int n, double sample_hi)
    : projector_(power(psi0, n)), power_(n), dim_(psi0.dim()), hi_(sample_hi) {
  if (n < 1 || !is_idempotent_power(psi0, n, 1e-10 * std::max(1.0, projector_.matrix().norm()))) {
    throw Error(ErrorCode::kBadSpec, "centralizer_diagonal: Psi0^n is not idempotent");
  }
  // d commutes with P iff d_i = d_j whenever P_ij or P_ji is nonzero.
  std::vector<int> parent(static_cast<std::size_t>(dim_));
  for (long i = 0; i < dim_; ++i) parent[i] = static_cast<int>(i);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  const Matrix& p = projector_.matrix();
  for (long i = 0; i < dim_; ++i) {
    for (long j = 0; j < dim_; ++j) {
      if (i != j && std::abs(p(i, j)) > 1e-12) parent[find(static_cast<int>(i))] = find(static_cast<int>(j));
    }
  }
  std::vector<int> label(static_cast<std::size_t>(dim_), -1);
  class_of_.resize(static_cast<std::size_t>(dim_));
  for (long i = 0; i < dim_; ++i) {
    const int r = find(static_cast<int>(i));
    if (label[r] < 0) label[r] = class_count_++;
    class_of_[i] = label[r];
  }
}

Json CentralizerDiagonal::describe() const {
  Json j;
  j["kind"] = kind();
  j["power"] = power_;
  j["classes"] = class_of_;
  return j;
}

bool CentralizerDiagonal::contains(const Param& x, double tol) const {
  if (x.size() != dim_ || !x.allFinite() || !nonnegative_real(x, tol)) return false;
  std::vector<double> seen(static_cast<std::size_t>(class_count_), -1.0);
  for (long i = 0; i < dim_; ++i) {
    double& s = seen[class_of_[i]];
    if (s < 0.0) {
      s = x(i).real();
    } else if (std::abs(s - x(i).real()) > tol * std::max(1.0, std::abs(s))) {
      return false;
    }
  }
  return true;
}

Param CentralizerDiagonal::scale(Scalar c, const Param& a) const {
  check_size(a, "scale");
  return nonneg_scale(c, a, *this);
}

Param CentralizerDiagonal::sqrt_select(const Param& a) const { return real_sqrt(a, *this); }

Operator CentralizerDiagonal::act(const Param& eps, const Operator& psi) const {
  if (!contains(eps)) throw Error(ErrorCode::kNotInCarrier, "centralizer_diagonal.act: parameter outside the carrier");
  if (psi.dim() != dim_) throw Error(ErrorCode::kSpaceMismatch, "centralizer_diagonal.act: dimension");
  return Operator(psi.space(), eps.real().cast<Scalar>().asDiagonal() * psi.matrix());
}

std::vector<Param> CentralizerDiagonal::basis() const {
  std::vector<Param> out(static_cast<std::size_t>(class_count_), Param::Zero(dim_));
  for (long i = 0; i < dim_; ++i) out[class_of_[i]](i) = 1.0;
  return out;
}

Param CentralizerDiagonal::sample(Rng& rng) const {
  std::uniform_real_distribution<double> d(0.25, hi_);
  std::vector<double> v(static_cast<std::size_t>(class_count_));
  for (auto& x : v) x = d(rng);
  Param out(dim_);
  for (long i = 0; i < dim_; ++i) out(i) = v[class_of_[i]];
  return out;
}

// --------------------------------------------------------- boolean complex

BooleanComplex::BooleanComplex(int m) : m_(m) {
  if (m < 1) throw Error(ErrorCode::kBadSpec, "boolean_complex needs m >= 1");
}

Json BooleanComplex::describe() const {
  Json j;
  j["kind"] = kind();
  j["m"] = m_;
  return j;
}

Operator BooleanComplex::representation(const Param& eps, const SpacePtr& space) const {
  check_size(eps, "representation");
  return Operator(space, block_representation(eps, space->dim()));
}

Operator BooleanComplex::act(const Param& eps, const Operator& psi) const {
  check_size(eps, "act");
  return Operator(psi.space(), block_representation(eps, psi.dim()) * psi.matrix());
}

Param BooleanComplex::sample(Rng& rng) const { return uniform_modulus(rng, m_, 0.5, 2.0); }

Param BooleanComplex::sample_idempotent(Rng& rng) const {
  std::bernoulli_distribution b(0.5);
  Param p(m_);
  for (int i = 0; i < m_; ++i) p(i) = b(rng) ? 1.0 : 0.0;
  return p;
}

// --------------------------------------------------------------- circulant

CirculantAlgebra::CirculantAlgebra(SpacePtr space) : space_(std::move(space)) {
  if (!space_ || !space_->geometry() || !space_->geometry()->periodic) {
    throw Error(ErrorCode::kBadSpec, "circulant algebra needs a periodic grid space");
  }
  const long n = space_->dim();
  fourier_.resize(n, n);
  for (long k = 0; k < n; ++k) fourier_.col(k) = fourier_mode(*space_->geometry(), k);
}

Json CirculantAlgebra::describe() const {
  Json j;
  j["kind"] = kind();
  j["grid"] = grid_to_json(*space_->geometry());
  return j;
}

Operator CirculantAlgebra::operator_of(const Param& symbol) const {
  check_size(symbol, "operator_of");
  OperatorTags tags;
  tags.circulant = true;
  return Operator(space_, fourier_ * symbol.asDiagonal() * fourier_.adjoint(), tags);
}

Operator CirculantAlgebra::act(const Param& eps, const Operator& psi) const {
  if (!(*psi.space() == *space_)) throw Error(ErrorCode::kSpaceMismatch, "circulant.act: operator on a different space");
  return compose(operator_of(eps), psi);
}

Param CirculantAlgebra::sample(Rng& rng) const { return uniform_modulus(rng, coord_count(), 0.5, 2.0); }

// ---------------------------------------------------------- diagnostics

CompatibilityReport check_action_compatibility(const ParameterAlgebra& algebra,
                                               const std::vector<ActionSample>& samples, double tol) {
  CompatibilityReport r;
  r.samples = samples.size();
  if (samples.empty()) return r;
  for (const auto& s : samples) {
    const Operator both = compose(s.psi, s.psi_prime);
    const Operator acted_both = algebra.act(s.eps, both);
    const double ref = acted_both.matrix().norm();
    r.left_composition_residual = std::max(
        r.left_composition_residual,
        rel(frobenius_distance(compose(algebra.act(s.eps, s.psi), s.psi_prime), acted_both), ref));
    r.right_composition_residual = std::max(
        r.right_composition_residual,
        rel(frobenius_distance(compose(s.psi, algebra.act(s.eps, s.psi_prime)), acted_both), ref));
    const Operator lhs = algebra.act(algebra.mul(s.eps, s.delta), s.psi);
    const Operator rhs = algebra.act(s.eps, algebra.act(s.delta, s.psi));
    r.product_residual = std::max(r.product_residual, rel(frobenius_distance(lhs, rhs), rhs.matrix().norm()));
  }
  r.left_composition_holds = r.left_composition_residual <= tol;
  r.right_composition_holds = r.right_composition_residual <= tol;
  r.product_holds = r.product_residual <= tol;
  return r;
}

Param solve_action_on_identity(const ParameterAlgebra& algebra, const Operator& a, double tol) {
  const Operator id = Operator::identity(a.space());
  const auto basis = algebra.basis();
  const long n2 = a.dim() * a.dim();
  const long b = static_cast<long>(basis.size());
  Matrix cols(n2, b);
  for (long i = 0; i < b; ++i) {
    cols.col(i) = algebra.act(basis[i], id).matrix().reshaped();
  }
  const Vector target = a.matrix().reshaped();
  // Disjoint supports: read each coefficient off one entry, which is exact on exact inputs.
  std::vector<long> anchor(b, -1);
  bool disjoint = true;
  for (long r = 0; r < n2 && disjoint; ++r) {
    int hits = 0;
    for (long i = 0; i < b; ++i) {
      if (cols(r, i) == 0.0) continue;
      ++hits;
      if (anchor[i] < 0) anchor[i] = r;
    }
    disjoint = hits <= 1;
  }
  disjoint = disjoint && std::none_of(anchor.begin(), anchor.end(), [](long r) { return r < 0; });
  Vector coeff;
  if (disjoint) {
    coeff.resize(b);
    for (long i = 0; i < b; ++i) coeff(i) = target(anchor[i]) / cols(anchor[i], i);
    if (algebra.real_carrier()) coeff = coeff.real().cast<Scalar>();
  } else if (algebra.real_carrier()) {
    Eigen::MatrixXd m(2 * n2, b);
    m << cols.real(), cols.imag();
    Eigen::VectorXd t(2 * n2);
    t << target.real(), target.imag();
    coeff = m.colPivHouseholderQr().solve(t).cast<Scalar>();
  } else {
    coeff = cols.colPivHouseholderQr().solve(target);
  }
  const double ref = std::max(1.0, target.norm());
  const double residual = (cols * coeff - target).norm() / ref;
  if (residual > tol) {
    throw Error(ErrorCode::kNotInIdentityOrbit,
                algebra.kind() + ": operator is not act(e, I) for any e (relative residual " +
                    std::to_string(residual) + ")")
        .with_residual(residual);
  }
  Param eps = algebra.zero();
  for (long i = 0; i < b; ++i) eps += coeff(i) * basis[i];
  if (!algebra.contains(eps, std::sqrt(tol))) {
    throw Error(ErrorCode::kNotInIdentityOrbit, algebra.kind() + ": identity-orbit solution leaves the carrier")
        .with_residual(residual);
  }
  if (algebra.real_carrier()) eps = eps.real().cast<Scalar>();
  return eps;
}

// ------------------------------------------------------ coefficient function

CoefficientFunction::CoefficientFunction(CoefficientForm form, Scalar a, Scalar b, double p,
                                         CoefficientDomain domain)
    : form_(form), a_(a), b_(b), p_(p), domain_(domain) {
  if (a_ == 0.0) nowhere_vanishing_ = false;
}

CoefficientFunction CoefficientFunction::linear(Scalar a, CoefficientDomain d) { return {CoefficientForm::kLinear, a, 0.0, 1.0, d}; }
CoefficientFunction CoefficientFunction::affine(Scalar a, Scalar b, CoefficientDomain d) {
  return {CoefficientForm::kAffine, a, b, 1.0, d};
}
CoefficientFunction CoefficientFunction::exp(Scalar a, Scalar b, CoefficientDomain d) {
  if (b == 0.0) throw Error(ErrorCode::kBadSpec, "exp coefficient needs b != 0");
  return {CoefficientForm::kExp, a, b, 1.0, d};
}
CoefficientFunction CoefficientFunction::power(Scalar a, double p, CoefficientDomain d) {
  if (p == 0.0) throw Error(ErrorCode::kBadSpec, "power coefficient needs p != 0");
  return {CoefficientForm::kPower, a, 0.0, p, d};
}
CoefficientFunction CoefficientFunction::constant(Scalar c) {
  return {CoefficientForm::kConstant, c, 0.0, 0.0, CoefficientDomain::kComplex};
}

CoefficientFunction CoefficientFunction::with_nowhere_vanishing(bool claim) const {
  CoefficientFunction f = *this;
  f.nowhere_vanishing_ = claim;
  return f;
}

bool CoefficientFunction::affine_in_parameter() const {
  return form_ == CoefficientForm::kLinear || form_ == CoefficientForm::kAffine ||
         form_ == CoefficientForm::kConstant;
}

Scalar CoefficientFunction::eval_scalar(Scalar x) const {
  switch (form_) {
    case CoefficientForm::kLinear: return a_ * x;
    case CoefficientForm::kAffine: return a_ * x + b_;
    case CoefficientForm::kExp: return a_ * std::exp(b_ * x);
    case CoefficientForm::kPower:
      if (x == 0.0) return p_ > 0 ? Scalar(0.0) : Scalar(std::numeric_limits<double>::infinity());
      if (x.imag() == 0.0 && x.real() > 0.0) return a_ * std::pow(x.real(), p_);
      return a_ * std::pow(x, p_);
    case CoefficientForm::kConstant: return a_;
  }
  return 0.0;
}

Scalar CoefficientFunction::preimage_scalar(Scalar c, double tol) const {
  auto none = [&](const std::string& why) -> Error {
    return Error(ErrorCode::kNoPreimage, describe() + " has no preimage of " + fmt_scalar(c) + ": " + why);
  };
  const bool real_domain = domain_ != CoefficientDomain::kComplex;
  Scalar x = 0.0;
  switch (form_) {
    case CoefficientForm::kConstant:
      if (std::abs(c - a_) > tol * std::max(1.0, std::abs(a_))) throw none("value differs from the constant");
      return 0.0;
    case CoefficientForm::kLinear:
    case CoefficientForm::kAffine:
      if (a_ == 0.0) throw none("zero slope");
      x = (c - b_) / a_;
      break;
    case CoefficientForm::kExp: {
      const Scalar ratio = c / a_;
      if (a_ == 0.0 || ratio == 0.0) throw none("exponential never takes this value");
      const bool real_data = a_.imag() == 0.0 && b_.imag() == 0.0;
      if (real_domain && real_data) {
        if (std::abs(c.imag()) > tol * std::max(1.0, std::abs(c)) || ratio.real() <= 0.0) {
          throw none("value outside the range of the real exponential");
        }
        // Bracketing root-find on a e^{b x} - c, monotone in x.
        const double ar = a_.real(), br = b_.real(), cr = c.real();
        auto g = [&](double t) { return ar * std::exp(br * t) - cr; };
        double lo = -1.0, hi = 1.0;
        double glo = g(lo), ghi = g(hi);
        for (int i = 0; i < 64 && glo * ghi > 0.0; ++i) {
          lo *= 2.0;
          hi *= 2.0;
          glo = g(lo);
          ghi = g(hi);
        }
        if (glo * ghi > 0.0) throw none("root bracket not found");
        std::uintmax_t iters = 200;
        auto [l, h] = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi,
                                                        boost::math::tools::eps_tolerance<double>(52), iters);
        x = 0.5 * (l + h);
      } else {
        x = std::log(ratio) / b_;
      }
      break;
    }
    case CoefficientForm::kPower: {
      if (a_ == 0.0) throw none("zero prefactor");
      const Scalar ratio = c / a_;
      if (real_domain && std::abs(ratio.imag()) <= tol * std::max(1.0, std::abs(ratio))) {
        const double r = ratio.real();
        const double rp = std::round(p_);
        const bool odd = rp == p_ && std::fmod(std::abs(rp), 2.0) == 1.0;
        if (r < 0.0 && !odd) throw none("negative value of an even or fractional power");
        x = r < 0.0 ? -std::pow(-r, 1.0 / p_) : std::pow(r, 1.0 / p_);
      } else {
        x = ratio == 0.0 ? Scalar(0.0) : std::pow(ratio, 1.0 / p_);
      }
      break;
    }
  }
  if (real_domain) {
    if (std::abs(x.imag()) > tol * std::max(1.0, std::abs(x))) throw none("preimage is not real");
    x = x.real();
    if (domain_ == CoefficientDomain::kNonnegative) {
      if (x.real() < -tol) throw none("preimage is negative");
      x = std::max(0.0, x.real());
    }
  }
  const double miss = std::abs(eval_scalar(x) - c);
  if (!(miss <= 1e3 * std::max(tol, 1e-15) * std::max(1.0, std::abs(c)))) {
    throw std::move(none("value outside the range")).with_residual(miss);
  }
  return x;
}

Param CoefficientFunction::eval(const Param& x) const {
  Param out(x.size());
  for (long i = 0; i < x.size(); ++i) out(i) = eval_scalar(x(i));
  return out;
}

Param CoefficientFunction::preimage(const Param& c, double tol) const {
  Param out(c.size());
  for (long i = 0; i < c.size(); ++i) out(i) = preimage_scalar(c(i), tol);
  return out;
}

std::string CoefficientFunction::describe() const {
  switch (form_) {
    case CoefficientForm::kLinear: return "linear(" + fmt_scalar(a_) + ")";
    case CoefficientForm::kAffine: return "affine(" + fmt_scalar(a_) + ", " + fmt_scalar(b_) + ")";
    case CoefficientForm::kExp: return "exp(" + fmt_scalar(a_) + ", " + fmt_scalar(b_) + ")";
    case CoefficientForm::kPower: return "power(" + fmt_scalar(a_) + ", " + fmt_scalar(p_) + ")";
    case CoefficientForm::kConstant: return "constant(" + fmt_scalar(a_) + ")";
  }
  return "?";
}

Json CoefficientFunction::to_json() const {
  Json j;
  switch (form_) {
    case CoefficientForm::kLinear: j["form"] = "linear"; j["a"] = scalar_json(a_); break;
    case CoefficientForm::kAffine: j["form"] = "affine"; j["a"] = scalar_json(a_); j["b"] = scalar_json(b_); break;
    case CoefficientForm::kExp: j["form"] = "exp"; j["a"] = scalar_json(a_); j["b"] = scalar_json(b_); break;
    case CoefficientForm::kPower: j["form"] = "power"; j["a"] = scalar_json(a_); j["p"] = p_; break;
    case CoefficientForm::kConstant: j["form"] = "constant"; j["c"] = scalar_json(a_); break;
  }
  if (domain_ == CoefficientDomain::kReal) j["domain"] = "real";
  if (domain_ == CoefficientDomain::kNonnegative) j["domain"] = "nonnegative";
  if (!nowhere_vanishing_ && a_ != 0.0) j["nowhere_vanishing"] = false;
  return j;
}

CoefficientFunction CoefficientFunction::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("form")) throw Error(ErrorCode::kSchemaError, "coefficient needs 'form'");
  try {
    const std::string form = j.at("form").get<std::string>();
    const std::string dom = j.value("domain", std::string("complex"));
    CoefficientDomain d = CoefficientDomain::kComplex;
    if (dom == "real") {
      d = CoefficientDomain::kReal;
    } else if (dom == "nonnegative") {
      d = CoefficientDomain::kNonnegative;
    } else if (dom != "complex") {
      throw Error(ErrorCode::kSchemaError, "unknown coefficient domain '" + dom + "'");
    }
    auto need = [&](const char* k) -> const Json& {
      if (!j.contains(k)) throw Error(ErrorCode::kSchemaError, form + " coefficient needs '" + k + "'");
      return j.at(k);
    };
    CoefficientFunction f = CoefficientFunction::constant(0.0);
    if (form == "linear") {
      f = linear(scalar_from(need("a")), d);
    } else if (form == "affine") {
      f = affine(scalar_from(need("a")), scalar_from(need("b")), d);
    } else if (form == "exp") {
      f = exp(scalar_from(need("a")), scalar_from(need("b")), d);
    } else if (form == "power") {
      f = power(scalar_from(need("a")), need("p").get<double>(), d);
    } else if (form == "constant") {
      f = constant(scalar_from(need("c")));
    } else {
      throw Error(ErrorCode::kSchemaError, "unknown coefficient form '" + form + "'");
    }
    if (j.contains("nowhere_vanishing")) f = f.with_nowhere_vanishing(j.at("nowhere_vanishing").get<bool>());
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad coefficient: ") + e.what());
  }
}

Param coefficient_preimage(const CoefficientFunction& f, const ParameterAlgebra& algebra, const Param& c,
                           double tol) {
  Param x = f.preimage(c, tol);
  if (!algebra.contains(x, std::max(tol, 1e-12))) {
    throw Error(ErrorCode::kNoPreimage, f.describe() + ": preimage lies outside the " + algebra.kind() + " carrier");
  }
  if (algebra.real_carrier()) x = x.real().cast<Scalar>();
  return x;
}

// ------------------------------------------------------ functional calculus

bool FunctionalCalculus::unital() const {
  for (const auto& [f, op] : entries) {
    if (f.form() == CoefficientForm::kConstant && f.a() == 1.0) return true;
  }
  return false;
}

Operator canonical_calculus(const CoefficientFunction& f, const ParameterAlgebra& algebra, const SpacePtr& space,
                            double tol) {
  std::vector<Scalar> probes{1.0, 2.5, 0.5};
  if (!algebra.real_carrier()) probes.emplace_back(0.75, 0.5);
  const Operator id = Operator::identity(space);
  std::optional<Operator> first;
  for (const Scalar s : probes) {
    const Param eps = s * algebra.one();
    const Param fe = f.eval(eps);
    for (long i = 0; i < fe.size(); ++i) {
      if (std::abs(fe(i)) == 0.0 || !std::isfinite(std::abs(fe(i)))) {
        throw Error(ErrorCode::kNotWellDefined, f.describe() + " vanishes at a probe parameter");
      }
    }
    const Operator psi = algebra.act(eps.cwiseQuotient(fe), id);
    if (!first) {
      first = psi;
      continue;
    }
    const double d = rel(frobenius_distance(psi, *first), first->matrix().norm());
    if (d > tol) {
      throw Error(ErrorCode::kNotWellDefined,
                  "e / " + f.describe() + "(e) depends on e; no canonical calculus operator")
          .with_residual(d);
    }
  }
  return *first;
}

CalculusReport validate_functional_calculus(const FunctionalCalculus& calculus, const ParameterAlgebra& algebra,
                                            const std::vector<Param>& eps_samples,
                                            const std::vector<Operator>& psi_samples, double tol) {
  CalculusReport r;
  r.unital = calculus.unital();
  if (calculus.entries.empty()) {
    r.warning = "empty calculus: vacuously valid";
    return r;
  }
  if (r.unital) r.warning = "unital entry g = 1 requires act(e, Psi) to be independent of e";
  for (const auto& [f, psi_f] : calculus.entries) {
    for (const auto& eps : eps_samples) {
      for (const auto& psi : psi_samples) {
        const Operator rhs = algebra.act(eps, psi);
        const Operator lhs = compose(psi_f, algebra.act(f.eval(eps), psi));
        r.max_residual = std::max(r.max_residual, rel(frobenius_distance(lhs, rhs), rhs.matrix().norm()));
        ++r.samples;
      }
    }
  }
  r.pass = r.max_residual <= tol;
  return r;
}

// ------------------------------------------------------------ embeddings

Param embed_parameters(const Param& eps, int l, int k, long block) {
  if (l > k) {
    throw Error(ErrorCode::kDegreeMismatch,
                "cannot embed degree " + std::to_string(l) + " into degree " + std::to_string(k));
  }
  if (eps.size() != l * block) {
    throw Error(ErrorCode::kDegreeMismatch, "parameter has " + std::to_string(eps.size()) +
                                                " coordinates, expected " + std::to_string(l * block));
  }
  Param out = Param::Zero(k * block);
  out.head(eps.size()) = eps;
  return out;
}

ScalarMap pullback(ScalarMap f, int l, int k, long block) {
  if (l > k) throw Error(ErrorCode::kDegreeMismatch, "pullback needs l <= k");
  return [f = std::move(f), l, k, block](const Param& eps) { return f(embed_parameters(eps, l, k, block)); };
}

AlgebraPtr algebra_from_json(const Json& j, const SpacePtr& space) {
  if (!j.is_object() || !j.contains("kind")) throw Error(ErrorCode::kSchemaError, "algebra needs 'kind'");
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "complex_scalars") return std::make_shared<ComplexScalars>();
    if (kind == "nonnegative_reals") return std::make_shared<NonnegativeReals>();
    if (kind == "boolean_complex") return std::make_shared<BooleanComplex>(j.at("m").get<int>());
    if (kind == "circulant") return std::make_shared<CirculantAlgebra>(space);
    if (kind == "tuple_power") return tuple_power(algebra_from_json(j.at("base"), space), j.at("k").get<int>());
    if (kind == "product") {
      std::vector<AlgebraPtr> fs;
      for (const auto& f : j.at("factors")) fs.push_back(algebra_from_json(f, space));
      return std::make_shared<ProductAlgebra>(std::move(fs));
    }
    if (kind == "centralizer_diagonal") {
      return std::make_shared<CentralizerDiagonal>(Operator(space, matrix_from_json(j.at("psi0"))),
                                                   j.value("power", 1));
    }
    throw Error(ErrorCode::kSchemaError, "unknown algebra kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("bad algebra: ") + e.what());
  }
}

}  // namespace emergence
