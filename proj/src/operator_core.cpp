#include "emergence/operator_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace emergence {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool matrices_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

bool is_scalar_multiple_of_identity(const Matrix& m) {
  const Scalar d = m(0, 0);
  return (m - d * Matrix::Identity(m.rows(), m.cols())).norm() == 0.0;
}

}  // namespace

// ---------------------------------------------------------------- geometry

long GridGeometry::sites() const {
  long n = 1;
  for (int d : dims) n *= d;
  return n;
}

long GridGeometry::flat_index(const std::vector<int>& coords) const {
  long idx = 0;
  for (std::size_t a = 0; a < dims.size(); ++a) {
    const int d = dims[a];
    const int x = ((coords[a] % d) + d) % d;
    idx = idx * d + x;
  }
  return idx;
}

std::vector<int> GridGeometry::coords_of(long flat) const {
  std::vector<int> coords(dims.size());
  for (std::size_t a = dims.size(); a-- > 0;) {
    coords[a] = static_cast<int>(flat % dims[a]);
    flat /= dims[a];
  }
  return coords;
}

// ---------------------------------------------------------------- pairing

PairingForm::PairingForm(Matrix gram, std::vector<double> weights, Symmetry symmetry)
    : gram_(std::move(gram)), weights_(std::move(weights)), symmetry_(symmetry) {
  if (gram_.rows() == 0 || gram_.rows() != gram_.cols()) {
    throw Error(ErrorCode::kBadSpec, "pairing gram matrix must be square and nonempty");
  }
  if (static_cast<long>(weights_.size()) != gram_.rows()) {
    throw Error(ErrorCode::kBadSpec, "pairing needs one quadrature weight per basis vector");
  }
  for (double w : weights_) {
    if (!(w > 0.0)) throw Error(ErrorCode::kBadSpec, "quadrature weights must be positive");
  }
  const Matrix partner = symmetry_ == Symmetry::kSymmetric ? Matrix(gram_.transpose())
                                                           : Matrix(gram_.adjoint());
  if ((gram_ - partner).norm() > 1e-12 * std::max(1.0, gram_.norm())) {
    throw Error(ErrorCode::kBadSpec, "gram matrix does not match its symmetry flag");
  }
  Eigen::FullPivLU<Matrix> lu(gram_);
  if (!lu.isInvertible()) throw Error(ErrorCode::kBadSpec, "pairing is degenerate");
  gram_inv_ = lu.inverse();
}

PairingForm PairingForm::euclidean(long dim, Symmetry symmetry) {
  return PairingForm(Matrix::Identity(dim, dim), std::vector<double>(dim, 1.0), symmetry);
}

PairingForm PairingForm::weighted(const std::vector<double>& weights, Symmetry symmetry) {
  Vector w(static_cast<long>(weights.size()));
  for (std::size_t i = 0; i < weights.size(); ++i) w(static_cast<long>(i)) = weights[i];
  return PairingForm(Matrix(w.asDiagonal()), weights, symmetry);
}

PairingForm PairingForm::custom(Matrix gram, std::vector<double> weights, Symmetry symmetry) {
  return PairingForm(std::move(gram), std::move(weights), symmetry);
}

Scalar PairingForm::apply(const Vector& x, const Vector& y) const {
  if (symmetry_ == Symmetry::kSymmetric) return (x.transpose() * gram_ * y)(0, 0);
  return (x.adjoint() * gram_ * y)(0, 0);
}

bool PairingForm::operator==(const PairingForm& other) const {
  return symmetry_ == other.symmetry_ && weights_ == other.weights_ &&
         matrices_equal(gram_, other.gram_);
}

// ---------------------------------------------------------------- field space

FieldSpace::FieldSpace(long dim, ScalarKind kind, PairingForm pairing,
                       std::optional<GridGeometry> geometry)
    : dim_(dim), kind_(kind), pairing_(std::move(pairing)), geometry_(std::move(geometry)) {
  if (dim_ < 1) throw Error(ErrorCode::kBadSpec, "field space dimension must be >= 1");
  if (pairing_.dim() != dim_) throw Error(ErrorCode::kBadSpec, "pairing size differs from dim");
  if (geometry_) {
    if (geometry_->dims.empty() || geometry_->dims.size() != geometry_->spacing.size()) {
      throw Error(ErrorCode::kBadSpec, "grid needs matching dims and spacing lists");
    }
    for (std::size_t a = 0; a < geometry_->dims.size(); ++a) {
      if (geometry_->dims[a] < 2) throw Error(ErrorCode::kBadSpec, "grid axis length must be >= 2");
      if (!(geometry_->spacing[a] > 0.0)) throw Error(ErrorCode::kBadSpec, "grid spacing must be > 0");
    }
    if (!geometry_->periodic) throw Error(ErrorCode::kBadSpec, "only periodic grids are supported");
    if (geometry_->sites() != dim_) throw Error(ErrorCode::kBadSpec, "grid sites differ from dim");
  }
}

std::shared_ptr<const FieldSpace> FieldSpace::on_grid(GridGeometry grid, ScalarKind kind,
                                                      Symmetry symmetry) {
  if (grid.dims.empty() || grid.dims.size() != grid.spacing.size()) {
    throw Error(ErrorCode::kBadSpec, "grid needs matching dims and spacing lists");
  }
  double cell = 1.0;
  for (double h : grid.spacing) cell *= h;
  const long n = grid.sites();
  return std::make_shared<const FieldSpace>(
      n, kind, PairingForm::weighted(std::vector<double>(n, cell), symmetry), std::move(grid));
}

std::shared_ptr<const FieldSpace> FieldSpace::euclidean(long dim, ScalarKind kind) {
  return std::make_shared<const FieldSpace>(dim, kind, PairingForm::euclidean(dim));
}

bool FieldSpace::operator==(const FieldSpace& other) const {
  return dim_ == other.dim_ && kind_ == other.kind_ && geometry_ == other.geometry_ &&
         pairing_ == other.pairing_;
}

// ---------------------------------------------------------------- operator

Operator::Operator(SpacePtr space, Matrix matrix, OperatorTags tags)
    : space_(std::move(space)), matrix_(std::move(matrix)), tags_(std::move(tags)) {
  if (!space_) throw Error(ErrorCode::kBadSpec, "operator needs a field space");
  if (matrix_.rows() != space_->dim() || matrix_.cols() != space_->dim()) {
    std::ostringstream os;
    os << "operator matrix is " << matrix_.rows() << "x" << matrix_.cols()
       << " but the space has dim " << space_->dim();
    throw Error(ErrorCode::kSpaceMismatch, os.str());
  }
}

Operator Operator::identity(SpacePtr space) {
  const long n = space->dim();
  OperatorTags tags;
  tags.circulant = space->geometry().has_value();
  tags.diff_order = 0;
  return Operator(std::move(space), Matrix::Identity(n, n), tags);
}

Operator Operator::zero(SpacePtr space) {
  const long n = space->dim();
  OperatorTags tags;
  tags.circulant = space->geometry().has_value();
  return Operator(std::move(space), Matrix::Zero(n, n), tags);
}

Operator Operator::with_tags(OperatorTags tags) const { return Operator(space_, matrix_, std::move(tags)); }

bool same_space(const Operator& a, const Operator& b) {
  return a.space() == b.space() || *a.space() == *b.space();
}

void require_same_space(const Operator& a, const Operator& b, const char* op) {
  if (!same_space(a, b)) {
    throw Error(ErrorCode::kSpaceMismatch, std::string(op) + ": operands live on different field spaces");
  }
}

namespace {

OperatorTags merge_tags(const OperatorTags& a, const OperatorTags& b, bool additive) {
  OperatorTags t;
  t.circulant = a.circulant && b.circulant;
  if (a.diff_order && b.diff_order) {
    t.diff_order = additive ? std::max(*a.diff_order, *b.diff_order) : *a.diff_order + *b.diff_order;
  }
  if (a.scheme == b.scheme) t.scheme = a.scheme;
  return t;
}

}  // namespace

Operator compose(const Operator& a, const Operator& b) {
  require_same_space(a, b, "compose");
  return Operator(a.space(), a.matrix() * b.matrix(), merge_tags(a.tags(), b.tags(), false));
}

Operator add(const Operator& a, const Operator& b) {
  require_same_space(a, b, "add");
  return Operator(a.space(), a.matrix() + b.matrix(), merge_tags(a.tags(), b.tags(), true));
}

Operator subtract(const Operator& a, const Operator& b) {
  require_same_space(a, b, "subtract");
  return Operator(a.space(), a.matrix() - b.matrix(), merge_tags(a.tags(), b.tags(), true));
}

Operator scale(Scalar c, const Operator& a) { return Operator(a.space(), c * a.matrix(), a.tags()); }

Operator adjoint_wrt_pairing(const Operator& a) {
  const PairingForm& p = a.space()->pairing();
  const Matrix star = p.symmetry() == Symmetry::kSymmetric ? Matrix(a.matrix().transpose())
                                                           : Matrix(a.matrix().adjoint());
  OperatorTags tags = a.tags();
  tags.circulant = tags.circulant && is_scalar_multiple_of_identity(p.gram());
  return Operator(a.space(), p.gram_inverse() * star * p.gram(), tags);
}

Operator sym_part(const Operator& a) {
  const Operator adj = adjoint_wrt_pairing(a);
  OperatorTags tags = a.tags();
  tags.circulant = a.tags().circulant && adj.tags().circulant;
  return Operator(a.space(), 0.5 * (a.matrix() + adj.matrix()), tags);
}

Scalar lagrangian_value(const FieldSpace& space, const Operator& a, const Vector& phi) {
  if (!(space == *a.space())) throw Error(ErrorCode::kSpaceMismatch, "lagrangian_value: operator space");
  if (phi.size() != space.dim()) throw Error(ErrorCode::kSpaceMismatch, "lagrangian_value: field size");
  return space.pairing().apply(phi, a.matrix() * phi);
}

Operator power(const Operator& a, int n) {
  if (n < 0) throw Error(ErrorCode::kBadSpec, "power: exponent must be >= 0");
  Operator out = Operator::identity(a.space());
  OperatorTags tags = a.tags();
  if (tags.diff_order) tags.diff_order = *tags.diff_order * n;
  if (n == 0) {
    tags.diff_order = 0;
    tags.scheme.clear();
  }
  Matrix m = Matrix::Identity(a.dim(), a.dim());
  for (int i = 0; i < n; ++i) m = m * a.matrix();
  return Operator(a.space(), std::move(m), tags);
}

bool is_idempotent_power(const Operator& a, int n, double tol) {
  const Operator an = power(a, n);
  const Operator a2n = power(a, 2 * n);
  return frobenius_distance(a2n, an) <= tol;
}

double frobenius(const Matrix& m) { return m.norm(); }

double frobenius_distance(const Operator& a, const Operator& b) {
  require_same_space(a, b, "frobenius_distance");
  return (a.matrix() - b.matrix()).norm();
}

// ---------------------------------------------------------------- spectral

namespace {

const GridGeometry& require_grid(const Operator& a, const char* op) {
  if (!a.space()->geometry()) {
    throw Error(ErrorCode::kBadSpec, std::string(op) + ": operator space has no grid geometry");
  }
  return *a.space()->geometry();
}

double phase(const GridGeometry& grid, const std::vector<int>& k, const std::vector<int>& x) {
  double acc = 0.0;
  for (int ax = 0; ax < grid.axes(); ++ax) {
    acc += static_cast<double>(k[ax]) * static_cast<double>(x[ax]) / grid.dims[ax];
  }
  return kTwoPi * acc;
}

}  // namespace

Vector fourier_symbol(const Operator& a) {
  const GridGeometry& grid = require_grid(a, "fourier_symbol");
  const long n = grid.sites();
  Vector symbol = Vector::Zero(n);
  for (long k = 0; k < n; ++k) {
    const auto kc = grid.coords_of(k);
    Scalar acc = 0.0;
    for (long x = 0; x < n; ++x) {
      const Scalar v = a.matrix()(0, x);
      if (v == Scalar(0.0)) continue;
      acc += v * std::polar(1.0, phase(grid, kc, grid.coords_of(x)));
    }
    symbol(k) = acc;
  }
  return symbol;
}

Operator circulant_from_symbol(SpacePtr space, const Vector& symbol, OperatorTags tags) {
  if (!space->geometry()) throw Error(ErrorCode::kBadSpec, "circulant_from_symbol: space has no grid");
  const GridGeometry& grid = *space->geometry();
  const long n = grid.sites();
  if (symbol.size() != n) throw Error(ErrorCode::kSpaceMismatch, "circulant_from_symbol: symbol size");
  // First row r(d) = (1/n) sum_k s_k e^{-i theta_k . d}; R[i, j] = r(x_j - x_i).
  Vector row = Vector::Zero(n);
  for (long d = 0; d < n; ++d) {
    const auto dc = grid.coords_of(d);
    Scalar acc = 0.0;
    for (long k = 0; k < n; ++k) {
      acc += symbol(k) * std::polar(1.0, -phase(grid, grid.coords_of(k), dc));
    }
    row(d) = acc / static_cast<double>(n);
  }
  if (space->scalar_kind() == ScalarKind::kReal && row.imag().norm() <= 1e-13 * std::max(1.0, row.norm())) {
    row = row.real().cast<Scalar>();
  }
  Matrix m(n, n);
  for (long i = 0; i < n; ++i) {
    const auto xi = grid.coords_of(i);
    for (long j = 0; j < n; ++j) {
      auto xj = grid.coords_of(j);
      for (int ax = 0; ax < grid.axes(); ++ax) xj[ax] -= xi[ax];
      m(i, j) = row(grid.flat_index(xj));
    }
  }
  tags.circulant = true;
  return Operator(std::move(space), std::move(m), std::move(tags));
}

Vector fourier_mode(const GridGeometry& grid, long k) {
  const long n = grid.sites();
  const auto kc = grid.coords_of(k);
  Vector v(n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (long x = 0; x < n; ++x) v(x) = norm * std::polar(1.0, phase(grid, kc, grid.coords_of(x)));
  return v;
}

bool commutes_with_shifts(const Operator& a, double tol) {
  if (!a.space()->geometry()) return false;
  const GridGeometry& grid = *a.space()->geometry();
  const double scale_ref = std::max(1.0, a.matrix().norm());
  for (int ax = 0; ax < grid.axes(); ++ax) {
    OperatorSpec s;
    s.kind = OperatorKind::kShift;
    s.grid = grid;
    s.axis = ax;
    const Operator shift = make_discrete_operator(s, a.space());
    const Matrix comm = a.matrix() * shift.matrix() - shift.matrix() * a.matrix();
    if (comm.norm() > tol * scale_ref) return false;
  }
  return true;
}

Operator right_inverse(const Operator& a, InverseMethod method, double tol) {
  if (method == InverseMethod::kAuto) {
    method = (a.tags().circulant && a.space()->geometry()) ? InverseMethod::kSpectral
                                                          : InverseMethod::kPseudoinverse;
  }
  const long n = a.dim();
  const Matrix eye = Matrix::Identity(n, n);

  if (method == InverseMethod::kSpectral) {
    if (!a.tags().circulant) {
      throw Error(ErrorCode::kBadSpec, "right_inverse: spectral method needs a circulant-tagged operator");
    }
    require_grid(a, "right_inverse");
    const Vector symbol = fourier_symbol(a);
    const double smax = symbol.cwiseAbs().maxCoeff();
    const double floor = 1e-12 * std::max(1.0, smax);
    Vector inv(symbol.size());
    std::optional<long> vanishing;
    for (long k = 0; k < symbol.size(); ++k) {
      if (std::abs(symbol(k)) <= floor) {
        if (!vanishing) vanishing = k;
        inv(k) = 0.0;
      } else {
        inv(k) = 1.0 / symbol(k);
      }
    }
    OperatorTags tags;
    if (a.tags().diff_order) tags.diff_order = -*a.tags().diff_order;
    const Operator r = circulant_from_symbol(a.space(), inv, tags);
    const double residual = (a.matrix() * r.matrix() - eye).norm();
    if (vanishing || residual > tol) {
      std::ostringstream os;
      os << "spectral right inverse residual " << residual;
      Error err(ErrorCode::kNotRightInvertible, os.str());
      err.residual = residual;
      if (vanishing) {
        err = Error(ErrorCode::kNotRightInvertible,
                    "Fourier symbol vanishes at frequency " + std::to_string(*vanishing));
        err.residual = residual;
        err.frequency = *vanishing;
      }
      throw err;
    }
    return r;
  }

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a.matrix());
  const Matrix pinv = cod.pseudoInverse();
  const double residual = (a.matrix() * pinv - eye).norm();
  if (residual > tol) {
    std::ostringstream os;
    os << "pseudoinverse residual " << residual << " exceeds tolerance " << tol;
    throw Error(ErrorCode::kNotRightInvertible, os.str()).with_residual(residual);
  }
  return Operator(a.space(), pinv, OperatorTags{a.tags().circulant, std::nullopt, {}});
}

// ---------------------------------------------------------------- stencils

bool OperatorSpec::operator==(const OperatorSpec& o) const {
  return kind == o.kind && grid == o.grid && axis == o.axis && axis2 == o.axis2 && steps == o.steps &&
         scheme == o.scheme && matrices_equal(metric, o.metric) &&
         matrices_equal(field_strength, o.field_strength) && matrices_equal(theta, o.theta) &&
         matrices_equal(payload, o.payload) && mass == o.mass;
}

namespace {

void check_axis(const GridGeometry& grid, int axis) {
  if (axis < 0 || axis >= grid.axes()) {
    throw Error(ErrorCode::kBadSpec, "axis " + std::to_string(axis) + " out of range for a " +
                                         std::to_string(grid.axes()) + "-axis grid");
  }
}

// Stencil: list of (offset along axis, weight).
Operator stencil(const SpacePtr& space, int axis, const std::vector<std::pair<int, double>>& taps,
                 OperatorTags tags) {
  const GridGeometry& grid = *space->geometry();
  const long n = grid.sites();
  Matrix m = Matrix::Zero(n, n);
  for (long i = 0; i < n; ++i) {
    auto x = grid.coords_of(i);
    for (const auto& [offset, w] : taps) {
      auto y = x;
      y[axis] += offset;
      m(i, grid.flat_index(y)) += w;
    }
  }
  tags.circulant = true;
  return Operator(space, std::move(m), std::move(tags));
}

Operator partial(const SpacePtr& space, int axis, DiffScheme scheme) {
  const double h = space->geometry()->spacing[axis];
  OperatorTags tags;
  tags.diff_order = 1;
  if (scheme == DiffScheme::kCentral) {
    tags.scheme = "central";
    return stencil(space, axis, {{1, 0.5 / h}, {-1, -0.5 / h}}, tags);
  }
  tags.scheme = "forward";
  return stencil(space, axis, {{1, 1.0 / h}, {0, -1.0 / h}}, tags);
}

Operator second_partial(const SpacePtr& space, int mu, int nu) {
  if (mu == nu) {
    const double h = space->geometry()->spacing[mu];
    OperatorTags tags;
    tags.diff_order = 2;
    tags.scheme = "central";
    return stencil(space, mu, {{1, 1.0 / (h * h)}, {0, -2.0 / (h * h)}, {-1, 1.0 / (h * h)}}, tags);
  }
  return compose(partial(space, mu, DiffScheme::kCentral), partial(space, nu, DiffScheme::kCentral));
}

Matrix metric_or_identity(const Matrix& metric, int axes) {
  if (metric.size() == 0) return Matrix::Identity(axes, axes);
  if (metric.rows() != axes || metric.cols() != axes) {
    throw Error(ErrorCode::kBadSpec, "metric must be axes x axes");
  }
  if ((metric - metric.transpose()).norm() > 1e-14 * std::max(1.0, metric.norm())) {
    throw Error(ErrorCode::kBadSpec, "metric must be symmetric");
  }
  if (!Eigen::FullPivLU<Matrix>(metric).isInvertible()) {
    throw Error(ErrorCode::kBadSpec, "metric must be nondegenerate");
  }
  return metric;
}

// Wave operator eta^{mu nu} d_mu d_nu (negative semidefinite for Riemannian eta).
Operator wave_operator(const SpacePtr& space, const Matrix& metric) {
  const GridGeometry& grid = *space->geometry();
  const Matrix inv = metric.inverse();
  Operator acc = Operator::zero(space);
  for (int mu = 0; mu < grid.axes(); ++mu) {
    for (int nu = 0; nu < grid.axes(); ++nu) {
      if (inv(mu, nu) == Scalar(0.0)) continue;
      acc = add(acc, scale(inv(mu, nu), second_partial(space, mu, nu)));
    }
  }
  OperatorTags tags{true, 2, "central"};
  return acc.with_tags(tags);
}

Operator projection(const SpacePtr& space, const Matrix& basis) {
  if (basis.rows() != space->dim() || basis.cols() < 1) {
    throw Error(ErrorCode::kBadSpec, "projection basis must have dim rows and at least one column");
  }
  const Matrix gram = basis.adjoint() * basis;
  Eigen::FullPivLU<Matrix> lu(gram);
  if (!lu.isInvertible()) throw Error(ErrorCode::kBadSpec, "projection basis is rank deficient");
  const Matrix p = basis * lu.inverse() * basis.adjoint();
  Operator op(space, p);
  OperatorTags tags;
  tags.circulant = commutes_with_shifts(op);
  return op.with_tags(tags);
}

}  // namespace

std::vector<std::vector<Operator>> d2_components(const GridGeometry& grid, const Matrix& field_strength,
                                                 const Matrix& metric_in, SpacePtr space) {
  const int axes = grid.axes();
  if (field_strength.rows() != axes || field_strength.cols() != axes) {
    throw Error(ErrorCode::kBadSpec, "field strength must be axes x axes");
  }
  const Matrix metric = metric_or_identity(metric_in, axes);
  const Matrix inv = metric.inverse();
  const Operator wave = wave_operator(space, metric);
  // (d_mu d_nu - 1/4 eta_{mu nu} wave) for each (mu, nu)
  std::vector<std::vector<Operator>> traceless;
  for (int mu = 0; mu < axes; ++mu) {
    std::vector<Operator> row;
    for (int nu = 0; nu < axes; ++nu) {
      row.push_back(subtract(second_partial(space, mu, nu), scale(0.25 * metric(mu, nu), wave)));
    }
    traceless.push_back(std::move(row));
  }
  std::vector<std::vector<Operator>> out;
  for (int mu = 0; mu < axes; ++mu) {
    std::vector<Operator> row;
    for (int alpha = 0; alpha < axes; ++alpha) {
      Operator acc = Operator::zero(space);
      for (int kappa = 0; kappa < axes; ++kappa) {
        for (int nu = 0; nu < axes; ++nu) {
          const Scalar c = 2.0 * field_strength(alpha, kappa) * inv(kappa, nu);
          if (c == Scalar(0.0)) continue;
          acc = add(acc, scale(c, traceless[mu][nu]));
        }
      }
      row.push_back(acc.with_tags(OperatorTags{true, 2, "central"}));
    }
    out.push_back(std::move(row));
  }
  return out;
}

Operator make_discrete_operator(const OperatorSpec& spec, SpacePtr space) {
  const bool grid_kind = spec.kind != OperatorKind::kConstant && spec.kind != OperatorKind::kProjection &&
                         spec.kind != OperatorKind::kIdentity;
  if (!space) {
    if (!spec.grid.dims.empty()) {
      space = FieldSpace::on_grid(spec.grid);
    } else if (spec.payload.rows() > 0) {
      space = FieldSpace::euclidean(spec.payload.rows());
    } else {
      throw Error(ErrorCode::kBadSpec, "operator spec needs a grid or a payload to fix its space");
    }
  }
  if (grid_kind) {
    if (!space->geometry()) throw Error(ErrorCode::kBadSpec, "stencil operators need a grid space");
    if (!spec.grid.dims.empty() && !(spec.grid == *space->geometry())) {
      throw Error(ErrorCode::kBadSpec, "spec grid differs from the target space grid");
    }
  }
  const auto grid = space->geometry();

  switch (spec.kind) {
    case OperatorKind::kShift: {
      check_axis(*grid, spec.axis);
      return stencil(space, spec.axis, {{spec.steps, 1.0}}, OperatorTags{true, 0, {}});
    }
    case OperatorKind::kPartial:
      check_axis(*grid, spec.axis);
      return partial(space, spec.axis, spec.scheme);
    case OperatorKind::kSecondPartial:
    case OperatorKind::kD1Basis:
      check_axis(*grid, spec.axis);
      check_axis(*grid, spec.axis2);
      return second_partial(space, spec.axis, spec.axis2);
    case OperatorKind::kBox: {
      const Matrix metric = metric_or_identity(spec.metric, grid->axes());
      return scale(-1.0, wave_operator(space, metric));
    }
    case OperatorKind::kMassiveBox: {
      const Matrix metric = metric_or_identity(spec.metric, grid->axes());
      const Operator box = scale(-1.0, wave_operator(space, metric));
      return add(box, scale(spec.mass * spec.mass, Operator::identity(space))).with_tags(box.tags());
    }
    case OperatorKind::kD2Background: {
      const int axes = grid->axes();
      Matrix theta = spec.theta;
      if (theta.size() == 0) {
        if (axes != 2) throw Error(ErrorCode::kBadSpec, "d2_background needs explicit theta off 2D");
        theta = Matrix::Zero(2, 2);
        theta(0, 1) = 1.0;
        theta(1, 0) = -1.0;
      }
      if (theta.rows() != axes || theta.cols() != axes) {
        throw Error(ErrorCode::kBadSpec, "theta must be axes x axes");
      }
      const auto comps = d2_components(*grid, spec.field_strength, spec.metric, space);
      Operator acc = Operator::zero(space);
      for (int mu = 0; mu < axes; ++mu) {
        for (int alpha = 0; alpha < axes; ++alpha) {
          if (theta(mu, alpha) == Scalar(0.0)) continue;
          acc = add(acc, scale(theta(mu, alpha), comps[mu][alpha]));
        }
      }
      return acc.with_tags(OperatorTags{true, 2, "central"});
    }
    case OperatorKind::kProjection:
      return projection(space, spec.payload);
    case OperatorKind::kConstant: {
      Operator op(space, spec.payload);
      OperatorTags tags;
      tags.circulant = commutes_with_shifts(op);
      return op.with_tags(tags);
    }
    case OperatorKind::kIdentity:
      return Operator::identity(space);
  }
  throw Error(ErrorCode::kBadSpec, "unknown operator kind");
}

}  // namespace emergence
