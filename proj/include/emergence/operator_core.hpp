#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emergence/errors.hpp"

namespace emergence {

using Scalar = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

enum class ScalarKind { kReal, kComplex };
enum class Symmetry { kSymmetric, kHermitian };

struct GridGeometry {
  std::vector<int> dims;
  std::vector<double> spacing;
  bool periodic = true;

  int axes() const { return static_cast<int>(dims.size()); }
  long sites() const;
  // Row-major flat index, axis 0 outermost.
  long flat_index(const std::vector<int>& coords) const;
  std::vector<int> coords_of(long flat) const;

  bool operator==(const GridGeometry&) const = default;
};

// Nondegenerate pairing <x, y> = x^T G y (symmetric) or x^* G y (hermitian).
// The gram matrix already includes the quadrature measure; `weights` records
// the per-site cell measure it was built from.
class PairingForm {
 public:
  static PairingForm euclidean(long dim, Symmetry symmetry = Symmetry::kSymmetric);
  static PairingForm weighted(const std::vector<double>& weights,
                              Symmetry symmetry = Symmetry::kSymmetric);
  static PairingForm custom(Matrix gram, std::vector<double> weights, Symmetry symmetry);

  const Matrix& gram() const { return gram_; }
  const Matrix& gram_inverse() const { return gram_inv_; }
  const std::vector<double>& weights() const { return weights_; }
  Symmetry symmetry() const { return symmetry_; }
  long dim() const { return gram_.rows(); }

  Scalar apply(const Vector& x, const Vector& y) const;

  bool operator==(const PairingForm& other) const;

 private:
  PairingForm(Matrix gram, std::vector<double> weights, Symmetry symmetry);

  Matrix gram_;
  Matrix gram_inv_;
  std::vector<double> weights_;
  Symmetry symmetry_;
};

class FieldSpace {
 public:
  FieldSpace(long dim, ScalarKind kind, PairingForm pairing,
             std::optional<GridGeometry> geometry = std::nullopt);

  // Scalar field on a periodic grid; weights are the cell volume prod(spacing).
  static std::shared_ptr<const FieldSpace> on_grid(GridGeometry grid,
                                                   ScalarKind kind = ScalarKind::kReal,
                                                   Symmetry symmetry = Symmetry::kSymmetric);
  static std::shared_ptr<const FieldSpace> euclidean(long dim,
                                                     ScalarKind kind = ScalarKind::kReal);

  long dim() const { return dim_; }
  ScalarKind scalar_kind() const { return kind_; }
  const PairingForm& pairing() const { return pairing_; }
  const std::optional<GridGeometry>& geometry() const { return geometry_; }

  bool operator==(const FieldSpace& other) const;

 private:
  long dim_;
  ScalarKind kind_;
  PairingForm pairing_;
  std::optional<GridGeometry> geometry_;
};

using SpacePtr = std::shared_ptr<const FieldSpace>;

struct OperatorTags {
  bool circulant = false;
  std::optional<int> diff_order;
  std::string scheme;  // derivative scheme, empty when not a stencil

  bool operator==(const OperatorTags&) const = default;
};

// Immutable linear map on a field space.
class Operator {
 public:
  Operator(SpacePtr space, Matrix matrix, OperatorTags tags = {});

  static Operator identity(SpacePtr space);
  static Operator zero(SpacePtr space);

  const Matrix& matrix() const { return matrix_; }
  const SpacePtr& space() const { return space_; }
  const OperatorTags& tags() const { return tags_; }
  long dim() const { return matrix_.rows(); }

  Operator with_tags(OperatorTags tags) const;

 private:
  SpacePtr space_;
  Matrix matrix_;
  OperatorTags tags_;
};

bool same_space(const Operator& a, const Operator& b);
void require_same_space(const Operator& a, const Operator& b, const char* op);

Operator compose(const Operator& a, const Operator& b);
Operator add(const Operator& a, const Operator& b);
Operator subtract(const Operator& a, const Operator& b);
Operator scale(Scalar c, const Operator& a);
Operator adjoint_wrt_pairing(const Operator& a);
Operator sym_part(const Operator& a);
Scalar lagrangian_value(const FieldSpace& space, const Operator& a, const Vector& phi);

Operator power(const Operator& a, int n);
bool is_idempotent_power(const Operator& a, int n, double tol);

double frobenius(const Matrix& m);
double frobenius_distance(const Operator& a, const Operator& b);

enum class InverseMethod { kSpectral, kPseudoinverse, kAuto };

inline constexpr double kDefaultTol = 1e-10;

// Returns R with ||A R - I||_F <= tol or throws kNotRightInvertible.
// kAuto picks spectral for circulant-tagged operators on a grid.
Operator right_inverse(const Operator& a, InverseMethod method = InverseMethod::kAuto,
                       double tol = kDefaultTol);

// Fourier symbol of a circulant operator, indexed by flat wave-vector index.
Vector fourier_symbol(const Operator& a);
// Inverse of fourier_symbol: circulant operator with the given symbol.
Operator circulant_from_symbol(SpacePtr space, const Vector& symbol, OperatorTags tags = {});
// Normalized Fourier mode e^{i k.x} / sqrt(n) for flat wave-vector index k.
Vector fourier_mode(const GridGeometry& grid, long k);

bool commutes_with_shifts(const Operator& a, double tol = 1e-12);

// ---- discrete operator construction ----

enum class OperatorKind {
  kShift,
  kPartial,
  kSecondPartial,
  kBox,
  kD1Basis,
  kD2Background,
  kProjection,
  kConstant,
  kIdentity,
  kMassiveBox,
};

enum class DiffScheme { kCentral, kForward };

struct OperatorSpec {
  OperatorKind kind = OperatorKind::kIdentity;
  GridGeometry grid;
  int axis = 0;
  int axis2 = 0;
  int steps = 1;  // shift distance
  DiffScheme scheme = DiffScheme::kCentral;
  Matrix metric;          // eta_{mu nu}; empty means Euclidean
  Matrix field_strength;  // F_{alpha kappa}
  Matrix theta;           // theta^{mu alpha}; empty means Levi-Civita in 2D
  Matrix payload;         // projection basis (columns) or constant matrix
  double mass = 0.0;      // kMassiveBox: box + mass^2

  bool operator==(const OperatorSpec& other) const;
};

Operator make_discrete_operator(const OperatorSpec& spec, SpacePtr space = nullptr);

// Per-pair components 2 F_{ak} eta^{kn} (d_m d_n - 1/4 eta_{mn} box), indexed [mu][alpha].
std::vector<std::vector<Operator>> d2_components(const GridGeometry& grid, const Matrix& field_strength,
                                                 const Matrix& metric, SpacePtr space);

}  // namespace emergence
