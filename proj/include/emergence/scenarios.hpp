#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emergence/emergence_engine.hpp"

namespace emergence {

inline constexpr const char* kLibraryVersion = "1.0.0";
inline constexpr int kReportVersion = 1;

enum class ScenarioKind { kGravityFromNoncommutativity, kNoncommutativityFromGravity, kCorollary, kBoolean };

std::string_view scenario_kind_name(ScenarioKind kind);

struct ScenarioSpec {
  std::string name;
  ScenarioKind kind = ScenarioKind::kGravityFromNoncommutativity;
  GridGeometry grid;
  std::string signature = "riemannian";
  double mass = 1.0;
  Matrix field_strength;  // F_{alpha kappa}; default F_01 = 1
  Matrix metric;          // eta; default identity
  std::vector<double> parameters{0.1, 0.5, 1.0};  // theta values, or h scales for the reciprocal run
  std::vector<double> parameter_range{0.1, 1.0};  // certificate sampling range
  std::uint64_t seed = 42;
  int samples = 100;
  double tol = 1e-8;
  // corollary
  std::string instance = "identity";  // identity | projector | bivariate
  std::optional<OperatorSpec> idempotent;  // D, defaults per instance
  int power = 1;
  long mode = 1;  // Fourier mode of the projector instance
  // boolean
  int blocks = 2;

  Json to_json() const;
  // Missing optional fields take the defaults above; errors name the field.
  static ScenarioSpec from_json(const Json& j);
  bool operator==(const ScenarioSpec& other) const;
};

// Built-in scenario specs by name.
std::vector<std::string> builtin_scenarios();
ScenarioSpec builtin_scenario(const std::string& name);

struct ScenarioCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;

  bool operator==(const ScenarioCheck&) const = default;
};

struct MapRecord {
  std::string label;
  std::string assignment;
  std::string root_lemma;
  int provenance_depth = 0;
  std::string provenance_digest;  // FNV-1a of the serialized map without its certificate
  Certificate certificate;

  bool operator==(const MapRecord&) const = default;
};

struct ScenarioFailure {
  ErrorCode code = ErrorCode::kBadSpec;
  std::string message;
  std::string path;
  std::optional<double> residual;

  bool operator==(const ScenarioFailure&) const = default;
};

struct ScenarioResult {
  std::string scenario;
  ScenarioKind kind = ScenarioKind::kGravityFromNoncommutativity;
  std::vector<MapRecord> maps;
  std::vector<ScenarioCheck> checks;
  std::vector<std::string> notes;
  std::optional<ScenarioFailure> error;

  bool certified() const;
  // 0 all certificates and checks pass, 1 certified failure, 2 synthesis error.
  int exit_code() const;

  Json to_json() const;
  static ScenarioResult from_json(const Json& j);
  bool operator==(const ScenarioResult&) const = default;
};

std::string fnv1a_hex(const std::string& data);
MapRecord record_map(const std::string& label, const EmergenceMap& map);

// ---- gravity background ----

struct GravityBackground {
  SpacePtr space;
  Operator box_m;                            // box + m^2
  std::vector<std::vector<Operator>> d1;     // d_mu d_nu
  std::vector<Operator> h_basis;             // D1_00, D1_11, D1_01 + D1_10
  Operator d2;
  bool box_invertible = false;
};

GravityBackground build_gravity_background(const GridGeometry& grid, const Matrix& metric,
                                           const Matrix& field_strength, double mass);

// Relative distance of h.D1 from the span of D2, normalized by the h part.
double span_gap(const GravityBackground& bg, const Param& h);
// Shared parameter theta reproducing -box_m + h.D1; throws InfeasibleTarget above `gap_tol`.
Param gravity_theta_of_h(const GravityBackground& bg, const Param& h, double gap_tol = 1e-6);
// Least-squares h with h.D1 = theta D2 as quadratic forms.
Param gravity_h_of_theta(const GravityBackground& bg, Scalar theta);

ScenarioResult run_gravity_from_noncommutativity(const ScenarioSpec& spec, int jobs = 1);
ScenarioResult run_noncommutativity_from_gravity(const ScenarioSpec& spec, int jobs = 1);
ScenarioResult run_corollary_instance(const ScenarioSpec& spec, int jobs = 1);
ScenarioResult run_boolean_scenario(const ScenarioSpec& spec, int jobs = 1);
ScenarioResult run_scenario_spec(const ScenarioSpec& spec, int jobs = 1);

}  // namespace emergence
