#include "emergence/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace emergence {

namespace {

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::kSchemaError, what); }

constexpr std::pair<ScenarioKind, std::string_view> kKinds[] = {
    {ScenarioKind::kGravityFromNoncommutativity, "gravity_from_noncommutativity"},
    {ScenarioKind::kNoncommutativityFromGravity, "noncommutativity_from_gravity"},
    {ScenarioKind::kCorollary, "corollary"},
    {ScenarioKind::kBoolean, "boolean"},
};

Json real_matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (long r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c).real());
    rows.push_back(row);
  }
  return rows;
}

Matrix real_matrix_from(const Json& j, const std::string& name, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n) schema("'" + name + "' must be a " + std::to_string(n) + "x" + std::to_string(n) + " array");
  Matrix m(n, n);
  for (int r = 0; r < n; ++r) {
    if (!j[r].is_array() || static_cast<int>(j[r].size()) != n) schema("'" + name + "' row " + std::to_string(r) + " has wrong length");
    for (int c = 0; c < n; ++c) {
      if (!j[r][c].is_number()) schema("'" + name + "' entries must be numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Matrix default_field_strength(int axes) {
  Matrix f = Matrix::Zero(axes, axes);
  if (axes >= 2) {
    f(0, 1) = 1.0;
    f(1, 0) = -1.0;
  }
  return f;
}

Param real_param(std::initializer_list<double> xs) {
  Param p(static_cast<long>(xs.size()));
  long i = 0;
  for (double x : xs) p(i++) = x;
  return p;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

ScenarioCheck check_le(std::string name, double value, double threshold, std::string detail = {}) {
  return ScenarioCheck{std::move(name), value, threshold, value <= threshold, std::move(detail)};
}

ScenarioFailure failure_of(const Error& e) {
  const std::string what = e.what();
  const std::string prefix = std::string(error_code_name(e.code())) + ": ";
  return ScenarioFailure{e.code(), what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what, e.path, e.residual};
}

// Lemma maps surface synthesis errors; direct maps report a failing certificate instead.
EngineOptions scenario_options(const ScenarioSpec& spec, int jobs, bool require_pass = false) {
  EngineOptions o;
  o.tol = spec.tol;
  o.samples = spec.samples;
  o.seed = spec.seed;
  o.jobs = jobs;
  o.require_pass = require_pass;
  return o;
}

// Stacked real least squares: min || sum_j x_j cols_j - target ||_F over real x.
struct Fit {
  Eigen::VectorXd x;
  double residual = 0.0;
};

Eigen::VectorXd stack(const Matrix& m) {
  const long n = m.size();
  Eigen::VectorXd v(2 * n);
  for (long i = 0; i < n; ++i) {
    v(i) = m.data()[i].real();
    v(n + i) = m.data()[i].imag();
  }
  return v;
}

Fit real_fit(const std::vector<Matrix>& cols, const Matrix& target) {
  const Eigen::VectorXd b = stack(target);
  Eigen::MatrixXd a(b.size(), static_cast<long>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) a.col(static_cast<long>(j)) = stack(cols[j]);
  Fit f;
  f.x = a.completeOrthogonalDecomposition().solve(b);
  f.residual = (a * f.x - b).norm();
  return f;
}

double oracle_gap(const EmergenceMap& m, const Gpt& t1, const Ppt& p, int count, std::uint64_t seed) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  double worst = 0.0;
  for (int i = 0; i < count; ++i) {
    const Param e = t1.sample(rng);
    const auto oracle = brute_force_emerge(t1, p, e);
    if (!oracle) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, quadratic_form_distance(m.target_operator(e), p.evaluate_per_term(oracle->per_term)));
  }
  return worst;
}

ScenarioResult start(const ScenarioSpec& spec) {
  ScenarioResult r;
  r.scenario = spec.name;
  r.kind = spec.kind;
  return r;
}

}  // namespace

std::string_view scenario_kind_name(ScenarioKind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "unknown";
}

// ---------------------------------------------------------- spec

Json ScenarioSpec::to_json() const {
  Json j;
  j["name"] = name;
  j["kind"] = scenario_kind_name(kind);
  j["grid"] = grid_to_json(grid);
  j["signature"] = signature;
  j["mass"] = mass;
  j["field_strength"] = real_matrix_json(field_strength);
  j["metric"] = real_matrix_json(metric);
  j["parameters"] = parameters;
  j["parameter_range"] = parameter_range;
  j["seed"] = seed;
  j["samples"] = samples;
  j["tol"] = tol;
  if (kind == ScenarioKind::kCorollary) {
    j["instance"] = instance;
    if (idempotent) j["idempotent"] = operator_spec_to_json(*idempotent);
    j["power"] = power;
    j["mode"] = mode;
  }
  if (kind == ScenarioKind::kBoolean) j["blocks"] = blocks;
  return j;
}

ScenarioSpec ScenarioSpec::from_json(const Json& j) {
  if (!j.is_object()) schema("scenario spec must be a JSON object");
  static const std::set<std::string> known{"name",  "kind",       "grid",     "signature", "mass",
                                           "field_strength", "metric", "parameters", "parameter_range",
                                           "seed",  "samples",    "tol",      "instance",  "idempotent",
                                           "power", "mode",       "blocks"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) schema("unknown field '" + key + "'");
  }
  ScenarioSpec s;
  if (!j.contains("kind")) schema("missing field 'kind'");
  if (!j.contains("grid")) schema("missing field 'grid'");
  try {
    const std::string kind = j.at("kind").get<std::string>();
    bool found = false;
    for (const auto& [k, n] : kKinds) {
      if (n == kind) {
        s.kind = k;
        found = true;
      }
    }
    if (!found) schema("field 'kind': unknown scenario kind '" + kind + "'");
    s.name = j.value("name", kind);
    s.grid = grid_from_json(j.at("grid"));
    s.signature = j.value("signature", s.signature);
    s.mass = j.value("mass", s.mass);
    s.parameters = j.value("parameters", s.parameters);
    s.parameter_range = j.value("parameter_range", s.parameter_range);
    s.seed = j.value("seed", s.seed);
    s.samples = j.value("samples", s.samples);
    s.tol = j.value("tol", s.tol);
    s.instance = j.value("instance", s.instance);
    s.power = j.value("power", s.power);
    s.mode = j.value("mode", s.mode);
    s.blocks = j.value("blocks", s.blocks);
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("bad field type: ") + e.what());
  }
  const int axes = s.grid.axes();
  for (std::size_t a = 0; a < s.grid.dims.size(); ++a) {
    if (s.grid.dims[a] < 2) schema("field 'grid.dims': every axis needs at least 2 sites");
    if (!(s.grid.spacing[a] > 0.0)) schema("field 'grid.spacing': spacing must be positive");
  }
  if (!s.grid.periodic) schema("field 'grid.periodic': only periodic grids are supported");
  if (s.signature != "riemannian") {
    schema("field 'signature': only 'riemannian' is supported (Lorentzian signature is out of scope)");
  }
  s.field_strength = j.contains("field_strength") ? real_matrix_from(j.at("field_strength"), "field_strength", axes)
                                                  : default_field_strength(axes);
  s.metric = j.contains("metric") ? real_matrix_from(j.at("metric"), "metric", axes) : Matrix::Identity(axes, axes);
  if (j.contains("idempotent")) s.idempotent = operator_spec_from_json(j.at("idempotent"));
  if (s.samples < 1) schema("field 'samples' must be >= 1");
  if (!(s.tol > 0.0)) schema("field 'tol' must be > 0");
  if (!(s.mass >= 0.0)) schema("field 'mass' must be >= 0");
  if (s.parameter_range.size() != 2 || !(s.parameter_range[0] <= s.parameter_range[1])) {
    schema("field 'parameter_range' must be [lo, hi] with lo <= hi");
  }
  if (s.power < 1) schema("field 'power' must be >= 1");
  if (s.blocks < 1) schema("field 'blocks' must be >= 1");
  const bool gravity = s.kind == ScenarioKind::kGravityFromNoncommutativity ||
                       s.kind == ScenarioKind::kNoncommutativityFromGravity;
  if (gravity && axes != 2) schema("field 'grid': gravity scenarios need a 2D grid");
  if (s.kind == ScenarioKind::kCorollary && s.instance != "identity" && s.instance != "projector" &&
      s.instance != "bivariate") {
    schema("field 'instance' must be identity, projector or bivariate");
  }
  return s;
}

bool ScenarioSpec::operator==(const ScenarioSpec& other) const { return to_json() == other.to_json(); }

std::vector<std::string> builtin_scenarios() {
  return {"gravity",           "noncommutativity",   "corollary_identity",
          "corollary_projector", "corollary_bivariate", "boolean"};
}

ScenarioSpec builtin_scenario(const std::string& name) {
  Json j;
  j["name"] = name;
  if (name == "gravity" || name == "noncommutativity") {
    j["kind"] = name == "gravity" ? "gravity_from_noncommutativity" : "noncommutativity_from_gravity";
    j["grid"] = {{"dims", {8, 8}}, {"spacing", {1.0, 1.0}}};
  } else if (name == "corollary_identity" || name == "corollary_projector") {
    j["kind"] = "corollary";
    j["grid"] = {{"dims", {8}}, {"spacing", {1.0}}};
    j["instance"] = name == "corollary_identity" ? "identity" : "projector";
  } else if (name == "corollary_bivariate") {
    j["kind"] = "corollary";
    j["grid"] = {{"dims", {4}}, {"spacing", {1.0}}};
    j["instance"] = "bivariate";
  } else if (name == "boolean") {
    j["kind"] = "boolean";
    j["grid"] = {{"dims", {6}}, {"spacing", {1.0}}};
    j["blocks"] = 3;
  } else {
    throw Error(ErrorCode::kBadSpec, "unknown scenario '" + name + "'");
  }
  return ScenarioSpec::from_json(j);
}

// ---------------------------------------------------------- results

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MapRecord record_map(const std::string& label, const EmergenceMap& map) {
  Json j = map.to_json();
  j.erase("certificate");
  MapRecord r;
  r.label = label;
  r.assignment = assignment_name(map.assignment());
  r.root_lemma = lemma_kind_name(map.provenance().kind);
  r.provenance_depth = map.provenance().depth();
  r.provenance_digest = fnv1a_hex(j.dump());
  r.certificate = map.certificate();
  return r;
}

bool ScenarioResult::certified() const {
  if (error) return false;
  for (const auto& m : maps) {
    if (!m.certificate.pass) return false;
  }
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

int ScenarioResult::exit_code() const {
  if (error) return 2;
  return certified() ? 0 : 1;
}

Json ScenarioResult::to_json() const {
  Json j;
  j["scenario"] = scenario;
  j["kind"] = scenario_kind_name(kind);
  j["status"] = error ? "synthesis_error" : certified() ? "pass" : "certified_failure";
  j["exit_code"] = exit_code();
  Json ms = Json::array();
  for (const auto& m : maps) {
    ms.push_back({{"label", m.label},
                  {"assignment", m.assignment},
                  {"root_lemma", m.root_lemma},
                  {"provenance_depth", m.provenance_depth},
                  {"provenance_digest", m.provenance_digest},
                  {"certificate", m.certificate.to_json()}});
  }
  j["maps"] = ms;
  Json cs = Json::array();
  for (const auto& c : checks) {
    Json cj{{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}};
    if (!c.detail.empty()) cj["detail"] = c.detail;
    cs.push_back(cj);
  }
  j["checks"] = cs;
  j["notes"] = notes;
  if (error) {
    Json e{{"code", error_code_name(error->code)}, {"message", error->message}, {"path", error->path}};
    if (error->residual) e["residual"] = *error->residual;
    j["error"] = e;
  }
  return j;
}

ScenarioResult ScenarioResult::from_json(const Json& j) {
  ScenarioResult r;
  try {
    r.scenario = j.at("scenario").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    bool found = false;
    for (const auto& [k, n] : kKinds) {
      if (n == kind) {
        r.kind = k;
        found = true;
      }
    }
    if (!found) schema("unknown scenario kind '" + kind + "'");
    for (const auto& m : j.at("maps")) {
      r.maps.push_back(MapRecord{m.at("label").get<std::string>(), m.at("assignment").get<std::string>(),
                                 m.at("root_lemma").get<std::string>(), m.at("provenance_depth").get<int>(),
                                 m.at("provenance_digest").get<std::string>(),
                                 Certificate::from_json(m.at("certificate"))});
    }
    for (const auto& c : j.at("checks")) {
      r.checks.push_back(ScenarioCheck{c.at("name").get<std::string>(), c.at("value").get<double>(),
                                       c.at("threshold").get<double>(), c.at("pass").get<bool>(),
                                       c.value("detail", std::string())});
    }
    r.notes = j.at("notes").get<std::vector<std::string>>();
    if (j.contains("error")) {
      const auto& e = j.at("error");
      ScenarioFailure f;
      const std::string code = e.at("code").get<std::string>();
      bool known = false;
      for (int i = 0; i <= static_cast<int>(ErrorCode::kSchemaError); ++i) {
        if (error_code_name(static_cast<ErrorCode>(i)) == code) {
          f.code = static_cast<ErrorCode>(i);
          known = true;
        }
      }
      if (!known) schema("unknown error code '" + code + "'");
      f.message = e.at("message").get<std::string>();
      f.path = e.at("path").get<std::string>();
      if (e.contains("residual")) f.residual = e.at("residual").get<double>();
      r.error = f;
    }
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("bad result document: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------- gravity background

GravityBackground build_gravity_background(const GridGeometry& grid, const Matrix& metric_in,
                                           const Matrix& field_strength, double mass) {
  if (grid.axes() != 2) throw Error(ErrorCode::kBadSpec, "gravity background needs a 2D grid");
  const Matrix metric = metric_in.size() == 0 ? Matrix::Identity(2, 2) : metric_in;
  if (metric.rows() != 2 || metric.cols() != 2) throw Error(ErrorCode::kBadSpec, "metric must be 2x2");
  if (!metric.isApprox(metric.adjoint(), 1e-14)) throw Error(ErrorCode::kBadSpec, "metric must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(metric);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw Error(ErrorCode::kBadSpec, "metric must be positive definite (Riemannian signature)");
  }
  if (mass < 0.0) throw Error(ErrorCode::kBadSpec, "mass must be nonnegative");

  const SpacePtr space = FieldSpace::on_grid(grid);
  OperatorSpec s;
  s.grid = grid;
  s.metric = metric;
  s.kind = OperatorKind::kMassiveBox;
  s.mass = mass;
  const Operator box_m = make_discrete_operator(s, space);
  bool invertible = true;
  try {
    right_inverse(box_m, InverseMethod::kSpectral);
  } catch (const Error&) {
    invertible = false;
  }
  std::vector<std::vector<Operator>> d1;
  for (int mu = 0; mu < 2; ++mu) {
    std::vector<Operator> row;
    for (int nu = 0; nu < 2; ++nu) {
      OperatorSpec d;
      d.kind = OperatorKind::kD1Basis;
      d.grid = grid;
      d.axis = mu;
      d.axis2 = nu;
      row.push_back(make_discrete_operator(d, space));
    }
    d1.push_back(std::move(row));
  }
  std::vector<Operator> h_basis{d1[0][0], d1[1][1], add(d1[0][1], d1[1][0])};
  OperatorSpec d2;
  d2.kind = OperatorKind::kD2Background;
  d2.grid = grid;
  d2.metric = metric;
  d2.field_strength = field_strength;
  return GravityBackground{space, box_m, std::move(d1), std::move(h_basis), make_discrete_operator(d2, space),
                           invertible};
}

namespace {

Operator h_part(const GravityBackground& bg, const Param& h) {
  if (h.size() != 3) throw Error(ErrorCode::kBadSpec, "h needs components (h00, h11, h01)");
  Operator acc = Operator::zero(bg.space);
  for (long i = 0; i < 3; ++i) acc = add(acc, scale(h(i), bg.h_basis[static_cast<std::size_t>(i)]));
  return acc;
}

std::pair<Fit, double> theta_fit(const GravityBackground& bg, const Param& h) {
  const Matrix target = sym_part(h_part(bg, h)).matrix();
  const Matrix d2 = sym_part(bg.d2).matrix();
  const Fit f = real_fit({d2, Scalar(0.0, 1.0) * d2}, target);
  const double norm = frobenius(target);
  return {f, norm == 0.0 ? 0.0 : f.residual / norm};
}

}  // namespace

double span_gap(const GravityBackground& bg, const Param& h) { return theta_fit(bg, h).second; }

Param gravity_theta_of_h(const GravityBackground& bg, const Param& h, double gap_tol) {
  const auto [f, gap] = theta_fit(bg, h);
  if (gap > gap_tol) {
    throw Error(ErrorCode::kInfeasibleTarget,
                "h.D1 is not in the span of D2 (relative span gap " + std::to_string(gap) + ")")
        .with_residual(gap);
  }
  return Param::Constant(1, Scalar(f.x(0), f.x(1)));
}

Param gravity_h_of_theta(const GravityBackground& bg, Scalar theta) {
  const Matrix target = sym_part(scale(theta, bg.d2)).matrix();
  std::vector<Matrix> cols;
  for (const auto& b : bg.h_basis) {
    const Matrix s = sym_part(b).matrix();
    cols.push_back(s);
    cols.push_back(Scalar(0.0, 1.0) * s);
  }
  const Fit f = real_fit(cols, target);
  const double norm = frobenius(target);
  if (norm > 0.0 && f.residual / norm > 1e-6) {
    throw Error(ErrorCode::kInfeasibleTarget, "theta D2 is not an h.D1 quadratic form").with_residual(f.residual / norm);
  }
  Param h(3);
  for (long i = 0; i < 3; ++i) h(i) = Scalar(f.x(2 * i), f.x(2 * i + 1));
  return h;
}

// ---------------------------------------------------------- runners

ScenarioResult run_gravity_from_noncommutativity(const ScenarioSpec& spec, int jobs) {
  ScenarioResult r = start(spec);
  try {
    const auto bg = build_gravity_background(spec.grid, spec.metric, spec.field_strength, spec.mass);
    if (!bg.box_invertible) r.notes.push_back("box_m has a kernel (m = 0): no Green function surrogate");
    Ppt ppt({bg.box_m, bg.d2}, {PptTerm{{1, 0}, CoefficientFunction::constant(-1.0)},
                                PptTerm{{0, 1}, CoefficientFunction::linear(1.0)}});
    const Param h1 = gravity_h_of_theta(bg, 1.0);
    const double lo = spec.parameter_range[0], hi = spec.parameter_range[1];
    auto t1 = Gpt::linear_combination(scale(-1.0, bg.box_m), bg.h_basis, {"h00", "h11", "h01"})
                  ->with_sampler(
                      [h1, lo, hi](Rng& rng) {
                        std::uniform_real_distribution<double> d(lo, hi);
                        return Param(d(rng) * h1);
                      },
                      "feasible ray h(theta), theta uniform in [" + fmt(lo) + ", " + fmt(hi) + "]");
    const EngineOptions o = scenario_options(spec, jobs);
    try {
      emerge(t1, ppt, o);
      r.notes.push_back("lemma chain: certified");
    } catch (const Error& e) {
      r.notes.push_back(std::string("lemma chain not applicable: ") + e.what());
    }
    const auto m = direct_shared_map(
        t1, ppt, [bg](const Param& h) { return gravity_theta_of_h(bg, h); },
        "theta(h) by least-squares matching of quadratic forms", o);
    r.maps.push_back(record_map("F: h -> theta", m));

    for (double theta : spec.parameters) {
      const std::string tag = "round_trip[theta=" + fmt(theta) + "]";
      if (theta == 0.0) {
        r.notes.push_back(tag + ": theta = 0 is the excluded trivial case; h(0) = 0 and the map degenerates");
        continue;
      }
      try {
        const Param h = gravity_h_of_theta(bg, theta);
        const Scalar back = m.shared(h)(0);
        r.checks.push_back(check_le(tag, std::abs(back - theta), spec.tol,
                                    "h = (" + fmt(h(0).real()) + ", " + fmt(h(1).real()) + ", " + fmt(h(2).real()) + ")"));
      } catch (const Error& e) {
        r.checks.push_back(ScenarioCheck{tag, e.residual.value_or(0.0), spec.tol, false, e.what()});
      }
    }
    const Param zero = Param::Zero(3);
    const double free = quadratic_form_distance(ppt.evaluate(m.shared(zero)), scale(-1.0, bg.box_m));
    r.checks.push_back(check_le("free_theory[h=0]", free, spec.tol));
  } catch (const Error& e) {
    r.error = failure_of(e);
  }
  return r;
}

ScenarioResult run_noncommutativity_from_gravity(const ScenarioSpec& spec, int jobs) {
  ScenarioResult r = start(spec);
  try {
    const auto bg = build_gravity_background(spec.grid, spec.metric, spec.field_strength, spec.mass);
    if (!bg.box_invertible) r.notes.push_back("box_m has a kernel (m = 0): no Green function surrogate");
    Ppt ppt({bg.box_m, bg.h_basis[0], bg.h_basis[1], bg.h_basis[2]},
            {PptTerm{{1, 0, 0, 0}, CoefficientFunction::constant(-1.0)},
             PptTerm{{0, 1, 0, 0}, CoefficientFunction::linear(1.0)},
             PptTerm{{0, 0, 1, 0}, CoefficientFunction::linear(1.0)},
             PptTerm{{0, 0, 0, 1}, CoefficientFunction::linear(1.0)}});
    // positive-definite h = s I maps to theta = s theta_1
    const Scalar theta1 = gravity_theta_of_h(bg, real_param({1.0, 1.0, 0.0}))(0);
    const double lo = spec.parameter_range[0], hi = spec.parameter_range[1];
    auto t1 = Gpt::linear_combination(scale(-1.0, bg.box_m), {bg.d2}, {"theta"})
                  ->with_sampler(
                      [theta1, lo, hi](Rng& rng) {
                        std::uniform_real_distribution<double> d(lo, hi);
                        return Param(Param::Constant(1, d(rng) * theta1));
                      },
                      "theta(s I), s uniform in [" + fmt(lo) + ", " + fmt(hi) + "]");
    const EngineOptions o = scenario_options(spec, jobs);
    try {
      emerge(t1, ppt, o);
      r.notes.push_back("lemma chain: certified");
    } catch (const Error& e) {
      r.notes.push_back(std::string("lemma chain not applicable: ") + e.what());
    }
    const auto m = direct_per_term_map(
        t1, ppt,
        [bg](const Param& theta) {
          const Param h = gravity_h_of_theta(bg, theta(0));
          return std::vector<Param>{Param::Zero(1), h.segment(0, 1), h.segment(1, 1), h.segment(2, 1)};
        },
        "h(theta) per term by least-squares matching of quadratic forms", o);
    r.maps.push_back(record_map("G: theta -> h", m));

    for (double s : spec.parameters) {
      const std::string tag = "round_trip[h=" + fmt(s) + " I]";
      if (!(s > 0.0)) {
        r.notes.push_back(tag + ": h is not positive definite; excluded");
        continue;
      }
      try {
        const Param h = real_param({s, s, 0.0});
        const Param theta = gravity_theta_of_h(bg, h);
        const auto pt = m.per_term(theta);
        Param back(3);
        back << pt[1](0), pt[2](0), pt[3](0);
        r.checks.push_back(check_le(tag, (back - h).norm(), spec.tol, "theta = " + fmt(theta(0).real())));
      } catch (const Error& e) {
        r.checks.push_back(ScenarioCheck{tag, e.residual.value_or(0.0), spec.tol, false, e.what()});
      }
    }
    const double free =
        quadratic_form_distance(ppt.evaluate_per_term(m.per_term(Param::Zero(1))), scale(-1.0, bg.box_m));
    r.checks.push_back(check_le("free_theory[theta=0]", free, spec.tol));
  } catch (const Error& e) {
    r.error = failure_of(e);
  }
  return r;
}

ScenarioResult run_corollary_instance(const ScenarioSpec& spec, int jobs) {
  ScenarioResult r = start(spec);
  try {
    auto space = FieldSpace::on_grid(spec.grid);
    Operator d = Operator::identity(space);
    if (spec.idempotent) {
      OperatorSpec os = *spec.idempotent;
      if (os.grid.dims.empty()) os.grid = spec.grid;
      d = make_discrete_operator(os, space);
    } else if (spec.instance == "projector") {
      OperatorSpec os;
      os.kind = OperatorKind::kProjection;
      os.grid = spec.grid;
      os.payload = fourier_mode(spec.grid, spec.mode);
      d = make_discrete_operator(os, space);
    }
    if (!is_idempotent_power(d, spec.power, 1e-10)) {
      throw Error(ErrorCode::kHypothesisViolated,
                  "D^" + std::to_string(2 * spec.power) + " != D^" + std::to_string(spec.power) + ": not an idempotent power");
    }
    const Operator dn = power(d, spec.power);
    const EngineOptions o = scenario_options(spec, jobs, true);
    const Operator id = Operator::identity(space);

    if (spec.instance == "bivariate") {
      auto alg = std::make_shared<CirculantAlgebra>(space);
      auto t1 = Gpt::representation(alg, dn);
      OperatorSpec sh;
      sh.kind = OperatorKind::kShift;
      sh.grid = spec.grid;
      OperatorSpec mb;
      mb.kind = OperatorKind::kMassiveBox;
      mb.grid = spec.grid;
      mb.mass = spec.mass;
      Ppt p({make_discrete_operator(sh, space), make_discrete_operator(mb, space)},
            {PptTerm{{1, 1}, CoefficientFunction::linear(1.0)}, PptTerm{{0, 1}, CoefficientFunction::linear(0.5)}},
            alg);
      const auto m = emerge(t1, p, o);
      r.maps.push_back(record_map("F: eps -> per-term symbols", m));
      r.checks.push_back(check_le("oracle_agreement", oracle_gap(m, *t1, p, std::min(spec.samples, 20), spec.seed), 1e-8));
    } else {
      auto t1 = Gpt::scalar_times_fixed(std::make_shared<ComplexScalars>(), d, spec.power);
      Ppt p({id}, {PptTerm{{1}, CoefficientFunction::linear(1.0)}});
      const auto m = emerge(t1, p, o);
      r.maps.push_back(record_map("F: eps -> delta", m));
      Rng rng(spec.seed);
      double worst = 0.0;
      for (int i = 0; i < std::min(spec.samples, 20); ++i) {
        const Param e = t1->sample(rng);
        worst = std::max(worst, (m.per_term(e)[0] - e).norm());
      }
      r.checks.push_back(check_le("identity_map", worst, spec.tol));
      r.checks.push_back(check_le("oracle_agreement", oracle_gap(m, *t1, p, std::min(spec.samples, 20), spec.seed), 1e-8));
    }
  } catch (const Error& e) {
    r.error = failure_of(e);
  }
  return r;
}

ScenarioResult run_boolean_scenario(const ScenarioSpec& spec, int jobs) {
  ScenarioResult r = start(spec);
  try {
    auto space = FieldSpace::on_grid(spec.grid, ScalarKind::kComplex, Symmetry::kHermitian);
    if (space->dim() < spec.blocks) throw Error(ErrorCode::kBadSpec, "fewer sites than blocks");
    auto alg = std::make_shared<BooleanComplex>(spec.blocks);
    Rng rng(spec.seed);

    double axioms = 0.0, roots = 0.0, meet = 0.0, compat = 0.0;
    std::uniform_real_distribution<double> u(0.5, 2.0);
    auto random_diag = [&] {
      Matrix m = Matrix::Zero(space->dim(), space->dim());
      for (long i = 0; i < m.rows(); ++i) m(i, i) = Scalar(u(rng), u(rng) - 1.25);
      return Operator(space, m);
    };
    for (int i = 0; i < spec.samples; ++i) {
      const Param a = alg->sample_idempotent(rng), b = alg->sample_idempotent(rng), c = alg->sample_idempotent(rng);
      axioms = std::max({axioms, (alg->mul(alg->mul(a, b), c) - alg->mul(a, alg->mul(b, c))).norm(),
                         (alg->mul(a, alg->add(b, c)) - alg->add(alg->mul(a, b), alg->mul(a, c))).norm(),
                         (alg->mul(a, b) - alg->mul(b, a)).norm(), (alg->mul(a, a) - a).norm()});
      roots = std::max(roots, (alg->sqrt_select(a) - a).norm());
      meet = std::max(meet, frobenius(alg->representation(a, space).matrix() * alg->representation(b, space).matrix() -
                                      alg->representation(alg->mul(a, b), space).matrix()));
      const Operator p = random_diag(), q = random_diag();
      const Matrix rho = alg->representation(a, space).matrix();
      compat = std::max(compat, frobenius(rho * (p.matrix() * q.matrix()) - (rho * p.matrix()) * (rho * q.matrix())));
    }
    r.checks.push_back(check_le("algebra_axioms", axioms, 0.0, "exact on idempotent samples"));
    r.checks.push_back(check_le("sqrt_idempotent", roots, 0.0));
    r.checks.push_back(check_le("disjoint_meet", meet, 0.0));
    r.checks.push_back(check_le("representation_compatibility", compat, 1e-14));
    const double unit = frobenius(alg->representation(alg->one(), space).matrix() - Matrix::Identity(space->dim(), space->dim()));
    r.checks.push_back(check_le("unit_mask", unit, 0.0));

    const Operator psi0 = random_diag();
    auto t1 = Gpt::representation(alg, psi0);
    Ppt p({psi0}, {PptTerm{{1}, CoefficientFunction::linear(1.0)}}, alg);
    const auto m = emerge(t1, p, scenario_options(spec, jobs, true));
    r.maps.push_back(record_map("F: eps -> delta", m));
    r.checks.push_back(check_le("oracle_agreement", oracle_gap(m, *t1, p, std::min(spec.samples, 20), spec.seed), 1e-8));
  } catch (const Error& e) {
    r.error = failure_of(e);
  }
  return r;
}

ScenarioResult run_scenario_spec(const ScenarioSpec& spec, int jobs) {
  switch (spec.kind) {
    case ScenarioKind::kGravityFromNoncommutativity: return run_gravity_from_noncommutativity(spec, jobs);
    case ScenarioKind::kNoncommutativityFromGravity: return run_noncommutativity_from_gravity(spec, jobs);
    case ScenarioKind::kCorollary: return run_corollary_instance(spec, jobs);
    case ScenarioKind::kBoolean: return run_boolean_scenario(spec, jobs);
  }
  throw Error(ErrorCode::kBadSpec, "unknown scenario kind");
}

}  // namespace emergence
