#include "emergence/serialization.hpp"

#include <array>

namespace emergence {

namespace {

constexpr std::array<std::pair<OperatorKind, std::string_view>, 10> kKindNames{{
    {OperatorKind::kShift, "shift"},
    {OperatorKind::kPartial, "partial"},
    {OperatorKind::kSecondPartial, "second_partial"},
    {OperatorKind::kBox, "box"},
    {OperatorKind::kD1Basis, "d1_basis"},
    {OperatorKind::kD2Background, "d2_background"},
    {OperatorKind::kProjection, "projection"},
    {OperatorKind::kConstant, "constant"},
    {OperatorKind::kIdentity, "identity"},
    {OperatorKind::kMassiveBox, "massive_box"},
}};

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::kSchemaError, what); }

const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) schema(std::string("missing field '") + name + "'");
  return j.at(name);
}

}  // namespace

std::string_view operator_kind_name(OperatorKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  Json re = Json::array();
  Json im = Json::array();
  bool any_imag = false;
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) {
      re.push_back(m(r, c).real());
      im.push_back(m(r, c).imag());
      any_imag = any_imag || m(r, c).imag() != 0.0;
    }
  }
  j["re"] = std::move(re);
  if (any_imag) j["im"] = std::move(im);
  return j;
}

Matrix matrix_from_json(const Json& j) {
  try {
    const long rows = field(j, "rows").get<long>();
    const long cols = field(j, "cols").get<long>();
    const auto& re = field(j, "re");
    if (rows < 0 || cols < 0 || static_cast<long>(re.size()) != rows * cols) {
      schema("matrix 're' must hold rows*cols entries");
    }
    const bool has_im = j.contains("im");
    if (has_im && static_cast<long>(j.at("im").size()) != rows * cols) {
      schema("matrix 'im' must hold rows*cols entries");
    }
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
      for (long c = 0; c < cols; ++c) {
        const auto idx = static_cast<std::size_t>(r * cols + c);
        m(r, c) = Scalar(re.at(idx).get<double>(), has_im ? j.at("im").at(idx).get<double>() : 0.0);
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("bad matrix payload: ") + e.what());
  }
}

Json vector_to_json(const Vector& v) {
  Json j;
  Json re = Json::array();
  Json im = Json::array();
  bool any_imag = false;
  for (long i = 0; i < v.size(); ++i) {
    re.push_back(v(i).real());
    im.push_back(v(i).imag());
    any_imag = any_imag || v(i).imag() != 0.0;
  }
  j["re"] = std::move(re);
  if (any_imag) j["im"] = std::move(im);
  return j;
}

Vector vector_from_json(const Json& j) {
  try {
    if (j.is_array()) {
      Vector v(static_cast<long>(j.size()));
      for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<long>(i)) = j[i].get<double>();
      return v;
    }
    const auto& re = field(j, "re");
    const bool has_im = j.contains("im");
    if (has_im && j.at("im").size() != re.size()) schema("vector 'im' length differs from 're'");
    Vector v(static_cast<long>(re.size()));
    for (std::size_t i = 0; i < re.size(); ++i) {
      v(static_cast<long>(i)) = Scalar(re[i].get<double>(), has_im ? j.at("im")[i].get<double>() : 0.0);
    }
    return v;
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("bad vector payload: ") + e.what());
  }
}

Json grid_to_json(const GridGeometry& g) {
  Json j;
  j["dims"] = g.dims;
  j["spacing"] = g.spacing;
  j["periodic"] = g.periodic;
  return j;
}

GridGeometry grid_from_json(const Json& j) {
  GridGeometry g;
  try {
    g.dims = field(j, "dims").get<std::vector<int>>();
    if (j.contains("spacing")) {
      g.spacing = j.at("spacing").get<std::vector<double>>();
    } else {
      g.spacing.assign(g.dims.size(), 1.0);
    }
    g.periodic = j.value("periodic", true);
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("bad grid: ") + e.what());
  }
  if (g.dims.empty()) schema("grid.dims must be nonempty");
  if (g.dims.size() != g.spacing.size()) schema("grid.spacing length differs from grid.dims");
  return g;
}

Json operator_spec_to_json(const OperatorSpec& spec) {
  Json j;
  j["kind"] = operator_kind_name(spec.kind);
  if (!spec.grid.dims.empty()) j["grid"] = grid_to_json(spec.grid);
  switch (spec.kind) {
    case OperatorKind::kShift:
      j["axis"] = spec.axis;
      j["steps"] = spec.steps;
      break;
    case OperatorKind::kPartial:
      j["axis"] = spec.axis;
      j["scheme"] = spec.scheme == DiffScheme::kCentral ? "central" : "forward";
      break;
    case OperatorKind::kSecondPartial:
    case OperatorKind::kD1Basis:
      j["axis"] = spec.axis;
      j["axis2"] = spec.axis2;
      break;
    case OperatorKind::kMassiveBox:
      j["mass"] = spec.mass;
      [[fallthrough]];
    case OperatorKind::kBox:
      if (spec.metric.size() > 0) j["metric"] = matrix_to_json(spec.metric);
      break;
    case OperatorKind::kD2Background:
      j["field_strength"] = matrix_to_json(spec.field_strength);
      if (spec.metric.size() > 0) j["metric"] = matrix_to_json(spec.metric);
      if (spec.theta.size() > 0) j["theta"] = matrix_to_json(spec.theta);
      break;
    case OperatorKind::kProjection:
    case OperatorKind::kConstant:
      j["payload"] = matrix_to_json(spec.payload);
      break;
    case OperatorKind::kIdentity:
      break;
  }
  return j;
}

OperatorSpec operator_spec_from_json(const Json& j) {
  OperatorSpec spec;
  const std::string kind = field(j, "kind").get<std::string>();
  bool found = false;
  for (const auto& [k, name] : kKindNames) {
    if (name == kind) {
      spec.kind = k;
      found = true;
    }
  }
  if (!found) schema("unknown operator kind '" + kind + "'");
  try {
    if (j.contains("grid")) spec.grid = grid_from_json(j.at("grid"));
    spec.axis = j.value("axis", 0);
    spec.axis2 = j.value("axis2", spec.axis);
    spec.steps = j.value("steps", 1);
    const std::string scheme = j.value("scheme", std::string("central"));
    if (scheme == "central") {
      spec.scheme = DiffScheme::kCentral;
    } else if (scheme == "forward") {
      spec.scheme = DiffScheme::kForward;
    } else {
      schema("unknown derivative scheme '" + scheme + "'");
    }
    spec.mass = j.value("mass", 0.0);
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("bad operator spec: ") + e.what());
  }
  if (j.contains("metric")) spec.metric = matrix_from_json(j.at("metric"));
  if (j.contains("field_strength")) spec.field_strength = matrix_from_json(j.at("field_strength"));
  if (j.contains("theta")) spec.theta = matrix_from_json(j.at("theta"));
  if (j.contains("payload")) spec.payload = matrix_from_json(j.at("payload"));
  if (spec.kind == OperatorKind::kD2Background && spec.field_strength.size() == 0) {
    schema("d2_background requires 'field_strength'");
  }
  if ((spec.kind == OperatorKind::kProjection || spec.kind == OperatorKind::kConstant) &&
      spec.payload.size() == 0) {
    schema(std::string(operator_kind_name(spec.kind)) + " requires 'payload'");
  }
  return spec;
}

}  // namespace emergence
