#include "emergence/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace emergence::cli {

namespace {

std::pair<long, long> line_column(const std::string& text, std::size_t byte) {
  long line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

std::string text_report(const ScenarioSpec& spec, const ScenarioResult& r) {
  std::ostringstream o;
  const Json j = r.to_json();
  o << "scenario " << r.scenario << " (" << scenario_kind_name(r.kind) << ")\n";
  o << "status " << j["status"].get<std::string>() << ", exit " << r.exit_code() << "\n";
  o << "seed " << spec.seed << ", spec " << spec_hash(spec) << ", library " << kLibraryVersion << "\n";
  if (r.maps.empty()) o << "no maps\n";
  for (const auto& m : r.maps) {
    const auto& c = m.certificate;
    o << "map " << m.label << ": " << m.assignment << " via " << m.root_lemma << ", depth " << m.provenance_depth
      << ", digest " << m.provenance_digest << "\n";
    o << "  certificate " << (c.pass ? "pass" : "FAIL") << " on " << c.samples << " samples, tol " << sci(c.tol)
      << ", functional " << sci(c.max_functional_residual) << ", operator " << sci(c.max_operator_residual) << "\n";
    if (c.failure_code) {
      o << "  failure " << error_code_name(*c.failure_code) << " at " << c.failure_path << ": " << c.failure << "\n";
    }
  }
  if (r.checks.empty()) o << "no checks\n";
  for (const auto& c : r.checks) {
    o << "check " << c.name << ": " << sci(c.value) << " <= " << sci(c.threshold) << " " << (c.pass ? "pass" : "FAIL")
      << "\n";
  }
  for (const auto& n : r.notes) o << "note " << n << "\n";
  if (r.error) {
    o << "error " << error_code_name(r.error->code);
    if (!r.error->path.empty()) o << " at " << r.error->path;
    o << ": " << r.error->message;
    if (r.error->residual) o << " (residual " << sci(*r.error->residual) << ")";
    o << "\n";
  }
  return o.str();
}

}  // namespace

ScenarioSpec load_spec_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(ErrorCode::kParseError,
                path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
  try {
    return ScenarioSpec::from_json(j);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSchemaError) throw;
    const std::string what = e.what();
    const std::string prefix = "SchemaError: ";
    throw Error(ErrorCode::kSchemaError, path + ": " + (what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what));
  }
}

ScenarioSpec resolve_spec(const RunConfig& config) {
  if (config.scenario.has_value() == config.config.has_value()) {
    throw UsageError("give exactly one of --scenario or --config");
  }
  ScenarioSpec spec;
  if (config.scenario) {
    const auto names = builtin_scenarios();
    if (std::find(names.begin(), names.end(), *config.scenario) == names.end()) {
      throw UsageError("unknown scenario '" + *config.scenario + "' (try --list)");
    }
    spec = builtin_scenario(*config.scenario);
  } else {
    spec = load_spec_file(*config.config);
  }
  if (config.samples) {
    if (*config.samples < 1) throw UsageError("--samples must be >= 1");
    spec.samples = *config.samples;
  }
  if (config.tol) {
    if (!(*config.tol > 0.0)) throw UsageError("--tol must be > 0");
    spec.tol = *config.tol;
  }
  if (config.seed) spec.seed = *config.seed;
  if (config.jobs < 1) throw UsageError("--jobs must be >= 1");
  return spec;
}

std::string spec_hash(const ScenarioSpec& spec) { return fnv1a_hex(spec.to_json().dump()); }

Json report_json(const ScenarioSpec& spec, const ScenarioResult& result) {
  Json j;
  j["report_version"] = kReportVersion;
  j["library_version"] = kLibraryVersion;
  j["spec_hash"] = spec_hash(spec);
  j["seed"] = spec.seed;
  j["spec"] = spec.to_json();
  j["result"] = result.to_json();
  return j;
}

Report report_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("report_version") || !j.contains("spec") || !j.contains("result")) {
    throw Error(ErrorCode::kSchemaError, "report needs report_version, spec and result");
  }
  if (j.at("report_version") != kReportVersion) {
    throw Error(ErrorCode::kSchemaError, "unsupported report_version " + j.at("report_version").dump());
  }
  Report r{ScenarioSpec::from_json(j.at("spec")), ScenarioResult::from_json(j.at("result"))};
  if (j.contains("spec_hash") && j.at("spec_hash") != spec_hash(r.spec)) {
    throw Error(ErrorCode::kSchemaError, "spec_hash does not match the embedded spec");
  }
  return r;
}

std::string emit_report(const ScenarioSpec& spec, const ScenarioResult& result, ReportFormat format) {
  if (format == ReportFormat::kText) return text_report(spec, result);
  return report_json(spec, result).dump(2) + "\n";
}

void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    o << content;
    o.flush();
    if (!o) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot move report into '" + path + "': " + ec.message());
  }
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  ScenarioSpec spec;
  try {
    spec = resolve_spec(config);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitNoInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  const ScenarioResult result = run_scenario_spec(spec, config.jobs);
  if (result.error) {
    err << "synthesis error: " << error_code_name(result.error->code) << ": " << result.error->message << "\n";
  } else if (!result.certified()) {
    err << "certified failure in scenario " << result.scenario << "\n";
  }
  const std::string doc = emit_report(spec, result, config.format);
  if (config.out && !config.out->empty()) {
    try {
      write_atomic(*config.out, doc);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitCantWrite;
    }
  } else {
    out << doc;
  }
  return result.exit_code();
}

}  // namespace emergence::cli
