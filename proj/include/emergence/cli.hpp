#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "emergence/scenarios.hpp"

namespace emergence::cli {

// Process exit codes beyond the scenario codes 0/1/2.
inline constexpr int kExitUsage = 64;
inline constexpr int kExitDataError = 65;  // parse or schema error in the config
inline constexpr int kExitNoInput = 66;
inline constexpr int kExitCantWrite = 73;

enum class ReportFormat { kJson, kText };

struct RunConfig {
  std::optional<std::string> scenario;  // built-in name
  std::optional<std::string> config;    // spec file path
  std::optional<int> samples;
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;  // stdout when empty
  ReportFormat format = ReportFormat::kJson;
  int jobs = 1;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses and validates a spec file. ParseError carries path:line:column.
ScenarioSpec load_spec_file(const std::string& path);
// Resolves the spec named by the config and applies the overrides.
ScenarioSpec resolve_spec(const RunConfig& config);

struct Report {
  ScenarioSpec spec;
  ScenarioResult result;
};

std::string spec_hash(const ScenarioSpec& spec);
Json report_json(const ScenarioSpec& spec, const ScenarioResult& result);
Report report_from_json(const Json& j);
std::string emit_report(const ScenarioSpec& spec, const ScenarioResult& result, ReportFormat format);

// Write to a sibling temporary and rename over `path`.
void write_atomic(const std::string& path, const std::string& content);

// Full run; diagnostics go to `err`, the report to `out` unless config.out is set.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace emergence::cli
