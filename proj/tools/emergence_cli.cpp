#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "emergence/cli.hpp"

using namespace emergence;

int main(int argc, char** argv) {
  CLI::App app{"Synthesize and certify emergence maps between parameterized field theories."};
  app.set_version_flag("--version", kLibraryVersion);

  cli::RunConfig config;
  bool list = false;
  std::string print_spec;
  std::string format = "json";

  auto* scenario = app.add_option("--scenario", config.scenario, "built-in scenario name");
  auto* file = app.add_option("--config", config.config, "scenario spec JSON file");
  scenario->excludes(file);
  app.add_option("--samples", config.samples, "certificate samples (>= 1)")->check(CLI::Range(1, 1 << 30));
  app.add_option("--tol", config.tol, "certificate tolerance (> 0)")->check(CLI::PositiveNumber);
  app.add_option("--seed", config.seed, "sampling seed");
  app.add_option("--out", config.out, "report path, written atomically; stdout when absent");
  app.add_option("--format", format, "report format")->check(CLI::IsMember({"json", "text"}));
  app.add_option("--jobs", config.jobs, "verification threads")->check(CLI::Range(1, 256));
  app.add_flag("--list", list, "list built-in scenarios");
  app.add_option("--print-spec", print_spec, "print the resolved spec of a built-in scenario");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  }

  if (list) {
    for (const auto& name : builtin_scenarios()) {
      std::cout << name << "  " << scenario_kind_name(builtin_scenario(name).kind) << "\n";
    }
    return 0;
  }
  if (!print_spec.empty()) {
    try {
      std::cout << builtin_scenario(print_spec).to_json().dump(2) << "\n";
    } catch (const Error& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return cli::kExitUsage;
    }
    return 0;
  }
  config.format = format == "text" ? cli::ReportFormat::kText : cli::ReportFormat::kJson;
  return cli::run(config, std::cout, std::cerr);
}
