// opc-lab <subcommand> --config <path> --out <path> [--seed N]
//
// Exit codes: 0 success, 2 configuration error, 1 runtime error. Failures
// print one JSON object on stderr and never leave an output file behind.

#include "opclab/studies.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <iostream>
#include <optional>

namespace {

int report(int code, const std::string& kind, const std::string& message,
           const std::string& subcommand, const std::string& field = {}) {
  nlohmann::json line{{"status", "error"}, {"kind", kind}, {"message", message}};
  if (!subcommand.empty()) line["subcommand"] = subcommand;
  if (!field.empty()) line["field"] = field;
  std::cerr << line.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-based RL with on-policy corrections: analytic studies"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  for (const auto& name : opclab::study_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " study");
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_path, "CSV output path")->required();
    sub->add_option("--seed", seed, "overrides experiment.seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(2, "usage", e.what(), "");
  }

  const std::string subcommand = app.get_subcommands().front()->get_name();
  try {
    auto cfg = opclab::ExperimentConfig::load(config_path);
    if (seed) cfg.set("experiment.seed", std::to_string(*seed));
    const auto table = opclab::run_study(subcommand, cfg);
    opclab::write_file_atomic(out_path, table.to_csv());
  } catch (const opclab::ConfigError& e) {
    return report(2, "config", e.what(), subcommand, e.field());
  } catch (const std::exception& e) {
    return report(1, "runtime", e.what(), subcommand);
  }
  return 0;
}
