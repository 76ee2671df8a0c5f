// Command-line entry point: ensemblelab <subcommand> [--config FILE]
// [--seed N] [--out DIR] [--set key=value ...]

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ensemblelab/cli.hpp"

namespace cli = ensemblelab::cli;

int main(int argc, char** argv) {
  CLI::App app{"Ensemble statistics laboratory"};
  std::string subcommand;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> sets;

  std::string names;
  for (const auto& s : cli::subcommands()) names += (names.empty() ? "" : ", ") + s;
  app.add_option("subcommand", subcommand, "Experiment to run: " + names)->required();
  app.add_option("--config", config_path, "JSON configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides the config file)");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides the config file)");
  app.add_option("--set", sets, "Parameter override key=value; value parsed as JSON if possible");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kSchemaError;
  }

  if (!cli::is_subcommand(subcommand)) {
    std::cerr << "error: unknown subcommand '" << subcommand << "' (expected one of " << names
              << ")\n";
    return cli::kSchemaError;
  }

  std::optional<cli::json> document;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) {
      std::cerr << "error: cannot read config file " << config_path << "\n";
      return cli::kSchemaError;
    }
    auto parsed = cli::json::parse(f, nullptr, false);
    if (parsed.is_discarded()) {
      std::cerr << "error: config file " << config_path << " is not valid JSON\n";
      return cli::kSchemaError;
    }
    document = std::move(parsed);
  }

  cli::RunConfig cfg;
  try {
    cfg = cli::make_config(subcommand, document,
                           seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
                           out_opt->count() ? std::optional<std::filesystem::path>(out_dir)
                                            : std::nullopt,
                           sets);
  } catch (const cli::SchemaError& e) {
    std::cerr << "error: invalid configuration " << e.what() << "\n";
    return cli::kSchemaError;
  }
  return cli::run(cfg, std::cerr);
}
