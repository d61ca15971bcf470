// dynbc <subcommand> --config <path> [--out <dir>] [--seed <u64>]
//
// Prints a JSON status object on stdout on success. On failure prints a JSON
// error report on stderr and exits nonzero (2 config, 3 solver, 4 filesystem,
// 64 usage, 1 anything else).

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "dynbc/config.hpp"
#include "dynbc/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Coupled bulk/boundary parabolic experiments", "dynbc"};
  app.set_version_flag("--version", std::string(dynbc::kVersion));
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  for (const auto& name : dynbc::subcommands()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "key = value configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides DYNBC_OUT and output.dir)");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"status", "error"}, {"kind", "usage_error"}, {"message", e.what()}}.dump() << "\n";
    return 64;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    dynbc::ExperimentConfig cfg = dynbc::load_config(config_path);
    if (seed) cfg.seed = *seed;
    const auto dir = dynbc::resolve_output_dir(cfg, out_dir);
    const dynbc::RunResult res = dynbc::run_experiment(name, cfg, dir);
    std::cout << nlohmann::json{{"status", "ok"},
                                {"subcommand", name},
                                {"output_dir", dir.string()},
                                {"files", res.files},
                                {"summary", res.summary}}
                     .dump(2)
              << "\n";
    return 0;
  } catch (const std::exception& e) {
    nlohmann::json rep = dynbc::error_report(e);
    rep["subcommand"] = name;
    std::cerr << rep.dump() << "\n";
    return dynbc::exit_code_for(rep);
  }
}
