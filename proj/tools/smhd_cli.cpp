// Command-line driver: solve, study and diagnose runs from JSON configs.
// Exit codes: 0 success, 1 solver failure, 2 config error.
#include "smhd/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Mixed finite element solver for stationary incompressible MHD"};
  app.require_subcommand(1);
  std::string config;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Do not print the report to stdout");

  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", config, "JSON run configuration")->required();
    sub->add_option("--seed", seed, "Override the probe seed");
    return sub;
  };
  CLI::App* solve = add("solve", "Picard iteration for one discretization");
  CLI::App* study = add("study", "Convergence study over mesh levels");
  CLI::App* diagnose = add("diagnose", "Structure checks, constants and one Picard run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  smhd::RunResult res;
  try {
    smhd::RunConfig cfg = smhd::load_config(config);
    if (seed) cfg.seed = *seed;
    if (solve->parsed()) res = smhd::run_solve(cfg);
    else if (study->parsed()) res = smhd::run_study(cfg);
    else if (diagnose->parsed()) res = smhd::run_diagnose(cfg);
  } catch (const smhd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (!quiet) {
    if (study->parsed()) std::cout << res.csv;
    else std::cout << smhd::dump_json(res.report);
  }
  std::cerr << res.message << "\n";
  return res.exit_code;
}
