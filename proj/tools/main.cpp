#include <cstddef>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rpb/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "Recursive PAC-Bayes bounds: experiment runner, baselines, and "
      "Monte Carlo coverage checks"};
  app.require_subcommand(1);

  std::size_t n = 0;
  std::size_t steps = 0;
  CLI::App* split = app.add_subcommand(
      "split", "Print the geometric chunk sizes for n points and T steps");
  split->add_option("n", n, "dataset size")->required();
  split->add_option("steps", steps, "number of steps T")->required();

  std::string run_config;
  CLI::App* run = app.add_subcommand(
      "run", "Run one method from a JSON config and print its report");
  run->add_option("config", run_config, "JSON config path")->required();

  std::string validate_config;
  CLI::App* validate = app.add_subcommand(
      "validate", "Run a Monte Carlo coverage harness from a JSON config");
  validate->add_option("config", validate_config, "JSON config path")
      ->required();

  std::string compare_config;
  CLI::App* compare = app.add_subcommand(
      "compare", "Run every method and print a merged comparison table");
  compare->add_option("config", compare_config, "JSON config path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Bad command lines are config errors; --help and --version exit clean.
    const int code = app.exit(e);
    return code == 0 ? rpb::kExitSuccess : rpb::kExitConfig;
  }

  if (split->parsed()) return rpb::cmd_split(n, steps, std::cout, std::cerr);
  if (run->parsed()) return rpb::cmd_run(run_config, std::cout, std::cerr);
  if (validate->parsed()) {
    return rpb::cmd_validate(validate_config, std::cout, std::cerr);
  }
  return rpb::cmd_compare(compare_config, std::cout, std::cerr);
}