#pragma once
// Batch experiment runner over the library. Each command parses a strict
// JSON config (except split, which takes its two numbers directly), writes
// its primary CSV to `out` and diagnostics to `err`, and optionally writes
// CSV/JSON/checkpoint files named by the config.
//
// Every bound a command emits is re-validated first: the trained
// distributions are serialized, parsed back, and the bound recomputed from
// the parsed checkpoint must reproduce the original bit for bit.

#include <cstddef>
#include <ostream>
#include <string>

namespace rpb {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitConfig = 1;      // schema or argument problems
inline constexpr int kExitRuntime = 2;     // data or computation failures
inline constexpr int kExitValidation = 3;  // coverage below target

// Prints the geometric chunk sizes for n points over `steps` steps as one
// comma-separated line.
int cmd_split(std::size_t n, std::size_t steps, std::ostream& out,
              std::ostream& err);

// Runs one method (rpb or a baseline) from an experiment config.
int cmd_run(const std::string& config_path, std::ostream& out,
            std::ostream& err);

// Runs a Monte Carlo coverage harness; exit 3 when coverage misses the
// target.
int cmd_validate(const std::string& config_path, std::ostream& out,
                 std::ostream& err);

// Runs all four methods (rpb, uninformed, informed, informed-excess) per
// seed and prints one merged table: per-method rows with train01, test01,
// and bound for a single seed, or mean and standard deviation columns when
// the config lists several seeds.
int cmd_compare(const std::string& config_path, std::ostream& out,
                std::ostream& err);

}  // namespace rpb