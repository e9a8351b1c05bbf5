#pragma once
// Monte Carlo coverage verification: every high-probability guarantee in the
// library is exercised end to end on synthetic data whose ground truth is
// exactly computable, and the observed violation rate is compared against the
// stated level. Truths are always analytic (discrete distributions or the
// threshold task's closed-form risk); estimated truths would confound the
// check. Trials run in parallel with per-trial deterministic seeds, so
// results are independent of thread count and execution order.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rpb/data.hpp"
#include "rpb/hypotheses.hpp"

namespace rpb {

struct CoverageReport {
  std::string harness;
  std::size_t trials = 0;
  std::size_t violations = 0;  // trials with truth > bound
  double coverage = 0.0;       // 1 - violations / trials
  double target_level = 0.0;   // 1 - delta
  std::vector<double> bounds;  // per trial
  std::vector<double> truths;  // per trial

  // Acceptance absorbs Monte Carlo slack at small delta: the bounds are
  // conservative and empirically cover near 1.0, so 0.95 suffices even when
  // 1 - delta is higher; for large delta the stated level is the gate.
  double pass_threshold() const { return std::min(0.95, target_level); }
  bool passed() const { return coverage >= pass_threshold(); }
  double mean_gap() const;  // mean of bound - truth (tightness indicator)

  nlohmann::json to_json() const;
  std::string to_csv() const;  // header plus a one-line summary
};

// Runs `trials` independent experiments (threads = 0 picks the hardware
// count); trial i receives derive_seed(seed, "trial", i) and returns a
// (bound, truth) pair. Aggregation is by trial index, so the report does not
// depend on scheduling.
CoverageReport run_coverage_trials(
    const std::string& harness, std::size_t trials, double delta,
    std::uint64_t seed,
    const std::function<std::pair<double, double>(std::uint64_t)>& trial,
    std::size_t threads = 0);

// split-kl upper bound on the mean of a discrete variable with known
// distribution: each trial draws n points and compares the bound to the
// exact mean.
CoverageReport coverage_split_kl(const std::vector<double>& support_points,
                                 const std::vector<double>& probs,
                                 std::size_t n, double delta,
                                 std::size_t trials, std::uint64_t seed,
                                 std::size_t threads = 0);

// Single-variable kl upper bound on the mean of a [0,1]-valued discrete
// variable; values {0,1} give the Bernoulli case, and delta = delta'_part
// makes it exactly the Monte Carlo sampling bound.
CoverageReport coverage_kl_bound(const std::vector<double>& values,
                                 const std::vector<double>& probs,
                                 std::size_t n, double delta,
                                 std::size_t trials, std::uint64_t seed,
                                 std::size_t threads = 0);

// PAC-Bayes-kl bound with a data-dependent softmax posterior over threshold
// rules on the noisy threshold task; truth is the exact Gibbs risk.
CoverageReport coverage_pb_kl(const ThresholdTask& task, std::size_t grid,
                              std::size_t n, double delta, std::size_t trials,
                              std::uint64_t seed, std::size_t threads = 0);

// PAC-Bayes-split-kl bound on the excess loss against realized per-point
// reference draws from the uniform prior; truth is the exact expected excess
// E_rho[L(h)] - gamma E_prior[L(h')].
CoverageReport coverage_pb_split_kl(const ThresholdTask& task,
                                    std::size_t grid, double gamma,
                                    std::size_t n, double delta,
                                    std::size_t trials, std::uint64_t seed,
                                    std::size_t threads = 0);

// Full recursive pipeline in exact mode on the threshold task; the final
// bound B_T is compared to the exact Gibbs risk of the final posterior.
// `train` overrides the trainer settings when given (defaults otherwise).
CoverageReport coverage_recursive(const ThresholdTask& task, std::size_t grid,
                                  std::size_t n, std::size_t steps,
                                  double delta, std::size_t trials,
                                  std::uint64_t seed, std::size_t threads = 0,
                                  const TrainConfig* train = nullptr);

// One baseline pipeline ("uninformed", "informed", or "informed-excess") in
// exact mode on the threshold task; truth as in coverage_recursive.
CoverageReport coverage_baseline(const std::string& method,
                                 const ThresholdTask& task, std::size_t grid,
                                 std::size_t n, double delta,
                                 std::size_t trials, std::uint64_t seed,
                                 std::size_t threads = 0,
                                 const TrainConfig* train = nullptr);

}  // namespace rpb
