#include "rpb/validate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "rpb/baselines.hpp"
#include "rpb/concentration.hpp"
#include "rpb/pacbayes.hpp"
#include "rpb/random.hpp"
#include "rpb/recursion.hpp"

namespace rpb {

namespace {

// Validated categorical over arbitrary outcome values; returns the exact
// mean under the (normalized) probabilities.
struct OutcomeDistribution {
  std::vector<double> values;
  std::vector<double> cdf;
  double mean = 0.0;

  OutcomeDistribution(const std::vector<double>& vals,
                      const std::vector<double>& probs) {
    if (vals.empty() || vals.size() != probs.size()) {
      throw std::invalid_argument("need one probability per outcome");
    }
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) {
        throw std::invalid_argument("probabilities must be nonnegative");
      }
      sum += p;
    }
    if (!(sum > 0.0)) {
      throw std::invalid_argument("probabilities must not all be zero");
    }
    values = vals;
    cdf.resize(probs.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i] / sum;
      cdf[i] = acc;
      mean += values[i] * probs[i] / sum;
    }
    cdf.back() = 1.0 + 1e-12;
  }

  std::size_t draw_index(std::mt19937_64& eng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return static_cast<std::size_t>(
        std::upper_bound(cdf.begin(), cdf.end(), u(eng)) - cdf.begin());
  }
};

// Softmax posterior exp(-errors/2) over the grid: data-dependent (what
// PAC-Bayes must tolerate) yet cheap and deterministic.
std::vector<double> softmax_posterior(const std::vector<std::size_t>& errors) {
  const std::size_t mn = *std::min_element(errors.begin(), errors.end());
  std::vector<double> w(errors.size());
  double z = 0.0;
  for (std::size_t h = 0; h < errors.size(); ++h) {
    w[h] = std::exp(-0.5 * static_cast<double>(errors[h] - mn));
    z += w[h];
  }
  for (double& v : w) v /= z;
  return w;
}

std::vector<std::size_t> grid_errors(const ThresholdGrid& grid,
                                     const Dataset& data) {
  std::vector<std::size_t> errors(grid.thresholds.size(), 0);
  for (std::size_t h = 0; h < grid.thresholds.size(); ++h) {
    const double theta = grid.thresholds[h];
    for (std::size_t i = 0; i < data.n; ++i) {
      const int pred = data.features[i] >= theta ? 1 : 0;
      errors[h] += pred != data.labels[i];
    }
  }
  return errors;
}

double gibbs_true_risk(const std::vector<double>& weights,
                       const ThresholdGrid& grid, const ThresholdTask& task) {
  double risk = 0.0;
  for (std::size_t h = 0; h < weights.size(); ++h) {
    risk += weights[h] * true_risk_threshold(grid.thresholds[h], task);
  }
  return risk;
}

TrainConfig resolved_train(const TrainConfig* train) {
  return train != nullptr ? *train : TrainConfig{};
}

}  // namespace

double CoverageReport::mean_gap() const {
  if (bounds.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    acc += bounds[i] - truths[i];
  }
  return acc / static_cast<double>(bounds.size());
}

nlohmann::json CoverageReport::to_json() const {
  nlohmann::json j;
  j["harness"] = harness;
  j["trials"] = trials;
  j["violations"] = violations;
  j["coverage"] = coverage;
  j["target_level"] = target_level;
  j["pass_threshold"] = pass_threshold();
  j["passed"] = passed();
  j["mean_gap"] = mean_gap();
  j["bounds"] = bounds;
  j["truths"] = truths;
  return j;
}

std::string CoverageReport::to_csv() const {
  std::string out =
      "harness,trials,violations,coverage,target_level,passed\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.12g,%.12g,%d\n",
                harness.c_str(), trials, violations, coverage, target_level,
                passed() ? 1 : 0);
  out += buf;
  return out;
}

CoverageReport run_coverage_trials(
    const std::string& harness, std::size_t trials, double delta,
    std::uint64_t seed,
    const std::function<std::pair<double, double>(std::uint64_t)>& trial,
    std::size_t threads) {
  if (trials == 0) throw std::invalid_argument("need at least one trial");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0,1)");
  }
  CoverageReport rep;
  rep.harness = harness;
  rep.trials = trials;
  rep.target_level = 1.0 - delta;
  rep.bounds.resize(trials);
  rep.truths.resize(trials);

  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = std::min(threads, trials);

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= trials) return;
      try {
        const auto [bound, truth] = trial(derive_seed(seed, "trial", i));
        rep.bounds[i] = bound;
        rep.truths[i] = truth;
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(trials);
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  for (std::size_t i = 0; i < trials; ++i) {
    if (rep.truths[i] > rep.bounds[i]) ++rep.violations;
  }
  rep.coverage =
      1.0 - static_cast<double>(rep.violations) / static_cast<double>(trials);
  return rep;
}

CoverageReport coverage_split_kl(const std::vector<double>& support_points,
                                 const std::vector<double>& probs,
                                 std::size_t n, double delta,
                                 std::size_t trials, std::uint64_t seed,
                                 std::size_t threads) {
  if (n == 0) throw std::invalid_argument("need at least one observation");
  const auto support = std::make_shared<DiscreteSupport>(support_points);
  const auto dist = std::make_shared<OutcomeDistribution>(
      support->points(), probs);
  auto trial = [=](std::uint64_t trial_seed) -> std::pair<double, double> {
    auto eng = make_engine(trial_seed, "draws");
    const std::size_t K = support->segments();
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < n; ++i) {
      // Outcome index j means point b_j, so the indicator 1[Z >= b_k] is
      // simply j >= k.
      const std::size_t idx = dist->draw_index(eng);
      for (std::size_t k = 1; k <= idx && k <= K; ++k) ++counts[k - 1];
    }
    std::vector<double> means(K);
    for (std::size_t k = 0; k < K; ++k) {
      means[k] = static_cast<double>(counts[k]) / static_cast<double>(n);
    }
    return {split_kl_upper(means, *support, n, delta), dist->mean};
  };
  return run_coverage_trials("split-kl", trials, delta, seed, trial, threads);
}

CoverageReport coverage_kl_bound(const std::vector<double>& values,
                                 const std::vector<double>& probs,
                                 std::size_t n, double delta,
                                 std::size_t trials, std::uint64_t seed,
                                 std::size_t threads) {
  if (n == 0) throw std::invalid_argument("need at least one observation");
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("outcome values must lie in [0,1]");
    }
  }
  const auto dist = std::make_shared<OutcomeDistribution>(values, probs);
  auto trial = [=](std::uint64_t trial_seed) -> std::pair<double, double> {
    auto eng = make_engine(trial_seed, "draws");
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += dist->values[dist->draw_index(eng)];
    }
    return {kl_bound_upper(sum / static_cast<double>(n), n, delta),
            dist->mean};
  };
  return run_coverage_trials("kl", trials, delta, seed, trial, threads);
}

CoverageReport coverage_pb_kl(const ThresholdTask& task, std::size_t grid,
                              std::size_t n, double delta, std::size_t trials,
                              std::uint64_t seed, std::size_t threads) {
  if (n == 0) throw std::invalid_argument("need at least one observation");
  const auto g = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(grid));
  auto trial = [=](std::uint64_t trial_seed) -> std::pair<double, double> {
    const Dataset data = gen_threshold_data(task, n, trial_seed);
    const auto errors = grid_errors(*g, data);
    const auto rho = softmax_posterior(errors);
    const std::vector<double> prior(
        rho.size(), 1.0 / static_cast<double>(rho.size()));
    double emp = 0.0;
    for (std::size_t h = 0; h < rho.size(); ++h) {
      emp += rho[h] * static_cast<double>(errors[h]) /
             static_cast<double>(n);
    }
    const double kl = categorical_kl(rho, prior);
    return {pb_kl_upper({emp, kl, n}, delta, 1),
            gibbs_true_risk(rho, *g, task)};
  };
  return run_coverage_trials("pb-kl", trials, delta, seed, trial, threads);
}

CoverageReport coverage_pb_split_kl(const ThresholdTask& task,
                                    std::size_t grid, double gamma,
                                    std::size_t n, double delta,
                                    std::size_t trials, std::uint64_t seed,
                                    std::size_t threads) {
  if (n == 0) throw std::invalid_argument("need at least one observation");
  const auto g = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(grid));
  const auto es = std::make_shared<ExcessSupport>(gamma);
  auto trial = [=](std::uint64_t trial_seed) -> std::pair<double, double> {
    const Dataset data = gen_threshold_data(task, n, trial_seed);
    const CategoricalDistribution prior = CategoricalDistribution::uniform(g);
    // Realized reference draws h' ~ prior become part of the data points.
    const TripletSet triplets = build_triplets(
        full_view(data), prior, derive_seed(trial_seed, "prior"));
    const auto errors = grid_errors(*g, data);
    const CategoricalDistribution rho(g, softmax_posterior(errors));
    const double kl = categorical_kl(rho.weights(), prior.weights());
    const ExcessEstimate est = estimate_excess_means(
        rho, triplets, *es, EstimationMode::exact, 0);
    const double bound = pb_split_kl_upper(est.means, es->support(), kl, n,
                                           delta, 1);
    // E[f] = E_rho[L(h)] - gamma * E_prior[L(h')], both risks exact.
    const double truth =
        gibbs_true_risk(rho.weights(), *g, task) -
        gamma * gibbs_true_risk(prior.weights(), *g, task);
    return {bound, truth};
  };
  return run_coverage_trials("pb-split-kl", trials, delta, seed, trial,
                             threads);
}

CoverageReport coverage_recursive(const ThresholdTask& task, std::size_t grid,
                                  std::size_t n, std::size_t steps,
                                  double delta, std::size_t trials,
                                  std::uint64_t seed, std::size_t threads,
                                  const TrainConfig* train) {
  const auto g = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(grid));
  const TrainConfig tc = resolved_train(train);
  auto trial = [=](std::uint64_t trial_seed) -> std::pair<double, double> {
    const Dataset data = gen_threshold_data(task, n, trial_seed);
    RecursionConfig cfg;
    cfg.steps = steps;
    cfg.mode = EstimationMode::exact;
    cfg.delta = delta;
    cfg.train = tc;
    cfg.seed = derive_seed(trial_seed, "pipeline");
    const RecursiveRun run =
        run_recursive(CategoricalDistribution::uniform(g), data, cfg);
    const auto& post = std::get<CategoricalDistribution>(run.posterior());
    return {run.trace.final_bound(),
            gibbs_true_risk(post.weights(), *g, task)};
  };
  return run_coverage_trials("recursive", trials, delta, seed, trial,
                             threads);
}

CoverageReport coverage_baseline(const std::string& method,
                                 const ThresholdTask& task, std::size_t grid,
                                 std::size_t n, double delta,
                                 std::size_t trials, std::uint64_t seed,
                                 std::size_t threads,
                                 const TrainConfig* train) {
  const auto g = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(grid));
  const TrainConfig tc = resolved_train(train);
  BaselineReport (*runner)(const HypothesisDistribution&, const Dataset&,
                           const BaselineConfig&, const Dataset*) = nullptr;
  if (method == "uninformed") {
    runner = run_uninformed;
  } else if (method == "informed") {
    runner = run_informed;
  } else if (method == "informed-excess") {
    runner = run_informed_excess;
  } else {
    throw std::invalid_argument("unknown baseline method: " + method);
  }
  auto trial = [=](std::uint64_t trial_seed) -> std::pair<double, double> {
    const Dataset data = gen_threshold_data(task, n, trial_seed);
    BaselineConfig cfg;
    cfg.mode = EstimationMode::exact;
    cfg.delta = delta;
    cfg.train = tc;
    cfg.seed = derive_seed(trial_seed, "pipeline");
    const BaselineReport rep =
        runner(CategoricalDistribution::uniform(g), data, cfg, nullptr);
    const auto& post = std::get<CategoricalDistribution>(*rep.posterior);
    return {rep.bound, gibbs_true_risk(post.weights(), *g, task)};
  };
  return run_coverage_trials(method, trials, delta, seed, trial, threads);
}

}  // namespace rpb
