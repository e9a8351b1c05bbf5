#include "rpb/recursion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include "rpb/random.hpp"

namespace rpb {

namespace {

constexpr std::size_t kExcessSegments = 3;  // segments of {-g, 0, 1-g, 1}

std::uint64_t gamma_bits(double gamma) {
  return std::bit_cast<std::uint64_t>(gamma);
}

void append_cell(std::string& out, double v) {
  if (std::isnan(v)) return;  // empty cell
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  out += buf;
}

nlohmann::json json_number(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

// delta' is cut into one share per Monte Carlo estimate that could be
// consulted: the first step's loss estimate plus one per support segment per
// candidate bound at the later steps.
std::size_t sampling_parts(std::size_t steps, std::size_t grid_size) {
  return 1 + kExcessSegments * (steps - 1) * grid_size;
}

}  // namespace

// ---------- data split ----------

std::vector<std::size_t> geometric_split(std::size_t n, std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("need at least one step");
  if (steps >= 64 || (n >> (steps - 1)) == 0) {
    throw std::invalid_argument("too many steps: a chunk would be empty");
  }
  if (steps == 1) return {n};
  std::vector<std::size_t> sizes(steps, 0);
  // Chunks t = 3..T take floor(n / 2^(T-t+1)): ..., a quarter, half of n.
  std::size_t rest = 0;
  for (std::size_t t = 3; t <= steps; ++t) {
    sizes[t - 1] = n >> (steps - t + 1);
    rest += sizes[t - 1];
  }
  // The two leading chunks split what remains, the second rounding up.
  const std::size_t denom = std::size_t{1} << (steps - 1);
  sizes[1] = steps == 2 ? n / 2 : (n + denom - 1) / denom;
  if (rest + sizes[1] >= n) {
    throw std::invalid_argument("too many steps: a chunk would be empty");
  }
  sizes[0] = n - rest - sizes[1];
  return sizes;
}

SplitSchedule::SplitSchedule(std::size_t n, std::vector<std::size_t> sizes)
    : n_(n), sizes_(std::move(sizes)) {
  if (sizes_.empty()) throw std::invalid_argument("need at least one chunk");
  begins_.resize(sizes_.size());
  std::size_t off = 0;
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] == 0) throw std::invalid_argument("empty chunk in split");
    begins_[i] = off;
    off += sizes_[i];
  }
  if (off != n_) throw std::invalid_argument("chunk sizes do not sum to n");
}

SplitSchedule SplitSchedule::geometric(std::size_t n, std::size_t steps) {
  return SplitSchedule(n, geometric_split(n, steps));
}

std::size_t SplitSchedule::chunk_begin(std::size_t t) const {
  if (t == 0 || t > steps()) throw std::out_of_range("step index");
  return begins_[t - 1];
}

std::size_t SplitSchedule::chunk_size(std::size_t t) const {
  if (t == 0 || t > steps()) throw std::out_of_range("step index");
  return sizes_[t - 1];
}

DataView SplitSchedule::chunk(const Dataset& d, std::size_t t) const {
  if (d.n != n_) throw std::invalid_argument("dataset does not match split");
  return {&d, chunk_begin(t), chunk_begin(t) + chunk_size(t)};
}

DataView SplitSchedule::train_prefix(const Dataset& d, std::size_t t) const {
  if (d.n != n_) throw std::invalid_argument("dataset does not match split");
  return {&d, 0, chunk_begin(t) + chunk_size(t)};
}

DataView SplitSchedule::validation(const Dataset& d, std::size_t t) const {
  if (d.n != n_) throw std::invalid_argument("dataset does not match split");
  return {&d, chunk_begin(t), n_};
}

std::size_t SplitSchedule::n_val(std::size_t t) const {
  return n_ - chunk_begin(t);
}

// ---------- excess loss machinery ----------

namespace {
std::vector<double> excess_points(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must lie strictly inside (0,1)");
  }
  return {-gamma, 0.0, 1.0 - gamma, 1.0};
}
}  // namespace

ExcessSupport::ExcessSupport(double gamma)
    : gamma_(gamma), support_(excess_points(gamma)) {}

double excess_value(double h_loss, double prior_loss, double gamma) {
  if ((h_loss != 0.0 && h_loss != 1.0) ||
      (prior_loss != 0.0 && prior_loss != 1.0)) {
    throw std::invalid_argument("losses must be 0 or 1");
  }
  return h_loss - gamma * prior_loss;
}

BinaryDecomposition excess_indicators(double h_loss, double prior_loss,
                                      const ExcessSupport& es) {
  return binarify(excess_value(h_loss, prior_loss, es.gamma()), es.support());
}

TripletSet build_triplets(const DataView& view,
                          const HypothesisDistribution& prior,
                          std::uint64_t seed) {
  return {view, sample_point_losses(prior, view, seed), seed};
}

ExcessEstimate estimate_excess_means(const HypothesisDistribution& post,
                                     const TripletSet& triplets,
                                     const ExcessSupport& es,
                                     EstimationMode mode, std::uint64_t seed) {
  return estimate_excess_means(post, triplets, es.gamma(), es.support(), mode,
                               seed);
}

ExcessEstimate estimate_excess_means(const HypothesisDistribution& post,
                                     const TripletSet& triplets, double gamma,
                                     const DiscreteSupport& support,
                                     EstimationMode mode, std::uint64_t seed) {
  const DataView& view = triplets.view;
  if (view.data == nullptr || view.size() == 0) {
    throw std::invalid_argument("excess estimation needs a nonempty view");
  }
  if (triplets.prior_losses.size() != view.size()) {
    throw std::invalid_argument("need one reference loss per view point");
  }
  const std::size_t m = view.size();
  const std::size_t K = support.segments();
  ExcessEstimate est;
  est.means.assign(K, 0.0);

  // Excess value of each (own loss, reference loss) cell; losses are exact
  // 0/1 doubles so the comparisons against the support points are exact.
  double cell_f[2][2];
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      cell_f[a][b] = static_cast<double>(a) - gamma * static_cast<double>(b);
    }
  }

  if (mode == EstimationMode::exact) {
    const auto* cat = std::get_if<CategoricalDistribution>(&post);
    if (cat == nullptr) {
      throw std::invalid_argument(
          "exact Gibbs expectations need the finite backend");
    }
    const Dataset& d = *view.data;
    for (std::size_t h = 0; h < cat->size(); ++h) {
      const double wh = cat->weights()[h];
      if (wh == 0.0) continue;
      const double theta = cat->grid().thresholds[h];
      std::size_t cells[2][2] = {{0, 0}, {0, 0}};
      for (std::size_t i = view.begin; i < view.end; ++i) {
        const int a = (d.features[i * d.dim] >= theta) != (d.labels[i] == 1);
        ++cells[a][triplets.prior_losses[i - view.begin]];
      }
      for (std::size_t j = 1; j <= K; ++j) {
        std::size_t cnt = 0;
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            if (cell_f[a][b] >= support.point(j)) cnt += cells[a][b];
          }
        }
        est.means[j - 1] +=
            wh * static_cast<double>(cnt) / static_cast<double>(m);
      }
    }
    est.draws = 0;
  } else {
    const auto own = sample_point_losses(post, view, seed);
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const double f = cell_f[own[i]][triplets.prior_losses[i]];
      for (std::size_t j = 1; j <= K; ++j) {
        if (f >= support.point(j)) ++counts[j - 1];
      }
    }
    for (std::size_t j = 0; j < K; ++j) {
      est.means[j] = static_cast<double>(counts[j]) / static_cast<double>(m);
    }
    est.draws = m;
  }

  est.f_hat = support.lo();
  for (std::size_t j = 1; j <= K; ++j) {
    est.f_hat += support.gap(j) * est.means[j - 1];
  }
  return est;
}

// ---------- per-step bounds ----------

double initial_step_bound(const GibbsEstimate& est, double kl, std::size_t n,
                          const ConfidenceBudget& budget) {
  budget.validate();
  double emp = est.mean;
  if (est.draws > 0) {
    emp = std::clamp(sampling_upper(emp, est.draws, budget.delta_prime_part()),
                     0.0, 1.0);
  }
  return pb_kl_upper({emp, kl, n}, budget.delta, budget.union_factor);
}

double excess_step_bound(const ExcessEstimate& est,
                         const DiscreteSupport& support, double kl,
                         std::size_t n_val, const ConfidenceBudget& budget) {
  budget.validate();
  std::vector<double> means = est.means;
  if (est.draws > 0) {
    for (double& q : means) {
      q = std::clamp(sampling_upper(q, est.draws, budget.delta_prime_part()),
                     0.0, 1.0);
    }
  }
  return pb_split_kl_upper(means, support, kl, n_val, budget.delta,
                           budget.union_factor);
}

std::size_t select_gamma(const std::vector<double>& bounds,
                         const std::vector<double>& gammas) {
  if (bounds.empty() || bounds.size() != gammas.size()) {
    throw std::invalid_argument("need one bound per gamma candidate");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < bounds.size(); ++i) {
    if (bounds[i] < bounds[best] ||
        (bounds[i] == bounds[best] && gammas[i] < gammas[best])) {
      best = i;
    }
  }
  return best;
}

// ---------- trace ----------

double BoundTrace::final_bound() const {
  if (steps.empty()) throw std::logic_error("empty trace");
  return steps.back().bound;
}

std::string BoundTrace::to_csv() const {
  std::string out = "t,n_val,F_hat,KL_over_nval,E_t,B_t,test01\n";
  for (const StepRecord& r : steps) {
    out += std::to_string(r.t);
    out += ',';
    out += std::to_string(r.n_val);
    out += ',';
    append_cell(out, r.f_hat);
    out += ',';
    append_cell(out, r.kl / static_cast<double>(r.n_val));
    out += ',';
    append_cell(out, r.excess_bound);
    out += ',';
    append_cell(out, r.bound);
    out += ',';
    append_cell(out, r.test01);
    out += '\n';
  }
  return out;
}

nlohmann::json BoundTrace::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const StepRecord& r : steps) {
    nlohmann::json j;
    j["t"] = r.t;
    j["n_val"] = r.n_val;
    j["gamma"] = json_number(r.gamma);
    j["f_hat"] = json_number(r.f_hat);
    j["kl"] = json_number(r.kl);
    j["kl_over_nval"] = json_number(r.kl / static_cast<double>(r.n_val));
    j["excess_bound"] = json_number(r.excess_bound);
    j["bound"] = json_number(r.bound);
    j["test01"] = json_number(r.test01);
    j["vacuous"] = r.vacuous;
    arr.push_back(std::move(j));
  }
  return arr;
}

// ---------- configuration ----------

void RecursionConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("need at least one step");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0,1)");
  }
  if (!(delta_prime > 0.0 && delta_prime < 1.0)) {
    throw std::invalid_argument("delta_prime must lie in (0,1)");
  }
  if (gamma_grid.empty()) {
    if (gammas.empty()) {
      throw std::invalid_argument("need a gamma value or a gamma grid");
    }
    if (gammas.size() != 1 && steps >= 2 && gammas.size() != steps - 1) {
      throw std::invalid_argument(
          "need one gamma in total or one per step after the first");
    }
    for (double g : gammas) {
      if (!(g > 0.0 && g < 1.0)) {
        throw std::invalid_argument("gamma must lie strictly inside (0,1)");
      }
    }
  } else {
    for (double g : gamma_grid) {
      if (!(g > 0.0 && g < 1.0)) {
        throw std::invalid_argument(
            "gamma candidates must lie strictly inside (0,1)");
      }
    }
  }
}

double RecursionConfig::fixed_gamma(std::size_t t) const {
  if (t < 2 || t > steps) throw std::out_of_range("step index");
  return gammas.size() == 1 ? gammas[0] : gammas.at(t - 2);
}

// ---------- evaluation of a trained chain ----------

BoundTrace evaluate_chain(const std::vector<HypothesisDistribution>& chain,
                          const std::vector<double>& gammas,
                          const Dataset& data, const RecursionConfig& cfg,
                          const Dataset* test_data) {
  cfg.validate();
  const std::size_t T = cfg.steps;
  if (chain.size() != T + 1) {
    throw std::invalid_argument("chain must hold pi_0 through pi_T");
  }
  if (gammas.size() != T - 1) {
    throw std::invalid_argument("need one gamma per step after the first");
  }
  const std::size_t G = cfg.gamma_grid.empty() ? 1 : cfg.gamma_grid.size();
  const SplitSchedule schedule = SplitSchedule::geometric(data.n, T);

  ConfidenceBudget budget;
  budget.delta = cfg.delta;
  budget.delta_prime = cfg.delta_prime;
  budget.sampling_parts = sampling_parts(T, G);

  BoundTrace trace;
  double b_prev = 0.0;

  {
    budget.union_factor = T;
    const double kl = kl_divergence(chain[1], chain[0]);
    const GibbsEstimate est =
        empirical_gibbs_loss(chain[1], full_view(data), cfg.mode,
                             derive_seed(cfg.seed, "posterior", 1));
    const double b1 = initial_step_bound(est, kl, data.n, budget);
    StepRecord rec;
    rec.t = 1;
    rec.n_val = data.n;
    rec.f_hat = est.mean;
    rec.kl = kl;
    rec.bound = b1;
    rec.vacuous = b1 >= 1.0;
    if (test_data != nullptr) {
      rec.test01 = empirical_gibbs_loss(chain[1], full_view(*test_data),
                                        cfg.mode,
                                        derive_seed(cfg.seed, "test", 1))
                       .mean;
    }
    trace.steps.push_back(rec);
    b_prev = b1;
  }

  for (std::size_t t = 2; t <= T; ++t) {
    const double gamma = gammas[t - 2];
    const ExcessSupport es(gamma);
    const TripletSet triplets =
        build_triplets(schedule.validation(data, t), chain[t - 1],
                       derive_seed(cfg.seed, "prior", t));
    const double kl = kl_divergence(chain[t], chain[t - 1]);
    const ExcessEstimate est = estimate_excess_means(
        chain[t], triplets, es, cfg.mode,
        derive_seed(cfg.seed, "posterior", t, gamma_bits(gamma)));
    budget.union_factor = T * G;
    const double excess =
        excess_step_bound(est, es.support(), kl, schedule.n_val(t), budget);
    const double bound = excess + gamma * b_prev;

    StepRecord rec;
    rec.t = t;
    rec.n_val = schedule.n_val(t);
    rec.gamma = gamma;
    rec.f_hat = est.f_hat;
    rec.kl = kl;
    rec.excess_bound = excess;
    rec.bound = bound;
    rec.vacuous = bound >= 1.0;
    if (test_data != nullptr) {
      rec.test01 = empirical_gibbs_loss(chain[t], full_view(*test_data),
                                        cfg.mode,
                                        derive_seed(cfg.seed, "test", t))
                       .mean;
    }
    trace.steps.push_back(rec);
    b_prev = bound;
  }
  return trace;
}

// ---------- full pipeline ----------

RecursiveRun run_recursive(const HypothesisDistribution& prior,
                           const Dataset& data, const RecursionConfig& cfg,
                           const Dataset* test_data) {
  cfg.validate();
  if (cfg.mode == EstimationMode::exact &&
      !std::holds_alternative<CategoricalDistribution>(prior)) {
    throw std::invalid_argument("exact mode needs the finite backend");
  }
  const std::size_t T = cfg.steps;
  const std::size_t G = cfg.gamma_grid.empty() ? 1 : cfg.gamma_grid.size();
  const SplitSchedule schedule = SplitSchedule::geometric(data.n, T);

  ConfidenceBudget budget;
  budget.delta = cfg.delta;
  budget.delta_prime = cfg.delta_prime;
  budget.sampling_parts = sampling_parts(T, G);

  RecursiveRun run;
  run.chain.push_back(prior);

  // Step 1: train against the data-free prior; its kl bound from all n
  // points seeds the recursion.
  budget.union_factor = T;
  run.chain.push_back(train_gibbs_posterior(
      prior, data, schedule.chunk(data, 1), data.n, cfg.delta,
      budget.union_factor, cfg.train, derive_seed(cfg.seed, "trainer", 1)));
  double b_prev;
  {
    const double kl = kl_divergence(run.chain[1], run.chain[0]);
    const GibbsEstimate est =
        empirical_gibbs_loss(run.chain[1], full_view(data), cfg.mode,
                             derive_seed(cfg.seed, "posterior", 1));
    b_prev = initial_step_bound(est, kl, data.n, budget);
  }

  for (std::size_t t = 2; t <= T; ++t) {
    const HypothesisDistribution& pi_prev = run.chain.back();
    const DataView train = schedule.chunk(data, t);
    const std::size_t nv = schedule.n_val(t);
    const TripletSet triplets =
        build_triplets(schedule.validation(data, t), pi_prev,
                       derive_seed(cfg.seed, "prior", t));
    const std::span<const unsigned char> ref_train{
        triplets.prior_losses.data(), train.size()};
    budget.union_factor = T * G;

    const std::vector<double> candidates =
        cfg.gamma_grid.empty() ? std::vector<double>{cfg.fixed_gamma(t)}
                               : cfg.gamma_grid;
    std::vector<HypothesisDistribution> posts;
    std::vector<double> bounds;
    for (double g : candidates) {
      const ExcessSupport es(g);
      HypothesisDistribution post = train_excess_posterior(
          pi_prev, data, train, ref_train, g, es.support(), nv, cfg.delta,
          budget.union_factor, cfg.train,
          derive_seed(cfg.seed, "trainer", t, gamma_bits(g)));
      const double kl = kl_divergence(post, pi_prev);
      const ExcessEstimate est = estimate_excess_means(
          post, triplets, es, cfg.mode,
          derive_seed(cfg.seed, "posterior", t, gamma_bits(g)));
      const double excess = excess_step_bound(est, es.support(), kl, nv,
                                              budget);
      bounds.push_back(excess + g * b_prev);
      posts.push_back(std::move(post));
    }
    const std::size_t pick = select_gamma(bounds, candidates);
    run.gammas.push_back(candidates[pick]);
    run.chain.push_back(std::move(posts[pick]));
    b_prev = bounds[pick];
  }

  run.trace = evaluate_chain(run.chain, run.gammas, data, cfg, test_data);
  return run;
}

}  // namespace rpb
