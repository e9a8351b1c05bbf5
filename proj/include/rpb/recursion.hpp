#pragma once
// Recursive bound evaluation with sequential prior updates.
//
// The sample is split into consecutive chunks S_1..S_T whose sizes roughly
// double toward the end. A first posterior pi_1 is trained on S_1 against the
// data-free prior pi_0 and its risk is bounded on all n points with the kl
// form. Each later step t trains pi_t on S_t against prior pi_{t-1} and
// decomposes its risk through the excess loss
//
//   f_t(h, (x, y, h')) = loss(h, (x, y)) - gamma_t * loss(h', (x, y)),
//
// where h' ~ pi_{t-1} is drawn once per point and its realized loss becomes
// part of the data (a "triplet"). The expected excess is bounded with the
// split-kl form on the validation suffix U_t = S_t u ... u S_T; pi_{t-1} saw
// nothing of U_t, and the posterior pi_t may depend on everything. The risk
// bound then chains:
//
//   B_1 = kl_inv_upper(L_hat(pi_1), (KL(pi_1||pi_0) + ln(2 T sqrt(n)/delta)) / n)
//   E_t = -gamma_t + sum_j alpha_j kl_inv_upper(q_j,
//           (KL(pi_t||pi_{t-1}) + ln(2 K u sqrt(n_val)/delta)) / n_val)
//   B_t = E_t + gamma_t * B_{t-1},
//
// with union factor u = T for fixed gammas and T * G when gamma is selected
// per step from a grid of G candidates. In sampled mode every empirical mean
// is first inflated by its Monte Carlo sampling bound (budget delta', split
// into equal parts), so the total failure probability is delta + delta'.
//
// Every per-point draw (reference h', posterior h, Gibbs test evaluations)
// comes from a stream keyed by step, gamma bit pattern, and global point
// index, so overlapping views share draws and a re-evaluation of the trained
// chain reproduces the selected bounds bit for bit.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpb/concentration.hpp"
#include "rpb/data.hpp"
#include "rpb/hypotheses.hpp"
#include "rpb/pacbayes.hpp"

namespace rpb {

// Chunk sizes s_1..s_T summing to n: the last chunk takes about half the
// data, each earlier one about half of the remainder, and the two smallest
// chunks are balanced:
//   s_t = floor(n / 2^(T-t+1)) for t >= 3,  s_2 = ceil(n / 2^(T-1)),
//   s_1 = n - (s_2 + ... + s_T);       T <= 2: s_T = floor(n/2), s_1 = rest.
// Throws if any chunk would be empty.
std::vector<std::size_t> geometric_split(std::size_t n, std::size_t steps);

// Consecutive chunk boundaries plus the chunk / suffix views used by the
// recursion (1-based step indices).
class SplitSchedule {
 public:
  SplitSchedule(std::size_t n, std::vector<std::size_t> sizes);
  static SplitSchedule geometric(std::size_t n, std::size_t steps);

  std::size_t n() const { return n_; }
  std::size_t steps() const { return sizes_.size(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t chunk_begin(std::size_t t) const;
  std::size_t chunk_size(std::size_t t) const;
  // S_t, the training chunk of step t.
  DataView chunk(const Dataset& d, std::size_t t) const;
  // S_1 u ... u S_t, everything the step-t posterior may have seen.
  DataView train_prefix(const Dataset& d, std::size_t t) const;
  // U_t = S_t u ... u S_T, the validation suffix of step t; S_t is its prefix.
  DataView validation(const Dataset& d, std::size_t t) const;
  std::size_t n_val(std::size_t t) const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> begins_;
};

// The support {-gamma, 0, 1-gamma, 1} of the excess loss for zero-one losses.
// gamma must lie strictly inside (0,1) so the four points stay distinct and
// the decomposition does not degenerate; the gaps are (gamma, 1-gamma, gamma).
class ExcessSupport {
 public:
  explicit ExcessSupport(double gamma);

  double gamma() const { return gamma_; }
  const DiscreteSupport& support() const { return support_; }

 private:
  double gamma_;
  DiscreteSupport support_;
};

// h_loss - gamma * prior_loss for zero-one losses; exact in floating point.
double excess_value(double h_loss, double prior_loss, double gamma);

// Exceedance indicators of the excess value on the four-point support.
BinaryDecomposition excess_indicators(double h_loss, double prior_loss,
                                      const ExcessSupport& es);

// A validation view together with one realized reference draw h' ~ prior per
// point: the recorded zero-one losses make (x_i, y_i, loss(h'_i)) the data of
// the excess-loss bound. Draws come from (seed, global point index), so the
// training chunk (a prefix of the view) sees the same realizations.
struct TripletSet {
  DataView view;
  std::vector<unsigned char> prior_losses;
  std::uint64_t prior_seed = 0;
};

TripletSet build_triplets(const DataView& view,
                          const HypothesisDistribution& prior,
                          std::uint64_t seed);

struct ExcessEstimate {
  std::vector<double> means;  // exceedance means, one per support segment
  double f_hat = 0.0;         // -gamma + sum_j alpha_j means[j-1]
  std::size_t draws = 0;      // posterior Monte Carlo draws; 0 means exact
};

// Empirical exceedance means of the excess loss over the triplets, h ~ post.
// Exact mode enumerates a finite posterior; sampled mode draws one classifier
// per point from (seed, global point index).
ExcessEstimate estimate_excess_means(const HypothesisDistribution& post,
                                     const TripletSet& triplets,
                                     const ExcessSupport& es,
                                     EstimationMode mode, std::uint64_t seed);

// Same estimation for an arbitrary gamma/support pair; the informed-excess
// baseline uses gamma = 1 on the collapsed ternary support {-1, 0, 1}.
ExcessEstimate estimate_excess_means(const HypothesisDistribution& post,
                                     const TripletSet& triplets, double gamma,
                                     const DiscreteSupport& support,
                                     EstimationMode mode, std::uint64_t seed);

// kl bound on the first posterior's risk from all n points. A Monte Carlo
// loss estimate (est.draws > 0) is first inflated by its sampling bound at
// budget.delta_prime_part().
double initial_step_bound(const GibbsEstimate& est, double kl, std::size_t n,
                          const ConfidenceBudget& budget);

// split-kl bound on the expected excess loss from n_val points; Monte Carlo
// exceedance means are inflated by their sampling bounds first (and clamped
// to [0,1] against float drift).
double excess_step_bound(const ExcessEstimate& est,
                         const DiscreteSupport& support, double kl,
                         std::size_t n_val, const ConfidenceBudget& budget);

// Position of the candidate with the smallest bound; ties resolve to the
// smallest gamma.
std::size_t select_gamma(const std::vector<double>& bounds,
                         const std::vector<double>& gammas);

struct StepRecord {
  std::size_t t = 0;      // 1-based step
  std::size_t n_val = 0;  // points behind this step's bound
  double gamma = std::numeric_limits<double>::quiet_NaN();  // NaN at t = 1
  double f_hat = std::numeric_limits<double>::quiet_NaN();  // empirical loss
  double kl = std::numeric_limits<double>::quiet_NaN();     // KL(pi_t||pi_{t-1})
  double excess_bound = std::numeric_limits<double>::quiet_NaN();  // E_t
  double bound = std::numeric_limits<double>::quiet_NaN();         // B_t
  double test01 = std::numeric_limits<double>::quiet_NaN();  // Gibbs test error
  bool vacuous = false;  // bound >= 1
};

struct BoundTrace {
  std::vector<StepRecord> steps;

  double final_bound() const;
  // Header t,n_val,F_hat,KL_over_nval,E_t,B_t,test01; %.12g cells, NaN empty.
  std::string to_csv() const;
  nlohmann::json to_json() const;  // NaN becomes null
};

struct RecursionConfig {
  std::size_t steps = 4;             // T
  std::vector<double> gammas{0.5};   // per step t = 2..T; a single value is
                                     // broadcast; ignored when a grid is set
  std::vector<double> gamma_grid;    // per-step candidates; empty = fixed
  EstimationMode mode = EstimationMode::sampled;
  double delta = 0.025;
  double delta_prime = 0.01;  // Monte Carlo budget (sampled mode only)
  TrainConfig train;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
  double fixed_gamma(std::size_t t) const;  // gamma for step t (2-based use)
};

struct RecursiveRun {
  BoundTrace trace;
  std::vector<HypothesisDistribution> chain;  // pi_0, pi_1, ..., pi_T
  std::vector<double> gammas;                 // realized, for steps t = 2..T

  const HypothesisDistribution& posterior() const { return chain.back(); }
};

// Runs the full pipeline: geometric split, sequential training (selecting
// gamma per step when a grid is given), per-step bounds, and optional Gibbs
// test-error evaluation per step. The returned trace is recomputed from the
// finished chain via evaluate_chain, so serialized checkpoints re-validate.
RecursiveRun run_recursive(const HypothesisDistribution& prior,
                           const Dataset& data, const RecursionConfig& cfg,
                           const Dataset* test_data = nullptr);

// Recomputes the bound trace of an already trained chain pi_0..pi_T under the
// same config and seed, without touching the trainers. Bit-identical to the
// trace produced when the chain was trained.
BoundTrace evaluate_chain(const std::vector<HypothesisDistribution>& chain,
                          const std::vector<double>& gammas,
                          const Dataset& data, const RecursionConfig& cfg,
                          const Dataset* test_data = nullptr);

}  // namespace rpb
