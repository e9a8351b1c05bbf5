#pragma once
// Hypothesis spaces and distributions over them, with two backends:
//
//  - CategoricalDistribution over a finite grid of 1-D threshold rules;
//    Gibbs expectations are computed exactly by enumeration.
//  - GaussianNetworkDistribution: a factorized Gaussian (per-parameter mean
//    and log sigma) over the weights of a feedforward ReLU classifier; Gibbs
//    expectations are estimated with one independent draw per data point.
//
// Training minimizes a McAllester-style relaxation of the kl (plain loss) or
// split-kl (excess loss) bound. The zero-one loss is smoothed by a bounded
// cross-entropy in (0,1] and exceedance indicators by a steep sigmoid; the
// Gaussian backend differentiates through the reparameterization
// w = mu + sigma * eps (one noise vector per minibatch) with manually derived
// gradients and SGD with momentum.

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rpb/concentration.hpp"
#include "rpb/data.hpp"

namespace rpb {

enum class EstimationMode { exact, sampled };

struct SurrogateConfig {
  double c1 = 5.0;      // sigmoid sharpness for indicator smoothing
  double c2 = 5.0;      // softmax temperature inside the bounded cross-entropy
  double p_min = 1e-5;  // probability floor of the bounded cross-entropy
};

struct TrainConfig {
  double learning_rate = 0.005;
  double momentum = 0.95;
  std::size_t batch_size = 250;
  std::size_t epochs = 200;
  SurrogateConfig surrogate;
};

// ---------- finite threshold backend ----------

struct ThresholdGrid {
  std::vector<double> thresholds;

  // `count` equally spaced thresholds spanning [0,1] inclusive.
  static ThresholdGrid uniform(std::size_t count);
};

class CategoricalDistribution {
 public:
  CategoricalDistribution(std::shared_ptr<const ThresholdGrid> grid,
                          std::vector<double> weights);
  static CategoricalDistribution uniform(
      std::shared_ptr<const ThresholdGrid> grid);

  const ThresholdGrid& grid() const { return *grid_; }
  std::shared_ptr<const ThresholdGrid> grid_ptr() const { return grid_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return weights_.size(); }

 private:
  std::shared_ptr<const ThresholdGrid> grid_;
  std::vector<double> weights_;  // nonnegative, sums to 1
};

// ---------- Gaussian network backend ----------

struct NetworkShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;  // ReLU layer widths
  std::size_t classes = 2;

  std::size_t param_count() const;
  bool operator==(const NetworkShape&) const = default;
};

class GaussianNetworkDistribution {
 public:
  GaussianNetworkDistribution(NetworkShape shape, std::vector<double> mean,
                              std::vector<double> log_sigma);

  // Random means (weights ~ N(0, 1/fan_in), biases 0), constant sigma0.
  static GaussianNetworkDistribution initial(const NetworkShape& shape,
                                             double sigma0,
                                             std::uint64_t seed);

  const NetworkShape& shape() const { return shape_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& log_sigma() const { return log_sigma_; }

 private:
  NetworkShape shape_;
  std::vector<double> mean_;
  std::vector<double> log_sigma_;
};

using HypothesisDistribution =
    std::variant<CategoricalDistribution, GaussianNetworkDistribution>;

// ---------- sampled classifiers ----------

struct ThresholdRule {
  double theta = 0.5;  // predicts 1[x >= theta]
};

struct NetworkRule {
  NetworkShape shape;
  std::vector<double> params;
};

using Hypothesis = std::variant<ThresholdRule, NetworkRule>;

// Argmax over class scores; ties resolve to the lowest class index.
int predict(const Hypothesis& h, std::span<const float> x);
double zero_one_loss(const Hypothesis& h, std::span<const float> x, int y);

// Raw class scores of a network with the given flat parameter vector.
std::vector<double> network_logits(const NetworkShape& shape,
                                   std::span<const double> params,
                                   std::span<const float> x);

Hypothesis sample_hypothesis(const HypothesisDistribution& dist,
                             std::mt19937_64& eng);

// ---------- divergences ----------

double categorical_kl(const std::vector<double>& post,
                      const std::vector<double>& prior);
double gaussian_kl(const GaussianNetworkDistribution& post,
                   const GaussianNetworkDistribution& prior);
// Dispatches on the backend; throws if the two distributions are not over the
// same hypothesis space.
double kl_divergence(const HypothesisDistribution& post,
                     const HypothesisDistribution& prior);

// ---------- Gibbs loss estimation ----------

struct GibbsEstimate {
  double mean = 0.0;
  std::size_t draws = 0;  // Monte Carlo draw count; 0 means exact
};

// Exact mode enumerates (finite backend only; throws for the Gaussian
// backend). Sampled mode draws one classifier per point from a stream keyed
// by (seed, global point index), so overlapping views share draws.
GibbsEstimate empirical_gibbs_loss(const HypothesisDistribution& dist,
                                   const DataView& view, EstimationMode mode,
                                   std::uint64_t seed);

// Realized zero-one losses of one independent draw per view point (the same
// per-point stream convention as above).
std::vector<unsigned char> sample_point_losses(
    const HypothesisDistribution& dist, const DataView& view,
    std::uint64_t seed);

// Losses of one fixed classifier on each view point.
std::vector<unsigned char> point_losses(const Hypothesis& h,
                                        const DataView& view);

// ---------- surrogates ----------

// Increasing sigmoid approximation of 1[z >= z0].
double sigmoid_indicator(double z, double z0, double c1);

// -ln((1-p_min) softmax(c2 u)_y + p_min/k) / ln(k/p_min), in (0,1].
double bounded_cross_entropy(std::span<const double> logits, int y,
                             const SurrogateConfig& cfg);

// ---------- training objectives (Gaussian backend) ----------
// Objective value at (mean, log_sigma) for one FIXED noise vector; pure in
// its arguments so finite differences can validate the analytic gradients.
// With support == nullptr the objective is
//   mean bounded-CE + sqrt((KL + log_term) / (2 n_effective));
// with a support it is the excess form
//   sum_j alpha_j [ smoothed-mean_j + sqrt((KL + log_term)/(2 n_effective)) ]
// where the smoothed indicators apply to bounded-CE(x,y) - gamma * ref_loss.

struct ObjectiveSpec {
  double log_term = 0.0;       // ln(2 K u sqrt(n)/delta) of the target bound
  std::size_t n_effective = 1;  // denominator of the target bound
  const DiscreteSupport* support = nullptr;
  double gamma = 0.0;
  SurrogateConfig surrogate;
};

double gaussian_objective(const GaussianNetworkDistribution& post,
                          const GaussianNetworkDistribution& prior,
                          std::span<const double> noise, const Dataset& data,
                          std::span<const std::size_t> batch,
                          std::span<const unsigned char> batch_ref_losses,
                          const ObjectiveSpec& spec);

// Returns the value and writes d/d mean, d/d log_sigma (both resized).
double gaussian_objective_grad(const GaussianNetworkDistribution& post,
                               const GaussianNetworkDistribution& prior,
                               std::span<const double> noise,
                               const Dataset& data,
                               std::span<const std::size_t> batch,
                               std::span<const unsigned char> batch_ref_losses,
                               const ObjectiveSpec& spec,
                               std::vector<double>& grad_mean,
                               std::vector<double>& grad_log_sigma);

// ---------- trainers ----------
// Both trainers start at the prior (zero KL) and return it unchanged when
// epochs == 0 or the view is empty. The finite backend optimizes
// softmax-parameterized weights with full-batch gradient steps on the exact
// objective; the Gaussian backend runs minibatch SGD with momentum.

// Minimizes emp + sqrt((KL + ln(2 u sqrt(n_eff)/delta)) / (2 n_eff)).
HypothesisDistribution train_gibbs_posterior(
    const HypothesisDistribution& prior, const Dataset& data,
    const DataView& view, std::size_t n_effective, double delta,
    std::size_t union_factor, const TrainConfig& cfg, std::uint64_t seed);

// Minimizes the split-kl relaxation of the excess loss
// loss(h, x, y) - gamma * reference_losses[i] on the given support, with
// log term ln(2 K u sqrt(n_eff)/delta).
HypothesisDistribution train_excess_posterior(
    const HypothesisDistribution& prior, const Dataset& data,
    const DataView& view, std::span<const unsigned char> reference_losses,
    double gamma, const DiscreteSupport& support, std::size_t n_effective,
    double delta, std::size_t union_factor, const TrainConfig& cfg,
    std::uint64_t seed);

// Deterministic empirical-risk fit over the space described by `space`:
// exact argmin over the finite grid (ties to the lowest index), or SGD with
// momentum on the mean network under bounded cross-entropy (sigma ignored).
Hypothesis erm_train(const HypothesisDistribution& space, const Dataset& data,
                     const DataView& view, const TrainConfig& cfg,
                     std::uint64_t seed);

// ---------- checkpoints ----------

nlohmann::json distribution_to_json(const HypothesisDistribution& dist);
HypothesisDistribution distribution_from_json(const nlohmann::json& j);
nlohmann::json hypothesis_to_json(const Hypothesis& h);
Hypothesis hypothesis_from_json(const nlohmann::json& j);

}  // namespace rpb
