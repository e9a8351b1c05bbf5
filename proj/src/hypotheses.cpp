#include "rpb/hypotheses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <type_traits>

#include "rpb/random.hpp"

namespace rpb {

namespace {

constexpr double kWeightFloor = 1e-300;

// ---------- flat parameter layout ----------

struct LayerSpan {
  std::size_t w_off = 0;  // out x in, row-major
  std::size_t b_off = 0;
  std::size_t in = 0;
  std::size_t out = 0;
};

std::vector<LayerSpan> make_layout(const NetworkShape& shape) {
  if (shape.input_dim == 0 || shape.classes < 2) {
    throw std::invalid_argument("network needs inputs and at least 2 classes");
  }
  std::vector<std::size_t> widths;
  widths.push_back(shape.input_dim);
  for (std::size_t w : shape.hidden) {
    if (w == 0) throw std::invalid_argument("hidden width must be positive");
    widths.push_back(w);
  }
  widths.push_back(shape.classes);
  std::vector<LayerSpan> layout(widths.size() - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layout[l].in = widths[l];
    layout[l].out = widths[l + 1];
    layout[l].w_off = off;
    off += layout[l].in * layout[l].out;
    layout[l].b_off = off;
    off += layout[l].out;
  }
  return layout;
}

// Scratch buffers reused across points of one evaluation sweep.
struct NetWorkspace {
  std::vector<std::vector<double>> act;    // act[0]=input ... act[L]=logits
  std::vector<std::vector<double>> delta;  // backprop buffers per layer output
  std::vector<double> dlogits;

  void resize(const NetworkShape& shape,
              const std::vector<LayerSpan>& layout) {
    act.resize(layout.size() + 1);
    delta.resize(layout.size());
    act[0].resize(shape.input_dim);
    for (std::size_t l = 0; l < layout.size(); ++l) {
      act[l + 1].resize(layout[l].out);
      delta[l].resize(layout[l].out);
    }
    dlogits.resize(shape.classes);
  }
};

// Forward pass; fills ws.act, leaves logits in ws.act.back().
void forward(const std::vector<LayerSpan>& layout,
             std::span<const double> params, std::span<const float> x,
             NetWorkspace& ws) {
  for (std::size_t i = 0; i < x.size(); ++i) ws.act[0][i] = x[i];
  for (std::size_t l = 0; l < layout.size(); ++l) {
    const LayerSpan& L = layout[l];
    const double* W = params.data() + L.w_off;
    const double* b = params.data() + L.b_off;
    const std::vector<double>& in = ws.act[l];
    std::vector<double>& out = ws.act[l + 1];
    const bool last = (l + 1 == layout.size());
    for (std::size_t o = 0; o < L.out; ++o) {
      const double* wrow = W + o * L.in;
      double z = b[o];
      for (std::size_t i = 0; i < L.in; ++i) z += wrow[i] * in[i];
      out[o] = last ? z : (z > 0.0 ? z : 0.0);
    }
  }
}

// Backward pass for one sample; accumulates dObj/dparams into grad_w given
// dObj/dlogits in ws.dlogits. ReLU derivative is recovered from the stored
// post-activation (positive iff the preactivation was).
void backward(const std::vector<LayerSpan>& layout,
              std::span<const double> params, NetWorkspace& ws,
              std::vector<double>& grad_w) {
  const std::size_t L = layout.size();
  ws.delta[L - 1] = ws.dlogits;
  for (std::size_t l = L; l-- > 0;) {
    const LayerSpan& lay = layout[l];
    const double* W = params.data() + lay.w_off;
    const std::vector<double>& in = ws.act[l];
    const std::vector<double>& d = ws.delta[l];
    for (std::size_t o = 0; o < lay.out; ++o) {
      const double dz = d[o];
      if (dz == 0.0) continue;
      double* gw = grad_w.data() + lay.w_off + o * lay.in;
      for (std::size_t i = 0; i < lay.in; ++i) gw[i] += dz * in[i];
      grad_w[lay.b_off + o] += dz;
    }
    if (l == 0) break;
    std::vector<double>& dprev = ws.delta[l - 1];
    std::fill(dprev.begin(), dprev.end(), 0.0);
    for (std::size_t o = 0; o < lay.out; ++o) {
      const double dz = d[o];
      if (dz == 0.0) continue;
      const double* wrow = W + o * lay.in;
      for (std::size_t i = 0; i < lay.in; ++i) dprev[i] += dz * wrow[i];
    }
    for (std::size_t i = 0; i < lay.in; ++i) {
      if (ws.act[l][i] <= 0.0) dprev[i] = 0.0;
    }
  }
}

void require_surrogate(const SurrogateConfig& cfg) {
  if (!(cfg.c1 > 0.0) || !(cfg.c2 > 0.0)) {
    throw std::invalid_argument("surrogate sharpness must be positive");
  }
  if (!(cfg.p_min > 0.0 && cfg.p_min < 1.0)) {
    throw std::invalid_argument("p_min must lie in (0,1)");
  }
}

// Value and (optionally) dValue/dlogits of the bounded cross-entropy.
double bounded_ce_core(std::span<const double> logits, int y,
                       const SurrogateConfig& cfg, double* dlogits) {
  const std::size_t k = logits.size();
  if (k < 2) throw std::invalid_argument("need at least two classes");
  if (y < 0 || static_cast<std::size_t>(y) >= k) {
    throw std::invalid_argument("label out of range");
  }
  require_surrogate(cfg);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  std::vector<double> s(k);
  for (std::size_t j = 0; j < k; ++j) {
    s[j] = std::exp(cfg.c2 * (logits[j] - mx));
    z += s[j];
  }
  for (std::size_t j = 0; j < k; ++j) s[j] /= z;
  const double floor = cfg.p_min / static_cast<double>(k);
  const double st = (1.0 - cfg.p_min) * s[y] + floor;
  const double denom = std::log(static_cast<double>(k) / cfg.p_min);
  const double value = -std::log(st) / denom;
  if (dlogits != nullptr) {
    const double g = (1.0 - cfg.p_min) * cfg.c2 * s[y] / (st * denom);
    for (std::size_t j = 0; j < k; ++j) {
      dlogits[j] =
          g * (s[j] - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0));
    }
  }
  return value;
}

int argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return static_cast<int>(best);
}

unsigned char threshold_loss(double theta, float x, int y) {
  const int pred = (x >= theta) ? 1 : 0;
  return static_cast<unsigned char>(pred != y);
}

void require_view(const DataView& view) {
  if (view.data == nullptr) throw std::invalid_argument("view has no dataset");
  if (view.begin > view.end || view.end > view.data->n) {
    throw std::invalid_argument("view range out of bounds");
  }
}

std::vector<double> categorical_cdf(const std::vector<double>& w) {
  std::vector<double> cdf(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0 + 1e-12;  // absorb rounding at the top
  return cdf;
}

std::size_t draw_categorical(const std::vector<double>& cdf,
                             std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(eng);
  return static_cast<std::size_t>(
      std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
}

void draw_gaussian_params(const GaussianNetworkDistribution& g,
                          std::mt19937_64& eng, std::vector<double>& out) {
  out.resize(g.mean().size());
  std::normal_distribution<double> norm(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = g.mean()[i] + std::exp(g.log_sigma()[i]) * norm(eng);
  }
}

}  // namespace

// ---------- spaces and distributions ----------

ThresholdGrid ThresholdGrid::uniform(std::size_t count) {
  if (count == 0) throw std::invalid_argument("grid needs at least one rule");
  ThresholdGrid g;
  g.thresholds.resize(count);
  if (count == 1) {
    g.thresholds[0] = 0.5;
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      g.thresholds[i] =
          static_cast<double>(i) / static_cast<double>(count - 1);
    }
  }
  return g;
}

CategoricalDistribution::CategoricalDistribution(
    std::shared_ptr<const ThresholdGrid> grid, std::vector<double> weights)
    : grid_(std::move(grid)), weights_(std::move(weights)) {
  if (grid_ == nullptr || grid_->thresholds.empty()) {
    throw std::invalid_argument("categorical distribution needs a grid");
  }
  if (weights_.size() != grid_->thresholds.size()) {
    throw std::invalid_argument("one weight per grid rule required");
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("weights must sum to 1");
  }
  // Skip the division when the sum is already 1 up to accumulated rounding:
  // normalization is then idempotent, so a serialize/parse round trip
  // reconstructs the weights bit for bit.
  if (std::abs(sum - 1.0) > 1e-9) {
    for (double& w : weights_) w /= sum;
  }
}

CategoricalDistribution CategoricalDistribution::uniform(
    std::shared_ptr<const ThresholdGrid> grid) {
  if (grid == nullptr || grid->thresholds.empty()) {
    throw std::invalid_argument("categorical distribution needs a grid");
  }
  std::vector<double> w(grid->thresholds.size(),
                        1.0 / static_cast<double>(grid->thresholds.size()));
  return CategoricalDistribution(std::move(grid), std::move(w));
}

std::size_t NetworkShape::param_count() const {
  std::size_t total = 0;
  std::size_t in = input_dim;
  for (std::size_t w : hidden) {
    total += in * w + w;
    in = w;
  }
  total += in * classes + classes;
  return total;
}

GaussianNetworkDistribution::GaussianNetworkDistribution(
    NetworkShape shape, std::vector<double> mean, std::vector<double> log_sigma)
    : shape_(std::move(shape)),
      mean_(std::move(mean)),
      log_sigma_(std::move(log_sigma)) {
  const std::size_t want = shape_.param_count();
  if (mean_.size() != want || log_sigma_.size() != want) {
    throw std::invalid_argument("parameter vectors do not match the shape");
  }
  for (double v : log_sigma_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("log sigma must be finite");
    }
  }
}

GaussianNetworkDistribution GaussianNetworkDistribution::initial(
    const NetworkShape& shape, double sigma0, std::uint64_t seed) {
  if (!(sigma0 > 0.0)) throw std::invalid_argument("sigma0 must be positive");
  const auto layout = make_layout(shape);
  std::vector<double> mean(shape.param_count(), 0.0);
  auto eng = make_engine(seed, "init");
  std::normal_distribution<double> norm(0.0, 1.0);
  for (const LayerSpan& L : layout) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(L.in));
    for (std::size_t i = 0; i < L.in * L.out; ++i) {
      mean[L.w_off + i] = scale * norm(eng);
    }
    // biases start at zero
  }
  std::vector<double> log_sigma(shape.param_count(), std::log(sigma0));
  return GaussianNetworkDistribution(shape, std::move(mean),
                                     std::move(log_sigma));
}

// ---------- classifiers ----------

int predict(const Hypothesis& h, std::span<const float> x) {
  return std::visit(
      [&](const auto& rule) -> int {
        using T = std::decay_t<decltype(rule)>;
        if constexpr (std::is_same_v<T, ThresholdRule>) {
          if (x.empty()) throw std::invalid_argument("empty feature vector");
          return x[0] >= rule.theta ? 1 : 0;
        } else {
          const auto logits = network_logits(rule.shape, rule.params, x);
          return argmax_lowest(logits);
        }
      },
      h);
}

double zero_one_loss(const Hypothesis& h, std::span<const float> x, int y) {
  return predict(h, x) == y ? 0.0 : 1.0;
}

std::vector<double> network_logits(const NetworkShape& shape,
                                   std::span<const double> params,
                                   std::span<const float> x) {
  if (x.size() != shape.input_dim) {
    throw std::invalid_argument("feature size does not match the network");
  }
  if (params.size() != shape.param_count()) {
    throw std::invalid_argument("parameter size does not match the network");
  }
  const auto layout = make_layout(shape);
  NetWorkspace ws;
  ws.resize(shape, layout);
  forward(layout, params, x, ws);
  return ws.act.back();
}

Hypothesis sample_hypothesis(const HypothesisDistribution& dist,
                             std::mt19937_64& eng) {
  return std::visit(
      [&](const auto& d) -> Hypothesis {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, CategoricalDistribution>) {
          const auto cdf = categorical_cdf(d.weights());
          return ThresholdRule{d.grid().thresholds[draw_categorical(cdf, eng)]};
        } else {
          std::vector<double> params;
          draw_gaussian_params(d, eng, params);
          return NetworkRule{d.shape(), std::move(params)};
        }
      },
      dist);
}

// ---------- divergences ----------

double categorical_kl(const std::vector<double>& post,
                      const std::vector<double>& prior) {
  if (post.size() != prior.size()) {
    throw std::invalid_argument("distributions must share their support");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) {
    if (post[i] <= 0.0) continue;
    if (prior[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += post[i] * std::log(post[i] / prior[i]);
  }
  return std::max(kl, 0.0);
}

double gaussian_kl(const GaussianNetworkDistribution& post,
                   const GaussianNetworkDistribution& prior) {
  if (!(post.shape() == prior.shape())) {
    throw std::invalid_argument("distributions must share their network shape");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < post.mean().size(); ++i) {
    const double ls = post.log_sigma()[i];
    const double lp = prior.log_sigma()[i];
    const double s2 = std::exp(2.0 * ls);
    const double sp2 = std::exp(2.0 * lp);
    const double dm = post.mean()[i] - prior.mean()[i];
    kl += (lp - ls) + (s2 + dm * dm) / (2.0 * sp2) - 0.5;
  }
  return std::max(kl, 0.0);
}

double kl_divergence(const HypothesisDistribution& post,
                     const HypothesisDistribution& prior) {
  if (post.index() != prior.index()) {
    throw std::invalid_argument("posterior and prior use different backends");
  }
  if (std::holds_alternative<CategoricalDistribution>(post)) {
    const auto& p = std::get<CategoricalDistribution>(post);
    const auto& q = std::get<CategoricalDistribution>(prior);
    if (p.grid().thresholds != q.grid().thresholds) {
      throw std::invalid_argument("distributions must share their grid");
    }
    return categorical_kl(p.weights(), q.weights());
  }
  return gaussian_kl(std::get<GaussianNetworkDistribution>(post),
                     std::get<GaussianNetworkDistribution>(prior));
}

// ---------- Gibbs loss estimation ----------

GibbsEstimate empirical_gibbs_loss(const HypothesisDistribution& dist,
                                   const DataView& view, EstimationMode mode,
                                   std::uint64_t seed) {
  require_view(view);
  if (view.size() == 0) {
    throw std::invalid_argument("cannot estimate a loss on an empty view");
  }
  const Dataset& d = *view.data;

  if (mode == EstimationMode::exact) {
    const auto* cat = std::get_if<CategoricalDistribution>(&dist);
    if (cat == nullptr) {
      throw std::invalid_argument(
          "exact Gibbs expectations need the finite backend");
    }
    double mean = 0.0;
    for (std::size_t h = 0; h < cat->size(); ++h) {
      if (cat->weights()[h] == 0.0) continue;
      const double theta = cat->grid().thresholds[h];
      std::size_t errs = 0;
      for (std::size_t i = view.begin; i < view.end; ++i) {
        errs += threshold_loss(theta, d.features[i * d.dim], d.labels[i]);
      }
      mean += cat->weights()[h] * static_cast<double>(errs) /
              static_cast<double>(view.size());
    }
    return {mean, 0};
  }

  const auto losses = sample_point_losses(dist, view, seed);
  const double sum = std::accumulate(losses.begin(), losses.end(), 0.0);
  return {sum / static_cast<double>(losses.size()), losses.size()};
}

std::vector<unsigned char> sample_point_losses(
    const HypothesisDistribution& dist, const DataView& view,
    std::uint64_t seed) {
  require_view(view);
  const Dataset& d = *view.data;
  std::vector<unsigned char> out(view.size());

  if (const auto* cat = std::get_if<CategoricalDistribution>(&dist)) {
    const auto cdf = categorical_cdf(cat->weights());
    for (std::size_t i = view.begin; i < view.end; ++i) {
      auto eng = make_engine(seed, "point", i);
      const double theta = cat->grid().thresholds[draw_categorical(cdf, eng)];
      out[i - view.begin] = threshold_loss(theta, d.features[i * d.dim],
                                           d.labels[i]);
    }
    return out;
  }

  const auto& g = std::get<GaussianNetworkDistribution>(dist);
  if (d.dim != g.shape().input_dim) {
    throw std::invalid_argument("dataset does not match the network inputs");
  }
  const auto layout = make_layout(g.shape());
  NetWorkspace ws;
  ws.resize(g.shape(), layout);
  // exp(log_sigma) is identical for every point; hoisting it out of the
  // loop leaves the drawn parameters bit for bit unchanged.
  const std::vector<double>& mean = g.mean();
  std::vector<double> sigma(g.log_sigma().size());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    sigma[i] = std::exp(g.log_sigma()[i]);
  }
  std::vector<double> params(mean.size());
  for (std::size_t i = view.begin; i < view.end; ++i) {
    auto eng = make_engine(seed, "point", i);
    std::normal_distribution<double> norm(0.0, 1.0);
    for (std::size_t p = 0; p < params.size(); ++p) {
      params[p] = mean[p] + sigma[p] * norm(eng);
    }
    forward(layout, params, d.row(i), ws);
    const int pred = argmax_lowest(ws.act.back());
    out[i - view.begin] = static_cast<unsigned char>(pred != d.labels[i]);
  }
  return out;
}

std::vector<unsigned char> point_losses(const Hypothesis& h,
                                        const DataView& view) {
  require_view(view);
  const Dataset& d = *view.data;
  std::vector<unsigned char> out(view.size());
  if (const auto* rule = std::get_if<ThresholdRule>(&h)) {
    for (std::size_t i = view.begin; i < view.end; ++i) {
      out[i - view.begin] =
          threshold_loss(rule->theta, d.features[i * d.dim], d.labels[i]);
    }
    return out;
  }
  const auto& net = std::get<NetworkRule>(h);
  const auto layout = make_layout(net.shape);
  NetWorkspace ws;
  ws.resize(net.shape, layout);
  for (std::size_t i = view.begin; i < view.end; ++i) {
    forward(layout, net.params, d.row(i), ws);
    const int pred = argmax_lowest(ws.act.back());
    out[i - view.begin] = static_cast<unsigned char>(pred != d.labels[i]);
  }
  return out;
}

// ---------- surrogates ----------

double sigmoid_indicator(double z, double z0, double c1) {
  if (!(c1 > 0.0)) throw std::invalid_argument("c1 must be positive");
  const double t = c1 * (z - z0);
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double bounded_cross_entropy(std::span<const double> logits, int y,
                             const SurrogateConfig& cfg) {
  return bounded_ce_core(logits, y, cfg, nullptr);
}

// ---------- Gaussian objective ----------

namespace {

// Shared evaluation of the training objective; gradients are written only
// when grad buffers are supplied.
double gaussian_objective_core(const GaussianNetworkDistribution& post,
                               const GaussianNetworkDistribution& prior,
                               std::span<const double> noise,
                               const Dataset& data,
                               std::span<const std::size_t> batch,
                               std::span<const unsigned char> ref,
                               const ObjectiveSpec& spec,
                               std::vector<double>* grad_mean,
                               std::vector<double>* grad_log_sigma) {
  if (!(post.shape() == prior.shape())) {
    throw std::invalid_argument("posterior and prior shapes differ");
  }
  const std::size_t P = post.mean().size();
  if (noise.size() != P) {
    throw std::invalid_argument("noise vector does not match parameter count");
  }
  if (batch.empty()) throw std::invalid_argument("batch must be nonempty");
  if (spec.support != nullptr && ref.size() != batch.size()) {
    throw std::invalid_argument("need one reference loss per batch point");
  }
  if (spec.n_effective == 0) {
    throw std::invalid_argument("effective sample count must be positive");
  }
  require_surrogate(spec.surrogate);

  const auto layout = make_layout(post.shape());
  NetWorkspace ws;
  ws.resize(post.shape(), layout);

  // Realized weights under the fixed noise draw.
  std::vector<double> w(P), sigma(P);
  for (std::size_t i = 0; i < P; ++i) {
    sigma[i] = std::exp(post.log_sigma()[i]);
    w[i] = post.mean()[i] + sigma[i] * noise[i];
  }

  const bool excess = spec.support != nullptr;
  const std::size_t K = excess ? spec.support->segments() : 0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  std::vector<double> grad_w;
  if (grad_mean != nullptr) grad_w.assign(P, 0.0);

  double emp = 0.0;  // empirical part of the objective
  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const std::size_t i = batch[bi];
    if (i >= data.n) throw std::invalid_argument("batch index out of range");
    forward(layout, w, data.row(i), ws);
    double dce = 0.0;  // dObj/d(bounded CE of this point)
    const double ce =
        bounded_ce_core(ws.act.back(), data.labels[i], spec.surrogate,
                        grad_mean != nullptr ? ws.dlogits.data() : nullptr);
    if (!excess) {
      emp += inv_b * ce;
      dce = inv_b;
    } else {
      const double f = ce - spec.gamma * static_cast<double>(ref[bi]);
      for (std::size_t j = 1; j <= K; ++j) {
        const double om =
            sigmoid_indicator(f, spec.support->point(j), spec.surrogate.c1);
        emp += inv_b * spec.support->gap(j) * om;
        dce += inv_b * spec.support->gap(j) * spec.surrogate.c1 * om *
               (1.0 - om);
      }
    }
    if (grad_mean != nullptr && dce != 0.0) {
      for (double& v : ws.dlogits) v *= dce;
      backward(layout, w, ws, grad_w);
    }
  }

  const double kl = gaussian_kl(post, prior);
  const double scale =
      excess ? (spec.support->hi() - spec.support->lo()) : 1.0;
  const double sqrt_term = std::sqrt(
      (kl + spec.log_term) / (2.0 * static_cast<double>(spec.n_effective)));
  const double value = emp + scale * sqrt_term;

  if (grad_mean != nullptr) {
    grad_mean->assign(P, 0.0);
    grad_log_sigma->assign(P, 0.0);
    // d(scale*sqrt)/dKL; the log term keeps the denominator positive.
    const double dkl_coef =
        scale / (4.0 * static_cast<double>(spec.n_effective) * sqrt_term);
    for (std::size_t i = 0; i < P; ++i) {
      const double sp2 = std::exp(2.0 * prior.log_sigma()[i]);
      const double dm = post.mean()[i] - prior.mean()[i];
      (*grad_mean)[i] = grad_w[i] + dkl_coef * dm / sp2;
      (*grad_log_sigma)[i] =
          grad_w[i] * noise[i] * sigma[i] +
          dkl_coef * (sigma[i] * sigma[i] / sp2 - 1.0);
    }
  }
  return value;
}

}  // namespace

double gaussian_objective(const GaussianNetworkDistribution& post,
                          const GaussianNetworkDistribution& prior,
                          std::span<const double> noise, const Dataset& data,
                          std::span<const std::size_t> batch,
                          std::span<const unsigned char> batch_ref_losses,
                          const ObjectiveSpec& spec) {
  return gaussian_objective_core(post, prior, noise, data, batch,
                                 batch_ref_losses, spec, nullptr, nullptr);
}

double gaussian_objective_grad(const GaussianNetworkDistribution& post,
                               const GaussianNetworkDistribution& prior,
                               std::span<const double> noise,
                               const Dataset& data,
                               std::span<const std::size_t> batch,
                               std::span<const unsigned char> batch_ref_losses,
                               const ObjectiveSpec& spec,
                               std::vector<double>& grad_mean,
                               std::vector<double>& grad_log_sigma) {
  return gaussian_objective_core(post, prior, noise, data, batch,
                                 batch_ref_losses, spec, &grad_mean,
                                 &grad_log_sigma);
}

// ---------- trainers ----------

namespace {

// Full-batch gradient descent on softmax weights for the exact objective
//   sum_h rho_h cost_h + scale * sqrt((KL(rho||prior) + log_term)/(2 n)).
std::vector<double> train_softmax_weights(const std::vector<double>& prior,
                                          const std::vector<double>& costs,
                                          double scale, double log_term,
                                          std::size_t n_effective,
                                          const TrainConfig& cfg) {
  const std::size_t M = prior.size();
  std::vector<double> theta(M), vel(M, 0.0), rho(M), dobj(M);
  for (std::size_t h = 0; h < M; ++h) {
    if (!(prior[h] > 0.0)) {
      throw std::invalid_argument(
          "finite-backend training needs a strictly positive prior");
    }
    theta[h] = std::log(prior[h]);
  }
  for (std::size_t step = 0; step < cfg.epochs; ++step) {
    const double mx = *std::max_element(theta.begin(), theta.end());
    double z = 0.0;
    for (std::size_t h = 0; h < M; ++h) {
      rho[h] = std::exp(theta[h] - mx);
      z += rho[h];
    }
    double kl = 0.0;
    for (std::size_t h = 0; h < M; ++h) {
      rho[h] /= z;
      if (rho[h] > kWeightFloor) {
        kl += rho[h] * std::log(rho[h] / prior[h]);
      }
    }
    kl = std::max(kl, 0.0);
    const double sqrt_term = std::sqrt(
        (kl + log_term) / (2.0 * static_cast<double>(n_effective)));
    const double dkl_coef =
        scale / (4.0 * static_cast<double>(n_effective) * sqrt_term);
    double mean_dobj = 0.0;
    for (std::size_t h = 0; h < M; ++h) {
      const double lr_ratio =
          rho[h] > kWeightFloor ? std::log(rho[h] / prior[h]) : 0.0;
      dobj[h] = costs[h] + dkl_coef * (lr_ratio + 1.0);
      mean_dobj += rho[h] * dobj[h];
    }
    for (std::size_t h = 0; h < M; ++h) {
      const double g = rho[h] * (dobj[h] - mean_dobj);
      vel[h] = cfg.momentum * vel[h] + g;
      theta[h] -= cfg.learning_rate * vel[h];
    }
  }
  const double mx = *std::max_element(theta.begin(), theta.end());
  double z = 0.0;
  for (std::size_t h = 0; h < M; ++h) {
    rho[h] = std::exp(theta[h] - mx);
    z += rho[h];
  }
  for (double& r : rho) r /= z;
  return rho;
}

// Per-rule mean zero-one losses on the view.
std::vector<double> rule_mean_losses(const ThresholdGrid& grid,
                                     const DataView& view) {
  const Dataset& d = *view.data;
  std::vector<double> costs(grid.thresholds.size(), 0.0);
  for (std::size_t h = 0; h < grid.thresholds.size(); ++h) {
    std::size_t errs = 0;
    for (std::size_t i = view.begin; i < view.end; ++i) {
      errs += threshold_loss(grid.thresholds[h], d.features[i * d.dim],
                             d.labels[i]);
    }
    costs[h] = static_cast<double>(errs) / static_cast<double>(view.size());
  }
  return costs;
}

// Per-rule sum_j alpha_j 1[loss - gamma*ref >= b_j], averaged over the view.
std::vector<double> rule_excess_costs(const ThresholdGrid& grid,
                                      const DataView& view,
                                      std::span<const unsigned char> ref,
                                      double gamma,
                                      const DiscreteSupport& support) {
  const Dataset& d = *view.data;
  std::vector<double> costs(grid.thresholds.size(), 0.0);
  for (std::size_t h = 0; h < grid.thresholds.size(); ++h) {
    double acc = 0.0;
    for (std::size_t i = view.begin; i < view.end; ++i) {
      const double f =
          static_cast<double>(threshold_loss(grid.thresholds[h],
                                             d.features[i * d.dim],
                                             d.labels[i])) -
          gamma * static_cast<double>(ref[i - view.begin]);
      for (std::size_t j = 1; j <= support.segments(); ++j) {
        if (f >= support.point(j)) acc += support.gap(j);
      }
    }
    costs[h] = acc / static_cast<double>(view.size());
  }
  return costs;
}

GaussianNetworkDistribution train_gaussian(
    const GaussianNetworkDistribution& prior, const Dataset& data,
    const DataView& view, std::span<const unsigned char> ref, double gamma,
    const DiscreteSupport* support, double log_term, std::size_t n_effective,
    const TrainConfig& cfg, std::uint64_t seed) {
  if (cfg.epochs == 0 || view.size() == 0) return prior;
  if (data.dim != prior.shape().input_dim) {
    throw std::invalid_argument("dataset does not match the network inputs");
  }
  const std::size_t P = prior.mean().size();
  GaussianNetworkDistribution post = prior;
  std::vector<double> mean = prior.mean();
  std::vector<double> log_sigma = prior.log_sigma();
  std::vector<double> vel_mean(P, 0.0), vel_ls(P, 0.0);
  std::vector<double> noise(P), gmean, gls;

  std::vector<std::size_t> order(view.size());
  std::iota(order.begin(), order.end(), view.begin);
  std::vector<std::size_t> batch;
  std::vector<unsigned char> batch_ref;

  ObjectiveSpec spec;
  spec.log_term = log_term;
  spec.n_effective = n_effective;
  spec.support = support;
  spec.gamma = gamma;
  spec.surrogate = cfg.surrogate;

  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  std::normal_distribution<double> norm(0.0, 1.0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order_eng = make_engine(seed, "order", epoch);
    std::shuffle(order.begin(), order.end(), order_eng);
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch_id) {
      const std::size_t stop = std::min(order.size(), start + bs);
      batch.clear();
      batch_ref.clear();
      for (std::size_t k = start; k < stop; ++k) {
        batch.push_back(order[k]);
        if (support != nullptr) {
          batch_ref.push_back(ref[order[k] - view.begin]);
        }
      }
      auto noise_eng = make_engine(seed, "noise", epoch, batch_id);
      for (double& v : noise) v = norm(noise_eng);
      post = GaussianNetworkDistribution(prior.shape(), mean, log_sigma);
      gaussian_objective_grad(post, prior, noise, data, batch, batch_ref,
                              spec, gmean, gls);
      for (std::size_t i = 0; i < P; ++i) {
        vel_mean[i] = cfg.momentum * vel_mean[i] + gmean[i];
        mean[i] -= cfg.learning_rate * vel_mean[i];
        vel_ls[i] = cfg.momentum * vel_ls[i] + gls[i];
        log_sigma[i] -= cfg.learning_rate * vel_ls[i];
      }
    }
  }
  return GaussianNetworkDistribution(prior.shape(), std::move(mean),
                                     std::move(log_sigma));
}

double union_log_term(std::size_t segments, std::size_t union_factor,
                      std::size_t n, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0,1)");
  }
  if (union_factor == 0) {
    throw std::invalid_argument("union factor must be positive");
  }
  return std::log(2.0 * static_cast<double>(segments) *
                  static_cast<double>(union_factor) *
                  std::sqrt(static_cast<double>(n)) / delta);
}

}  // namespace

HypothesisDistribution train_gibbs_posterior(
    const HypothesisDistribution& prior, const Dataset& data,
    const DataView& view, std::size_t n_effective, double delta,
    std::size_t union_factor, const TrainConfig& cfg, std::uint64_t seed) {
  require_view(view);
  if (n_effective == 0) {
    throw std::invalid_argument("effective sample count must be positive");
  }
  const double log_term = union_log_term(1, union_factor, n_effective, delta);
  if (const auto* cat = std::get_if<CategoricalDistribution>(&prior)) {
    if (cfg.epochs == 0 || view.size() == 0) return prior;
    const auto costs = rule_mean_losses(cat->grid(), view);
    auto rho = train_softmax_weights(cat->weights(), costs, 1.0, log_term,
                                     n_effective, cfg);
    return CategoricalDistribution(cat->grid_ptr(), std::move(rho));
  }
  const auto& g = std::get<GaussianNetworkDistribution>(prior);
  return train_gaussian(g, data, view, {}, 0.0, nullptr, log_term,
                        n_effective, cfg, seed);
}

HypothesisDistribution train_excess_posterior(
    const HypothesisDistribution& prior, const Dataset& data,
    const DataView& view, std::span<const unsigned char> reference_losses,
    double gamma, const DiscreteSupport& support, std::size_t n_effective,
    double delta, std::size_t union_factor, const TrainConfig& cfg,
    std::uint64_t seed) {
  require_view(view);
  if (reference_losses.size() != view.size()) {
    throw std::invalid_argument("need one reference loss per view point");
  }
  if (n_effective == 0) {
    throw std::invalid_argument("effective sample count must be positive");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in (0,1]");
  }
  const double log_term = union_log_term(support.segments(), union_factor,
                                         n_effective, delta);
  if (const auto* cat = std::get_if<CategoricalDistribution>(&prior)) {
    if (cfg.epochs == 0 || view.size() == 0) return prior;
    const auto costs = rule_excess_costs(cat->grid(), view, reference_losses,
                                         gamma, support);
    auto rho = train_softmax_weights(cat->weights(), costs,
                                     support.hi() - support.lo(), log_term,
                                     n_effective, cfg);
    return CategoricalDistribution(cat->grid_ptr(), std::move(rho));
  }
  const auto& g = std::get<GaussianNetworkDistribution>(prior);
  return train_gaussian(g, data, view, reference_losses, gamma, &support,
                        log_term, n_effective, cfg, seed);
}

Hypothesis erm_train(const HypothesisDistribution& space, const Dataset& data,
                     const DataView& view, const TrainConfig& cfg,
                     std::uint64_t seed) {
  require_view(view);
  if (view.size() == 0) throw std::invalid_argument("empty training view");
  if (const auto* cat = std::get_if<CategoricalDistribution>(&space)) {
    const auto costs = rule_mean_losses(cat->grid(), view);
    std::size_t best = 0;
    for (std::size_t h = 1; h < costs.size(); ++h) {
      if (costs[h] < costs[best]) best = h;
    }
    return ThresholdRule{cat->grid().thresholds[best]};
  }

  // Mean-network fit: SGD with momentum on the bounded cross-entropy alone.
  const auto& g = std::get<GaussianNetworkDistribution>(space);
  if (data.dim != g.shape().input_dim) {
    throw std::invalid_argument("dataset does not match the network inputs");
  }
  const auto layout = make_layout(g.shape());
  NetWorkspace ws;
  ws.resize(g.shape(), layout);
  std::vector<double> params = g.mean();
  std::vector<double> vel(params.size(), 0.0), grad(params.size());
  std::vector<std::size_t> order(view.size());
  std::iota(order.begin(), order.end(), view.begin);
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order_eng = make_engine(seed, "erm-order", epoch);
    std::shuffle(order.begin(), order.end(), order_eng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        forward(layout, params, data.row(i), ws);
        bounded_ce_core(ws.act.back(), data.labels[i], cfg.surrogate,
                        ws.dlogits.data());
        for (double& v : ws.dlogits) v *= inv_b;
        backward(layout, params, ws, grad);
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        vel[i] = cfg.momentum * vel[i] + grad[i];
        params[i] -= cfg.learning_rate * vel[i];
      }
    }
  }
  return NetworkRule{g.shape(), std::move(params)};
}

// ---------- checkpoints ----------

nlohmann::json distribution_to_json(const HypothesisDistribution& dist) {
  nlohmann::json j;
  if (const auto* cat = std::get_if<CategoricalDistribution>(&dist)) {
    j["kind"] = "categorical";
    j["thresholds"] = cat->grid().thresholds;
    j["weights"] = cat->weights();
    return j;
  }
  const auto& g = std::get<GaussianNetworkDistribution>(dist);
  j["kind"] = "gaussian-network";
  j["input_dim"] = g.shape().input_dim;
  j["hidden"] = g.shape().hidden;
  j["classes"] = g.shape().classes;
  j["mean"] = g.mean();
  j["log_sigma"] = g.log_sigma();
  return j;
}

HypothesisDistribution distribution_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "categorical") {
    auto grid = std::make_shared<ThresholdGrid>();
    grid->thresholds = j.at("thresholds").get<std::vector<double>>();
    return CategoricalDistribution(grid,
                                   j.at("weights").get<std::vector<double>>());
  }
  if (kind == "gaussian-network") {
    NetworkShape shape;
    shape.input_dim = j.at("input_dim").get<std::size_t>();
    shape.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    shape.classes = j.at("classes").get<std::size_t>();
    return GaussianNetworkDistribution(
        shape, j.at("mean").get<std::vector<double>>(),
        j.at("log_sigma").get<std::vector<double>>());
  }
  throw std::invalid_argument("unknown distribution kind: " + kind);
}

nlohmann::json hypothesis_to_json(const Hypothesis& h) {
  nlohmann::json j;
  if (const auto* rule = std::get_if<ThresholdRule>(&h)) {
    j["kind"] = "threshold-rule";
    j["theta"] = rule->theta;
    return j;
  }
  const auto& net = std::get<NetworkRule>(h);
  j["kind"] = "network-rule";
  j["input_dim"] = net.shape.input_dim;
  j["hidden"] = net.shape.hidden;
  j["classes"] = net.shape.classes;
  j["params"] = net.params;
  return j;
}

Hypothesis hypothesis_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "threshold-rule") {
    return ThresholdRule{j.at("theta").get<double>()};
  }
  if (kind == "network-rule") {
    NetworkShape shape;
    shape.input_dim = j.at("input_dim").get<std::size_t>();
    shape.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    shape.classes = j.at("classes").get<std::size_t>();
    NetworkRule rule{shape, j.at("params").get<std::vector<double>>()};
    if (rule.params.size() != shape.param_count()) {
      throw std::invalid_argument("network rule parameter count mismatch");
    }
    return rule;
  }
  throw std::invalid_argument("unknown hypothesis kind: " + kind);
}

}  // namespace rpb
