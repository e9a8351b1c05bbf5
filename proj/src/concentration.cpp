#include "rpb/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rpb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSnapTol = 1e-12;

void require_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in [0,1], got " +
                                std::to_string(v));
  }
}

void require_eps(double eps) {
  if (std::isnan(eps) || eps < 0.0) {
    throw std::invalid_argument("eps must be nonnegative, got " +
                                std::to_string(eps));
  }
}

void require_level(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("delta must lie in (0,1), got " +
                                std::to_string(delta));
  }
}

void require_count(std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample count must be positive");
}

}  // namespace

double bern_kl(double p, double q) {
  require_unit(p, "p");
  require_unit(q, "q");
  double t = 0.0;
  if (p > 0.0) {
    if (q == 0.0) return kInf;
    t += p * std::log(p / q);
  }
  if (p < 1.0) {
    if (q == 1.0) return kInf;
    t += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  }
  return std::max(t, 0.0);  // clip rounding residue at the minimum kl(p,p)=0
}

double kl_inv_upper(double p_hat, double eps) {
  require_unit(p_hat, "p_hat");
  require_eps(eps);
  if (p_hat >= 1.0) return 1.0;
  if (eps == 0.0) return p_hat;
  if (p_hat == 0.0) return -std::expm1(-eps);  // bern_kl(0,q) = -ln(1-q)
  double lo = p_hat;  // feasible: bern_kl(p_hat, lo) = 0 <= eps
  double hi = 1.0;    // infeasible: bern_kl(p_hat, 1) = inf > eps
  // 1200 midpoint halvings reach a one-ulp bracket from any starting width,
  // even when the solution sits in the denormal range; the break below ends
  // the loop much earlier for ordinary inputs.
  for (int i = 0; i < 1200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // bracket is one ulp wide
    if (bern_kl(p_hat, mid) <= eps) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;  // conservative side: never below the exact inverse
}

double kl_inv_lower(double p_hat, double eps) {
  require_unit(p_hat, "p_hat");
  require_eps(eps);
  if (p_hat <= 0.0) return 0.0;
  if (eps == 0.0) return p_hat;
  if (p_hat == 1.0) return std::exp(-eps);  // bern_kl(1,q) = -ln(q)
  double lo = 0.0;    // infeasible: bern_kl(p_hat, 0) = inf > eps
  double hi = p_hat;  // feasible
  for (int i = 0; i < 1200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (bern_kl(p_hat, mid) <= eps) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return lo;  // conservative side: never above the exact inverse
}

DiscreteSupport::DiscreteSupport(std::vector<double> points)
    : points_(std::move(points)) {
  if (points_.size() < 2) {
    throw std::invalid_argument("support needs at least two points");
  }
  gaps_.reserve(points_.size() - 1);
  for (std::size_t j = 1; j < points_.size(); ++j) {
    if (!std::isfinite(points_[j]) || !std::isfinite(points_[j - 1])) {
      throw std::invalid_argument("support points must be finite");
    }
    if (!(points_[j] > points_[j - 1])) {
      throw std::invalid_argument("support points must be strictly increasing");
    }
    gaps_.push_back(points_[j] - points_[j - 1]);
  }
}

BinaryDecomposition binarify(double z, const DiscreteSupport& support) {
  const auto& pts = support.points();
  const auto it = std::lower_bound(pts.begin(), pts.end(), z);
  std::size_t idx = static_cast<std::size_t>(it - pts.begin());
  if (idx == pts.size() ||
      (idx > 0 && z - pts[idx - 1] < pts[idx] - z)) {
    --idx;  // nearest point, not first >= z
  }
  if (!(std::abs(z - pts[idx]) <= kSnapTol)) {
    throw std::invalid_argument("value " + std::to_string(z) +
                                " is not on the support grid");
  }
  BinaryDecomposition d;
  d.indicators.resize(support.segments());
  for (std::size_t j = 1; j <= support.segments(); ++j) {
    d.indicators[j - 1] = static_cast<unsigned char>(idx >= j);
  }
  return d;
}

double reconstruct(const BinaryDecomposition& d, const DiscreteSupport& support) {
  if (d.indicators.size() != support.segments()) {
    throw std::invalid_argument("indicator count does not match support");
  }
  std::size_t ones = 0;
  bool seen_zero = false;
  for (unsigned char v : d.indicators) {
    if (v > 1) throw std::invalid_argument("indicators must be 0 or 1");
    if (v == 1) {
      if (seen_zero) {
        throw std::invalid_argument("indicators must be monotone non-increasing");
      }
      ++ones;
    } else {
      seen_zero = true;
    }
  }
  // b_0 + sum_{j<=ones} alpha_j telescopes to the support point itself;
  // returning it directly keeps the round trip exact in floating point.
  return support.point(ones);
}

double split_kl_upper(const std::vector<double>& indicator_means,
                      const DiscreteSupport& support, std::size_t n,
                      double delta) {
  require_count(n);
  require_level(delta);
  if (indicator_means.size() != support.segments()) {
    throw std::invalid_argument("need one indicator mean per support segment");
  }
  const double eps =
      std::log(static_cast<double>(support.segments()) / delta) /
      static_cast<double>(n);
  double bound = support.lo();
  for (std::size_t j = 1; j <= support.segments(); ++j) {
    require_unit(indicator_means[j - 1], "indicator mean");
    bound += support.gap(j) * kl_inv_upper(indicator_means[j - 1], eps);
  }
  return bound;
}

double kl_bound_upper(double p_hat, std::size_t n, double delta) {
  require_count(n);
  require_level(delta);
  return kl_inv_upper(p_hat, std::log(1.0 / delta) / static_cast<double>(n));
}

}  // namespace rpb
