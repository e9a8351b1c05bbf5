#pragma once
// Bernoulli relative entropy ("little kl"), its confidence inverses, and the
// split-kl upper confidence bound for discrete bounded random variables.
//
//   bern_kl(p, q)  = p ln(p/q) + (1-p) ln((1-p)/(1-q))
//   kl_inv_upper   = max { q in [p_hat, 1] : bern_kl(p_hat, q) <= eps }
//   kl_inv_lower   = min { q in [0, p_hat] : bern_kl(p_hat, q) <= eps }
//
// A variable Z on a finite support b_0 < ... < b_K decomposes into exceedance
// indicators Z|j = 1[Z >= b_j] with gaps alpha_j = b_j - b_{j-1}:
//
//   Z = b_0 + sum_{j=1..K} alpha_j Z|j.
//
// Bounding each indicator mean by its kl upper inverse at eps = ln(K/delta)/n
// and recombining gives the split-kl upper confidence bound, which is tighter
// than a single kl bound when the gaps carry unequal probability mass.

#include <cstddef>
#include <vector>

namespace rpb {

// Extended-value divergence: may return +infinity, never negative.
// Throws std::invalid_argument unless p and q lie in [0,1].
double bern_kl(double p, double q);

// Largest q >= p_hat with bern_kl(p_hat, q) <= eps. Boundary cases are closed
// forms: p_hat = 1 -> 1, eps = 0 -> p_hat, p_hat = 0 -> 1 - e^-eps. Interior
// cases bisect until the bracket collapses (at most 200 iterations); the
// returned endpoint is on the conservative (large) side.
double kl_inv_upper(double p_hat, double eps);

// Smallest q <= p_hat with bern_kl(p_hat, q) <= eps; mirror of kl_inv_upper
// (closed forms: p_hat = 0 -> 0, eps = 0 -> p_hat, p_hat = 1 -> e^-eps).
double kl_inv_lower(double p_hat, double eps);

// Strictly increasing support points b_0 < ... < b_K, K >= 1 segments.
class DiscreteSupport {
 public:
  explicit DiscreteSupport(std::vector<double> points);

  std::size_t segments() const { return points_.size() - 1; }  // K
  double point(std::size_t j) const { return points_[j]; }     // b_j, 0-based
  double gap(std::size_t j) const { return gaps_[j - 1]; }     // alpha_j, 1-based
  double lo() const { return points_.front(); }
  double hi() const { return points_.back(); }
  const std::vector<double>& points() const { return points_; }

 private:
  std::vector<double> points_;
  std::vector<double> gaps_;
};

// Exceedance indicators of one support value: indicators[j-1] = 1[z >= b_j].
// Monotone non-increasing in j by construction.
struct BinaryDecomposition {
  std::vector<unsigned char> indicators;
};

// z must match a support point within 1e-12 (it is snapped to that point).
BinaryDecomposition binarify(double z, const DiscreteSupport& support);

// Exact inverse of binarify: returns the support point selected by the
// indicator count. Rejects non-monotone or wrongly sized indicator vectors.
double reconstruct(const BinaryDecomposition& d, const DiscreteSupport& support);

// Split-kl upper confidence bound at level delta from n observations whose
// empirical exceedance-indicator means are indicator_means (one per segment):
//   b_0 + sum_j alpha_j * kl_inv_upper(mean_j, ln(K/delta)/n).
double split_kl_upper(const std::vector<double>& indicator_means,
                      const DiscreteSupport& support, std::size_t n,
                      double delta);

// Single-variable kl upper confidence bound: kl_inv_upper(p_hat, ln(1/delta)/n).
double kl_bound_upper(double p_hat, std::size_t n, double delta);

}  // namespace rpb
