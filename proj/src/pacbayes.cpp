#include "rpb/pacbayes.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rpb {

namespace {

void require_level(double delta, const char* name) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in (0,1), got " +
                                std::to_string(delta));
  }
}

void require_inputs(const BoundInputs& b) {
  if (!(b.empirical_mean >= 0.0 && b.empirical_mean <= 1.0)) {
    throw std::invalid_argument("empirical mean must lie in [0,1]");
  }
  if (!(b.kl_divergence >= 0.0)) {
    throw std::invalid_argument("KL divergence must be nonnegative");
  }
  if (b.n == 0) throw std::invalid_argument("sample count must be positive");
}

double union_log_term(std::size_t n, double delta, std::size_t union_factor,
                      std::size_t segments = 1) {
  if (union_factor == 0) {
    throw std::invalid_argument("union factor must be positive");
  }
  return std::log(2.0 * static_cast<double>(segments) *
                  static_cast<double>(union_factor) *
                  std::sqrt(static_cast<double>(n)) / delta);
}

}  // namespace

void ConfidenceBudget::validate() const {
  require_level(delta, "delta");
  require_level(delta_prime, "delta_prime");
  if (!(delta + delta_prime < 1.0)) {
    throw std::invalid_argument("delta + delta_prime must be below 1");
  }
  if (union_factor == 0 || sampling_parts == 0) {
    throw std::invalid_argument("budget factors must be positive");
  }
}

double pb_kl_upper(const BoundInputs& b, double delta,
                   std::size_t union_factor) {
  require_inputs(b);
  require_level(delta, "delta");
  const double eps =
      (b.kl_divergence + union_log_term(b.n, delta, union_factor)) /
      static_cast<double>(b.n);
  return kl_inv_upper(b.empirical_mean, eps);
}

double pb_split_kl_upper(const std::vector<double>& indicator_means,
                         const DiscreteSupport& support, double kl_divergence,
                         std::size_t n, double delta,
                         std::size_t union_factor) {
  require_level(delta, "delta");
  if (!(kl_divergence >= 0.0)) {
    throw std::invalid_argument("KL divergence must be nonnegative");
  }
  if (n == 0) throw std::invalid_argument("sample count must be positive");
  if (indicator_means.size() != support.segments()) {
    throw std::invalid_argument("need one indicator mean per support segment");
  }
  const double eps =
      (kl_divergence +
       union_log_term(n, delta, union_factor, support.segments())) /
      static_cast<double>(n);
  double bound = support.lo();
  for (std::size_t j = 1; j <= support.segments(); ++j) {
    const double m = indicator_means[j - 1];
    if (!(m >= 0.0 && m <= 1.0)) {
      throw std::invalid_argument("indicator means must lie in [0,1]");
    }
    bound += support.gap(j) * kl_inv_upper(m, eps);
  }
  return bound;
}

double mcallester_bound(const BoundInputs& b, double delta,
                        std::size_t union_factor) {
  require_inputs(b);
  require_level(delta, "delta");
  const double eps =
      (b.kl_divergence + union_log_term(b.n, delta, union_factor)) /
      static_cast<double>(b.n);
  return b.empirical_mean + std::sqrt(eps / 2.0);  // may exceed 1 by design
}

double sampling_upper(double sample_mean, std::size_t m, double delta_part) {
  if (!(sample_mean >= 0.0 && sample_mean <= 1.0)) {
    throw std::invalid_argument("sample mean must lie in [0,1]");
  }
  if (m == 0) throw std::invalid_argument("draw count must be positive");
  require_level(delta_part, "delta_part");
  return kl_inv_upper(sample_mean,
                      std::log(1.0 / delta_part) / static_cast<double>(m));
}

}  // namespace rpb
