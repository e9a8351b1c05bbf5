#pragma once
// PAC-Bayesian confidence bounds on the Gibbs risk of a posterior rho with
// divergence KL(rho || pi) from its prior, from n observations, at level
// delta shared by `union_factor` simultaneous applications:
//
//   kl form:        risk <= kl_inv_upper(emp, (KL + ln(2 u sqrt(n)/delta)) / n)
//   split-kl form:  per-indicator inverses at (KL + ln(2 K u sqrt(n)/delta)) / n
//   McAllester:     emp + sqrt((KL + ln(2 u sqrt(n)/delta)) / (2 n))
//   sampling:       kl_inv_upper(sample mean, ln(1/delta') / m) for an m-draw
//                   Monte Carlo estimate of a Gibbs mean (no KL term).
//
// The McAllester form uses the same log term as the kl form, so by Pinsker's
// inequality it never falls below it; it exists as a differentiable training
// relaxation, not as a reporting bound.

#include <cstddef>
#include <vector>

#include "rpb/concentration.hpp"

namespace rpb {

// How delta and delta' are spent across a whole experiment.
struct ConfidenceBudget {
  double delta = 0.025;            // level of the reported bound
  double delta_prime = 0.01;       // Monte Carlo estimation budget
  std::size_t union_factor = 1;    // simultaneous kl applications sharing delta
  std::size_t sampling_parts = 1;  // equal shares of delta_prime

  double delta_prime_part() const {
    return delta_prime / static_cast<double>(sampling_parts);
  }
  void validate() const;  // throws std::invalid_argument on bad fields
};

struct BoundInputs {
  double empirical_mean = 0.0;  // Gibbs empirical loss, in [0,1]
  double kl_divergence = 0.0;   // KL(rho || pi) >= 0
  std::size_t n = 1;            // observation count
};

double pb_kl_upper(const BoundInputs& b, double delta, std::size_t union_factor);

double pb_split_kl_upper(const std::vector<double>& indicator_means,
                         const DiscreteSupport& support, double kl_divergence,
                         std::size_t n, double delta, std::size_t union_factor);

double mcallester_bound(const BoundInputs& b, double delta,
                        std::size_t union_factor);

double sampling_upper(double sample_mean, std::size_t m, double delta_part);

}  // namespace rpb
