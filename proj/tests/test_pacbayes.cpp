#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "rpb/pacbayes.hpp"

using namespace rpb;

TEST_CASE("pb_kl_upper closed form at zero loss and zero divergence") {
  // eps = ln(2*sqrt(100)/0.05)/100 = ln(400)/100, inverse of bern_kl(0,.)
  BoundInputs b{0.0, 0.0, 100};
  CHECK(pb_kl_upper(b, 0.05, 1) ==
        doctest::Approx(1.0 - std::exp(-std::log(400.0) / 100.0))
            .epsilon(1e-12));
  CHECK(pb_kl_upper(b, 0.05, 1) ==
        doctest::Approx(0.05815507911697227).epsilon(1e-12));
}

TEST_CASE("pb_kl_upper frozen interior value") {
  BoundInputs b{0.2, 10.0, 1000};
  CHECK(pb_kl_upper(b, 0.025, 4) ==
        doctest::Approx(0.28546217011119367).epsilon(1e-10));
}

TEST_CASE("pb_kl_upper input validation") {
  CHECK_THROWS_AS(pb_kl_upper({1.2, 0.0, 10}, 0.05, 1), std::invalid_argument);
  CHECK_THROWS_AS(pb_kl_upper({0.2, -1.0, 10}, 0.05, 1), std::invalid_argument);
  CHECK_THROWS_AS(pb_kl_upper({0.2, 0.0, 0}, 0.05, 1), std::invalid_argument);
  CHECK_THROWS_AS(pb_kl_upper({0.2, 0.0, 10}, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(pb_kl_upper({0.2, 0.0, 10}, 0.05, 0), std::invalid_argument);
}

TEST_CASE("mcallester_bound closed form and overshoot") {
  BoundInputs b{0.0, 0.0, 100};
  CHECK(mcallester_bound(b, 0.05, 1) ==
        doctest::Approx(std::sqrt(std::log(400.0) / 200.0)).epsilon(1e-12));
  CHECK(mcallester_bound(b, 0.05, 1) ==
        doctest::Approx(0.17308183826022853).epsilon(1e-12));
  // unlike the kl form, the relaxation may exceed 1
  CHECK(mcallester_bound({0.9, 50.0, 100}, 0.05, 1) > 1.0);
}

TEST_CASE("mcallester relaxation dominates the kl bound (Pinsker)") {
  std::mt19937_64 eng(47);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    BoundInputs b;
    b.empirical_mean = u(eng);
    b.kl_divergence = 20.0 * u(eng);
    b.n = 10 + static_cast<std::size_t>(u(eng) * 5000);
    double delta = 0.01 + 0.48 * u(eng);
    std::size_t factor = 1 + static_cast<std::size_t>(u(eng) * 8);
    CHECK(mcallester_bound(b, delta, factor) >=
          pb_kl_upper(b, delta, factor) - 1e-12);
  }
}

TEST_CASE("pb_kl_upper is monotone in divergence, mean, and sample count") {
  std::mt19937_64 eng(53);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    double emp = u(eng);
    double kl1 = 10.0 * u(eng), kl2 = 10.0 * u(eng);
    if (kl1 > kl2) std::swap(kl1, kl2);
    std::size_t n = 10 + static_cast<std::size_t>(u(eng) * 2000);
    CHECK(pb_kl_upper({emp, kl1, n}, 0.05, 1) <=
          pb_kl_upper({emp, kl2, n}, 0.05, 1));
    double e1 = u(eng), e2 = u(eng);
    if (e1 > e2) std::swap(e1, e2);
    CHECK(pb_kl_upper({e1, kl1, n}, 0.05, 1) <=
          pb_kl_upper({e2, kl1, n}, 0.05, 1));
    CHECK(pb_kl_upper({emp, kl1, 2 * n}, 0.05, 1) <=
          pb_kl_upper({emp, kl1, n}, 0.05, 1));
    CHECK(pb_kl_upper({emp, kl1, n}, 0.05, 1) <=
          pb_kl_upper({emp, kl1, n}, 0.05, 4));  // union factor weakens
  }
}

TEST_CASE("pb_split_kl_upper all-zero means closed form") {
  DiscreteSupport s({-0.5, 0.0, 0.5, 1.0});
  // eps = ln(2*3*sqrt(100)/0.05)/100 = ln(1200)/100 for every component
  double expect = -0.5 + 1.5 * (-std::expm1(-std::log(1200.0) / 100.0));
  CHECK(pb_split_kl_upper({0.0, 0.0, 0.0}, s, 0.0, 100, 0.05, 1) ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK(pb_split_kl_upper({0.0, 0.0, 0.0}, s, 0.0, 100, 0.05, 1) ==
        doctest::Approx(-0.39733149081049635).epsilon(1e-10));
  // all-one means telescope to the top of the support regardless of KL
  CHECK(pb_split_kl_upper({1.0, 1.0, 1.0}, s, 3.0, 100, 0.05, 1) == 1.0);
}

TEST_CASE("pb_split_kl_upper equals its per-component definition") {
  DiscreteSupport s({-0.25, 0.0, 0.75, 1.0});
  std::mt19937_64 eng(59);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> means = {u(eng), u(eng), u(eng)};
    double kl = 5.0 * u(eng);
    std::size_t n = 50 + static_cast<std::size_t>(u(eng) * 1000);
    double delta = 0.025;
    std::size_t factor = 1 + static_cast<std::size_t>(u(eng) * 4);
    double eps = (kl + std::log(2.0 * 3.0 * factor * std::sqrt(double(n)) /
                                delta)) /
                 static_cast<double>(n);
    double manual = s.lo();
    for (std::size_t j = 1; j <= 3; ++j) {
      manual += s.gap(j) * kl_inv_upper(means[j - 1], eps);
    }
    CHECK(pb_split_kl_upper(means, s, kl, n, delta, factor) ==
          doctest::Approx(manual).epsilon(1e-12));
  }
}

TEST_CASE("sampling_upper closed form and monotone inflation") {
  CHECK(sampling_upper(0.0, 1000, 0.01) ==
        doctest::Approx(1.0 - std::pow(0.01, 0.001)).epsilon(1e-12));
  CHECK(sampling_upper(0.0, 1000, 0.01) ==
        doctest::Approx(0.004594582648473038).epsilon(1e-12));
  CHECK(sampling_upper(0.3, 500, 0.0025) ==
        doctest::Approx(0.37372729289619824).epsilon(1e-10));
  std::mt19937_64 eng(61);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    double m = u(eng);
    std::size_t n = 10 + static_cast<std::size_t>(u(eng) * 5000);
    double inflated = sampling_upper(m, n, 0.005);
    CHECK(inflated >= m);
    CHECK(inflated <= 1.0);
    // inflating the mean can only weaken a downstream kl bound
    CHECK(pb_kl_upper({inflated, 1.0, n}, 0.05, 1) >=
          pb_kl_upper({m, 1.0, n}, 0.05, 1));
  }
}

TEST_CASE("ConfidenceBudget validation") {
  ConfidenceBudget ok;
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.delta_prime_part() == ok.delta_prime);
  ConfidenceBudget parts = ok;
  parts.sampling_parts = 10;
  CHECK(parts.delta_prime_part() == doctest::Approx(ok.delta_prime / 10.0));
  ConfidenceBudget bad = ok;
  bad.delta = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.delta = 0.6;
  bad.delta_prime = 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.union_factor = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
