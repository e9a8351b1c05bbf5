#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "rpb/concentration.hpp"

using namespace rpb;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Test-local oracle: straight-line reimplementation of the divergence and a
// fixed-count midpoint bisection, kept independent of the library path.
double oracle_kl(double p, double q) {
  double t = 0.0;
  if (p > 0.0) t += p * std::log(p / q);
  if (p < 1.0) t += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  return t;
}

double oracle_inv_upper(double p, double eps) {
  double lo = p, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (mid > p && mid < 1.0 && oracle_kl(p, mid) <= eps) {
      lo = mid;
    } else if (mid > p && mid < 1.0) {
      hi = mid;
    } else {
      break;
    }
  }
  return 0.5 * (lo + hi);
}

double oracle_inv_lower(double p, double eps) {
  double lo = 0.0, hi = p;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (mid > 0.0 && mid < p && oracle_kl(p, mid) <= eps) {
      hi = mid;
    } else if (mid > 0.0 && mid < p) {
      lo = mid;
    } else {
      break;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("bern_kl basic values") {
  CHECK(bern_kl(0.5, 0.5) == 0.0);
  CHECK(bern_kl(0.0, 0.0) == 0.0);
  CHECK(bern_kl(1.0, 1.0) == 0.0);
  CHECK(bern_kl(0.0, 1.0) == kInf);
  CHECK(bern_kl(1.0, 0.0) == kInf);
  CHECK(bern_kl(0.3, 0.0) == kInf);
  CHECK(bern_kl(0.3, 1.0) == kInf);
  // frozen: high-precision evaluation of the closed formula
  CHECK(bern_kl(0.3, 0.5) == doctest::Approx(0.08228287850505185).epsilon(1e-12));
  CHECK(bern_kl(0.01, 0.99) == doctest::Approx(4.5032174531318981).epsilon(1e-12));
  CHECK_THROWS_AS(bern_kl(-0.1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(bern_kl(0.5, 1.1), std::invalid_argument);
}

TEST_CASE("bern_kl is nonnegative and zero only on the diagonal") {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    double p = u(eng), q = u(eng);
    double v = bern_kl(p, q);
    CHECK(v >= 0.0);
    if (std::abs(p - q) > 1e-3) CHECK(v > 0.0);
    CHECK(bern_kl(p, p) == 0.0);
  }
}

TEST_CASE("kl_inv_upper closed forms") {
  CHECK(kl_inv_upper(0.0, 0.1) ==
        doctest::Approx(0.09516258196404043).epsilon(1e-12));
  CHECK(kl_inv_upper(0.0, 0.1) == -std::expm1(-0.1));  // exact boundary form
  CHECK(kl_inv_upper(1.0, 0.7) == 1.0);
  CHECK(kl_inv_upper(0.5, 0.0) == 0.5);
  CHECK_THROWS_AS(kl_inv_upper(0.5, -1e-9), std::invalid_argument);
  CHECK_THROWS_AS(kl_inv_upper(1.5, 0.1), std::invalid_argument);
}

TEST_CASE("kl_inv_lower closed forms") {
  CHECK(kl_inv_lower(1.0, 0.1) == std::exp(-0.1));
  CHECK(kl_inv_lower(0.0, 0.3) == 0.0);
  CHECK(kl_inv_lower(0.7, 0.0) == 0.7);
}

TEST_CASE("kl inverses match the independent bisection oracle") {
  // frozen from a 40-digit reference bisection:
  CHECK(kl_inv_upper(0.1, 0.01) ==
        doctest::Approx(0.14767553929800747).epsilon(1e-10));
  CHECK(kl_inv_lower(0.1, 0.01) ==
        doctest::Approx(0.06291062984725831).epsilon(1e-10));
  CHECK(kl_inv_upper(0.25, 0.5) ==
        doctest::Approx(0.73067957637942867).epsilon(1e-10));
  CHECK(kl_inv_lower(0.9, 0.2) ==
        doctest::Approx(0.62160845115210587).epsilon(1e-10));

  std::mt19937_64 eng(13);
  std::uniform_real_distribution<double> up(0.0, 1.0);
  std::uniform_real_distribution<double> ue(0.0, 2.0);
  for (int i = 0; i < 500; ++i) {
    double p = up(eng), eps = ue(eng);
    CHECK(kl_inv_upper(p, eps) ==
          doctest::Approx(oracle_inv_upper(p, eps)).epsilon(1e-9));
    CHECK(kl_inv_lower(p, eps) ==
          doctest::Approx(oracle_inv_lower(p, eps)).epsilon(1e-9));
  }
}

TEST_CASE("kl inverses sandwich the empirical mean and invert the divergence") {
  std::mt19937_64 eng(29);
  std::uniform_real_distribution<double> up(0.0, 1.0);
  std::uniform_real_distribution<double> ue(0.0, 4.0);
  // Sandwich property on arbitrary pairs.
  for (int i = 0; i < 5000; ++i) {
    double p = up(eng), eps = ue(eng);
    CHECK(kl_inv_lower(p, eps) <= p);
    CHECK(p <= kl_inv_upper(p, eps));
  }
  // Residual checks on pairs seeded from a known interior solution, where
  // the divergence equation is solvable in doubles. (With a uniform eps the
  // solution can land within one ulp of a boundary, where a single
  // representable step changes the divergence by far more than 1e-9.)
  for (int i = 0; i < 5000; ++i) {
    double p = up(eng);
    double qu = p + (1.0 - p) * up(eng);
    if (p > 0.0 && qu > p && qu < 1.0) {
      double eps = bern_kl(p, qu);
      double hi = kl_inv_upper(p, eps);
      CHECK(hi < 1.0);
      CHECK(std::abs(bern_kl(p, hi) - eps) <= 1e-9);
    }
    double ql = p * up(eng);
    if (p < 1.0 && ql > 0.0 && ql < p) {
      double eps = bern_kl(p, ql);
      double lo = kl_inv_lower(p, eps);
      CHECK(lo > 0.0);
      CHECK(std::abs(bern_kl(p, lo) - eps) <= 1e-9);
    }
  }
  // Regression: this pair's lower solution is near 6.5e-58, deep enough that
  // a short bisection returns an unconverged point with residual ~1e-6.
  {
    const double p = 0.027282624626209919;
    const double eps = 3.5115758894614606;
    const double lo = kl_inv_lower(p, eps);
    CHECK(lo > 0.0);
    CHECK(std::abs(bern_kl(p, lo) - eps) <= 1e-9);
  }
}

TEST_CASE("kl_inv_upper is monotone in eps and in the mean") {
  std::mt19937_64 eng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    double p = u(eng);
    double e1 = 2.0 * u(eng), e2 = 2.0 * u(eng);
    if (e1 > e2) std::swap(e1, e2);
    CHECK(kl_inv_upper(p, e1) <= kl_inv_upper(p, e2));
    CHECK(kl_inv_lower(p, e1) >= kl_inv_lower(p, e2));
    double p2 = u(eng);
    double pl = std::min(p, p2), ph = std::max(p, p2);
    CHECK(kl_inv_upper(pl, e1) <= kl_inv_upper(ph, e1));
  }
}

TEST_CASE("DiscreteSupport validates its points") {
  CHECK_THROWS_AS(DiscreteSupport({1.0}), std::invalid_argument);
  CHECK_THROWS_AS(DiscreteSupport({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(DiscreteSupport({0.5, 0.2}), std::invalid_argument);
  DiscreteSupport s({-0.5, 0.0, 0.5, 1.0});
  CHECK(s.segments() == 3);
  CHECK(s.lo() == -0.5);
  CHECK(s.hi() == 1.0);
  CHECK(s.gap(1) == 0.5);
  CHECK(s.gap(2) == 0.5);
  CHECK(s.gap(3) == 0.5);
}

TEST_CASE("binarify produces exceedance indicators") {
  DiscreteSupport s({-0.5, 0.0, 0.5, 1.0});
  CHECK(binarify(0.5, s).indicators == std::vector<unsigned char>{1, 1, 0});
  CHECK(binarify(-0.5, s).indicators == std::vector<unsigned char>{0, 0, 0});
  CHECK(binarify(1.0, s).indicators == std::vector<unsigned char>{1, 1, 1});
  CHECK(binarify(0.5 + 1e-13, s).indicators ==
        std::vector<unsigned char>{1, 1, 0});  // snapped to the grid
  CHECK_THROWS_AS(binarify(0.25, s), std::invalid_argument);
}

TEST_CASE("reconstruct rejects malformed decompositions") {
  DiscreteSupport s({-0.5, 0.0, 0.5, 1.0});
  BinaryDecomposition bad;
  bad.indicators = {0, 1, 0};
  CHECK_THROWS_AS(reconstruct(bad, s), std::invalid_argument);
  bad.indicators = {1, 1};
  CHECK_THROWS_AS(reconstruct(bad, s), std::invalid_argument);
  BinaryDecomposition ok;
  ok.indicators = {1, 1, 0};
  CHECK(reconstruct(ok, s) == 0.5);
}

TEST_CASE("binarify/reconstruct round trip is exact on random supports") {
  std::mt19937_64 eng(101);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_int_distribution<std::size_t> nk(2, 8);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> pts;
    std::size_t k = nk(eng);
    for (std::size_t j = 0; j < k; ++j) pts.push_back(u(eng));
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 2) continue;
    DiscreteSupport s(pts);
    for (double z : pts) {
      CHECK(reconstruct(binarify(z, s), s) == z);  // bitwise identity
    }
  }
}

TEST_CASE("gap sum telescopes to the span on dyadic grids") {
  // Points on a 2^-20 lattice make every gap and partial sum exactly
  // representable, so the telescoping identity holds bitwise.
  std::mt19937_64 eng(103);
  std::uniform_int_distribution<long> grid(-(1L << 23), 1L << 23);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pts;
    for (int j = 0; j < 6; ++j) {
      pts.push_back(static_cast<double>(grid(eng)) / (1 << 20));
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 2) continue;
    DiscreteSupport s(pts);
    double sum = 0.0;
    for (std::size_t j = 1; j <= s.segments(); ++j) sum += s.gap(j);
    CHECK(sum == s.hi() - s.lo());
  }
}

TEST_CASE("split_kl_upper closed-form cases") {
  DiscreteSupport s({-0.5, 0.0, 0.5, 1.0});
  // all-zero means: each inverse is the p_hat=0 closed form
  double expect0 = -0.5 + 1.5 * (-std::expm1(-std::log(3.0 / 0.05) / 100.0));
  CHECK(split_kl_upper({0.0, 0.0, 0.0}, s, 100, 0.05) ==
        doctest::Approx(expect0).epsilon(1e-12));
  // all-one means: every inverse is 1, the sum telescopes to the top point
  CHECK(split_kl_upper({1.0, 1.0, 1.0}, s, 100, 0.05) == 1.0);
  // frozen mixed-mean value from the 40-digit reference
  CHECK(split_kl_upper({0.9, 0.5, 0.1}, s, 200, 0.05) ==
        doctest::Approx(0.36064921603116475).epsilon(1e-10));
  CHECK_THROWS_AS(split_kl_upper({0.5}, s, 100, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(split_kl_upper({0.0, 0.0, 0.0}, s, 0, 0.05),
                  std::invalid_argument);
  CHECK_THROWS_AS(split_kl_upper({0.0, 0.0, 0.0}, s, 100, 0.0),
                  std::invalid_argument);
}

TEST_CASE("split-kl on a binary support reduces to the plain kl bound") {
  DiscreteSupport binary({0.0, 1.0});
  std::mt19937_64 eng(107);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    double m = u(eng);
    std::size_t n = 10 + static_cast<std::size_t>(u(eng) * 1000);
    double delta = 0.01 + 0.5 * u(eng);
    CHECK(split_kl_upper({m}, binary, n, delta) ==
          doctest::Approx(kl_bound_upper(m, n, delta)).epsilon(1e-12));
  }
}

TEST_CASE("kl_bound_upper closed forms") {
  CHECK(kl_bound_upper(0.0, 100, 0.05) ==
        doctest::Approx(1.0 - std::pow(0.05, 0.01)).epsilon(1e-12));
  CHECK(kl_bound_upper(0.0, 100, 0.05) ==
        doctest::Approx(0.029513049607039935).epsilon(1e-12));
  CHECK(kl_bound_upper(0.1, 200, 0.025) ==
        doctest::Approx(0.16721103803928300).epsilon(1e-10));
}

TEST_CASE("split-kl bound covers the true mean at its stated level") {
  // Direct Monte Carlo at modest trial count; the acceptance suite repeats
  // this at 10^4 trials.
  DiscreteSupport s({-0.5, 0.0, 0.5, 1.0});
  std::vector<double> probs = {0.1, 0.4, 0.4, 0.1};
  double truth = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) truth += probs[i] * s.point(i);
  const std::size_t n = 100, trials = 2000;
  const double delta = 0.05;
  std::mt19937_64 eng(211);
  std::discrete_distribution<int> cat(probs.begin(), probs.end());
  std::size_t violations = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> means(s.segments(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      int idx = cat(eng);
      for (std::size_t j = 1; j <= s.segments(); ++j) {
        if (static_cast<std::size_t>(idx) >= j) means[j - 1] += 1.0;
      }
    }
    for (auto& m : means) m /= static_cast<double>(n);
    if (split_kl_upper(means, s, n, delta) < truth) ++violations;
  }
  CHECK(static_cast<double>(violations) / trials <= delta);
}
