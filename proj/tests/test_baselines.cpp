#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "rpb/baselines.hpp"
#include "rpb/concentration.hpp"
#include "rpb/data.hpp"
#include "rpb/hypotheses.hpp"
#include "rpb/pacbayes.hpp"

using namespace rpb;

namespace {

Dataset all_ones_set(std::size_t n) {
  Dataset d;
  d.n = n;
  d.dim = 1;
  d.classes = 2;
  d.features.assign(n, 1.0f);
  d.labels.assign(n, 1);
  return d;
}

void check_reports_equal(const BaselineReport& a, const BaselineReport& b) {
  const auto same = [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || x == y;
  };
  CHECK(a.method == b.method);
  CHECK(same(a.train01, b.train01));
  CHECK(same(a.test01, b.test01));
  CHECK(same(a.bound, b.bound));
  CHECK(same(a.kl, b.kl));
  CHECK(a.n_bound == b.n_bound);
  CHECK(same(a.emp, b.emp));
  CHECK(same(a.excess_bound, b.excess_bound));
  CHECK(same(a.hstar_bound, b.hstar_bound));
  CHECK(same(a.excess_f_hat, b.excess_f_hat));
  CHECK(same(a.hstar_emp, b.hstar_emp));
}

HypothesisDistribution json_round_trip(const HypothesisDistribution& dist) {
  return distribution_from_json(
      nlohmann::json::parse(distribution_to_json(dist).dump()));
}

}  // namespace

TEST_CASE("uninformed bound at the prior reduces to the zero-loss closed form") {
  const Dataset d = all_ones_set(100);
  auto grid = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(11));
  const HypothesisDistribution prior = CategoricalDistribution::uniform(grid);
  BaselineConfig cfg;
  cfg.mode = EstimationMode::exact;
  cfg.delta = 0.05;
  cfg.train.epochs = 0;

  const BaselineReport rep = run_uninformed(prior, d, cfg);
  CHECK(rep.method == "uninformed");
  CHECK(rep.kl == 0.0);
  CHECK(rep.n_bound == 100);
  CHECK(rep.emp == 0.0);
  CHECK(rep.train01 == 0.0);
  CHECK(std::isnan(rep.test01));
  CHECK(rep.bound == doctest::Approx(0.0581550791169722690).epsilon(1e-14));
  CHECK(rep.bound == pb_kl_upper({0.0, 0.0, 100}, 0.05, 1));

  const std::string csv = rep.to_csv();
  CHECK(csv.rfind("method,train01,test01,bound\nuninformed,", 0) == 0);
}

TEST_CASE("uninformed evaluation reproduces the trained run bit for bit") {
  const ThresholdTask task{0.5, 0.1};
  const Dataset d = gen_threshold_data(task, 200, 7);
  const Dataset test = gen_threshold_data(task, 100, 8);
  auto grid = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(21));
  const HypothesisDistribution prior = CategoricalDistribution::uniform(grid);
  BaselineConfig cfg;
  cfg.delta = 0.025;
  cfg.train.epochs = 60;
  cfg.train.learning_rate = 1.0;
  cfg.seed = 5;

  for (EstimationMode mode : {EstimationMode::exact, EstimationMode::sampled}) {
    cfg.mode = mode;
    const BaselineReport rep = run_uninformed(prior, d, cfg, &test);
    CHECK(rep.kl > 0.0);
    CHECK(!std::isnan(rep.test01));
    REQUIRE(rep.posterior.has_value());
    const BaselineReport again = evaluate_uninformed(
        prior, json_round_trip(*rep.posterior), d, cfg, &test);
    check_reports_equal(rep, again);
  }
}

TEST_CASE("informed pipeline trains the prior on half the data and bounds on the rest") {
  const ThresholdTask task{0.5, 0.1};
  const Dataset d = gen_threshold_data(task, 100, 13);
  auto grid = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(21));
  const HypothesisDistribution prior = CategoricalDistribution::uniform(grid);
  BaselineConfig cfg;
  cfg.mode = EstimationMode::exact;
  cfg.delta = 0.05;
  cfg.train.epochs = 60;
  cfg.train.learning_rate = 1.0;
  cfg.seed = 9;

  const BaselineReport rep = run_informed(prior, d, cfg);
  CHECK(rep.method == "informed");
  CHECK(rep.n_bound == 50);
  REQUIRE(rep.informed_prior.has_value());
  // The informed prior moved away from the uniform start.
  CHECK(kl_divergence(*rep.informed_prior, prior) > 0.0);

  // The empirical term behind the bound comes from the second half only.
  const double emp_half2 =
      empirical_gibbs_loss(*rep.posterior, DataView{&d, 50, 100},
                           EstimationMode::exact, 0)
          .mean;
  CHECK(rep.emp == emp_half2);
  CHECK(rep.bound ==
        pb_kl_upper({rep.emp, rep.kl, 50}, cfg.delta, 1));
  // The Gibbs train error stays comparable across methods: all of S.
  const double train_full =
      empirical_gibbs_loss(*rep.posterior, full_view(d),
                           EstimationMode::exact, 0)
          .mean;
  CHECK(rep.train01 == train_full);

  const BaselineReport again = evaluate_informed(
      json_round_trip(*rep.informed_prior), json_round_trip(*rep.posterior),
      d, cfg);
  check_reports_equal(rep, again);
}

TEST_CASE("informed-excess satisfies the decomposition identity in both modes") {
  const ThresholdTask task{0.5, 0.1};
  const Dataset d = gen_threshold_data(task, 300, 17);
  auto grid = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(21));
  const HypothesisDistribution prior = CategoricalDistribution::uniform(grid);
  BaselineConfig cfg;
  cfg.delta = 0.025;
  cfg.train.epochs = 60;
  cfg.train.learning_rate = 1.0;
  cfg.seed = 3;

  for (EstimationMode mode : {EstimationMode::exact, EstimationMode::sampled}) {
    cfg.mode = mode;
    const BaselineReport rep = run_informed_excess(prior, d, cfg);
    CHECK(rep.method == "informed-excess");
    CHECK(rep.n_bound == 150);
    CHECK(std::abs(rep.emp - (rep.excess_f_hat + rep.hstar_emp)) <= 1e-12);
    CHECK(rep.bound == rep.excess_bound + rep.hstar_bound);
    CHECK(rep.hstar_bound ==
          kl_bound_upper(rep.hstar_emp, 150, cfg.delta / 3.0));
    REQUIRE(rep.posterior.has_value());
    REQUIRE(rep.informed_prior.has_value());
    REQUIRE(rep.reference.has_value());

    const Hypothesis ref = hypothesis_from_json(
        nlohmann::json::parse(hypothesis_to_json(*rep.reference).dump()));
    const BaselineReport again = evaluate_informed_excess(
        json_round_trip(*rep.informed_prior), json_round_trip(*rep.posterior),
        ref, d, cfg);
    check_reports_equal(rep, again);
  }
}

TEST_CASE("a point mass on the reference collapses the excess term") {
  const ThresholdTask task{0.5, 0.1};
  const Dataset d = gen_threshold_data(task, 100, 29);
  auto grid = std::make_shared<ThresholdGrid>(ThresholdGrid{{0.0, 0.5, 1.0}});
  const HypothesisDistribution informed_prior =
      CategoricalDistribution::uniform(grid);
  const HypothesisDistribution point_mass =
      CategoricalDistribution(grid, {0.0, 1.0, 0.0});
  const Hypothesis reference = ThresholdRule{0.5};
  BaselineConfig cfg;
  cfg.mode = EstimationMode::exact;
  cfg.delta = 0.05;

  const BaselineReport rep = evaluate_informed_excess(
      informed_prior, point_mass, reference, d, cfg);
  CHECK(rep.excess_f_hat == 0.0);
  CHECK(rep.emp == rep.hstar_emp);
  CHECK(rep.kl == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  // Segment means are exactly (1, 0), so the excess bound is the kl inverse
  // of zero at (KL + ln(2 K sqrt(n) / (2 delta / 3))) / n.
  const DiscreteSupport ternary({-1.0, 0.0, 1.0});
  CHECK(rep.excess_bound ==
        pb_split_kl_upper({1.0, 0.0}, ternary, rep.kl, 50,
                          2.0 * cfg.delta / 3.0, 1));
  const double eps =
      (std::log(3.0) + std::log(2.0 * 2.0 * std::sqrt(50.0) * 30.0)) / 50.0;
  CHECK(rep.excess_bound == doctest::Approx(1.0 - std::exp(-eps)).epsilon(1e-12));
  CHECK(rep.hstar_bound == kl_bound_upper(rep.hstar_emp, 50, cfg.delta / 3.0));
  CHECK(rep.bound == rep.excess_bound + rep.hstar_bound);
}

TEST_CASE("a separable task gives the reference rule zero loss on the bound half") {
  const ThresholdTask task{0.5, 0.0};
  const Dataset d = gen_threshold_data(task, 400, 37);
  auto grid = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(11));
  const HypothesisDistribution prior = CategoricalDistribution::uniform(grid);
  BaselineConfig cfg;
  cfg.mode = EstimationMode::exact;
  cfg.delta = 0.05;
  cfg.train.epochs = 80;
  cfg.train.learning_rate = 1.0;
  cfg.seed = 2;

  const BaselineReport rep = run_informed_excess(prior, d, cfg);
  CHECK(std::get<ThresholdRule>(*rep.reference).theta == 0.5);
  CHECK(rep.hstar_emp == 0.0);
  CHECK(rep.hstar_bound == kl_bound_upper(0.0, 200, cfg.delta / 3.0));
  CHECK(rep.hstar_bound ==
        doctest::Approx(1.0 - std::exp(-std::log(60.0) / 200.0))
            .epsilon(1e-13));
}

TEST_CASE("baselines run end to end on the gaussian backend") {
  const ThresholdTask task{0.5, 0.1};
  const Dataset d = gen_threshold_data(task, 128, 43);
  const HypothesisDistribution prior =
      GaussianNetworkDistribution::initial(NetworkShape{1, {4}, 2}, 0.05, 21);
  BaselineConfig cfg;
  cfg.mode = EstimationMode::sampled;
  cfg.train.epochs = 10;
  cfg.train.learning_rate = 0.02;
  cfg.train.batch_size = 32;
  cfg.seed = 12;

  const BaselineReport uni = run_uninformed(prior, d, cfg);
  CHECK(uni.bound > 0.0);
  CHECK(uni.kl >= 0.0);
  CHECK(uni.train01 >= 0.0);
  CHECK(uni.train01 <= 1.0);
  check_reports_equal(uni, evaluate_uninformed(
                               prior, json_round_trip(*uni.posterior), d, cfg));

  const BaselineReport exc = run_informed_excess(prior, d, cfg);
  CHECK(std::abs(exc.emp - (exc.excess_f_hat + exc.hstar_emp)) <= 1e-12);
  CHECK(exc.bound == exc.excess_bound + exc.hstar_bound);
  const Hypothesis ref = hypothesis_from_json(
      nlohmann::json::parse(hypothesis_to_json(*exc.reference).dump()));
  check_reports_equal(exc, evaluate_informed_excess(
                               json_round_trip(*exc.informed_prior),
                               json_round_trip(*exc.posterior), ref, d, cfg));
}

TEST_CASE("baseline configs are validated before any training") {
  const Dataset d = all_ones_set(64);
  const HypothesisDistribution gauss =
      GaussianNetworkDistribution::initial(NetworkShape{1, {2}, 2}, 0.05, 1);
  BaselineConfig cfg;
  cfg.mode = EstimationMode::exact;
  CHECK_THROWS(run_uninformed(gauss, d, cfg));
  CHECK_THROWS(run_informed(gauss, d, cfg));
  CHECK_THROWS(run_informed_excess(gauss, d, cfg));

  auto grid = std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(5));
  const HypothesisDistribution prior = CategoricalDistribution::uniform(grid);
  cfg.delta = 0.0;
  CHECK_THROWS(run_uninformed(prior, d, cfg));
  cfg.delta = 1.0;
  CHECK_THROWS(run_uninformed(prior, d, cfg));
  cfg.delta = 0.05;
  cfg.delta_prime = 0.0;
  CHECK_THROWS(run_uninformed(prior, d, cfg));
}
