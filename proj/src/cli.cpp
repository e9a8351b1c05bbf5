#include "rpb/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rpb/baselines.hpp"
#include "rpb/config.hpp"
#include "rpb/data.hpp"
#include "rpb/hypotheses.hpp"
#include "rpb/random.hpp"
#include "rpb/recursion.hpp"
#include "rpb/validate.hpp"

namespace rpb {

namespace {

const char* mode_name(EstimationMode mode) {
  return mode == EstimationMode::exact ? "exact" : "sampled";
}

EstimationMode mode_from_name(const std::string& name) {
  if (name == "exact") return EstimationMode::exact;
  if (name == "sampled") return EstimationMode::sampled;
  throw std::runtime_error("unknown estimation mode: " + name);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

// NaN-aware equality: checkpoint re-validation must reproduce missing cells
// (NaN) as well as values.
bool same_value(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

void append_cell(std::string& out, double v) {
  if (std::isnan(v)) return;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  out += buf;
}

struct ExperimentData {
  Dataset train;
  std::optional<Dataset> test;
};

// idx data is loaded once by the caller and passed in so multi-seed compare
// runs do not reread the files; synthetic data is drawn fresh per seed.
ExperimentData build_data(const ExperimentConfig& cfg, std::uint64_t seed,
                          const Dataset* idx_train, const Dataset* idx_test) {
  ExperimentData d;
  if (cfg.dataset == "synthetic") {
    const ThresholdTask task{cfg.theta_star, cfg.eta};
    d.train = gen_threshold_data(task, cfg.n, seed);
    if (cfg.test_n > 0) {
      d.test = gen_threshold_data(task, cfg.test_n,
                                  derive_seed(seed, "test-data"));
    }
  } else {
    d.train = *idx_train;
    if (idx_test != nullptr) d.test = *idx_test;
  }
  if (cfg.subsample > 0) {
    d.train = stratified_subsample(d.train, cfg.subsample, seed);
  }
  return d;
}

HypothesisDistribution build_prior(const ExperimentConfig& cfg,
                                   const Dataset& data, std::uint64_t seed) {
  if (cfg.model == "finite") {
    return CategoricalDistribution::uniform(
        std::make_shared<ThresholdGrid>(ThresholdGrid::uniform(cfg.grid_size)));
  }
  NetworkShape shape;
  shape.input_dim = data.dim;
  shape.hidden = cfg.hidden;
  shape.classes = data.classes;
  return GaussianNetworkDistribution::initial(shape, cfg.sigma0, seed);
}

RecursionConfig recursion_config(const ExperimentConfig& cfg,
                                 std::uint64_t seed) {
  RecursionConfig rc;
  rc.steps = cfg.steps;
  rc.gammas = {cfg.gamma};
  rc.gamma_grid = cfg.gamma_grid;
  rc.mode = cfg.mode;
  rc.delta = cfg.delta;
  rc.delta_prime = cfg.delta_prime;
  rc.train = cfg.train;
  rc.seed = seed;
  return rc;
}

BaselineConfig baseline_config(const ExperimentConfig& cfg,
                               std::uint64_t seed) {
  BaselineConfig bc;
  bc.mode = cfg.mode;
  bc.delta = cfg.delta;
  bc.delta_prime = cfg.delta_prime;
  bc.train = cfg.train;
  bc.seed = seed;
  return bc;
}

BaselineReport run_baseline(const std::string& method,
                            const HypothesisDistribution& prior,
                            const Dataset& data, const BaselineConfig& bc,
                            const Dataset* test) {
  if (method == "uninformed") return run_uninformed(prior, data, bc, test);
  if (method == "informed") return run_informed(prior, data, bc, test);
  if (method == "informed-excess") {
    return run_informed_excess(prior, data, bc, test);
  }
  throw std::runtime_error("unknown method: " + method);
}

nlohmann::json meta_json(const ExperimentConfig& cfg,
                         const std::string& method, std::uint64_t seed) {
  nlohmann::json meta;
  meta["method"] = method;
  meta["seed"] = seed;
  meta["dataset"] = cfg.dataset;
  meta["model"] = cfg.model;
  meta["mode"] = mode_name(cfg.mode);
  meta["delta"] = cfg.delta;
  meta["delta_prime"] = cfg.delta_prime;
  if (method == "rpb") {
    meta["steps"] = cfg.steps;
    if (cfg.gamma_grid.empty()) {
      meta["gamma"] = cfg.gamma;
    } else {
      meta["gamma_grid"] = cfg.gamma_grid;
    }
  }
  // All randomness is replayable from the root seed through these named
  // streams (see random.hpp).
  meta["streams"] = {"threshold-data", "test-data", "stratified-subsample",
                     "init",           "trainer",   "order",
                     "noise",          "erm",       "erm-order",
                     "prior",          "posterior", "point",
                     "gibbs",          "test"};
  return meta;
}

nlohmann::json recursive_checkpoint(const RecursionConfig& rc,
                                    const RecursiveRun& run) {
  nlohmann::json j;
  j["kind"] = "recursive-chain";
  j["seed"] = rc.seed;
  j["delta"] = rc.delta;
  j["delta_prime"] = rc.delta_prime;
  j["mode"] = mode_name(rc.mode);
  j["steps"] = rc.steps;
  j["config_gammas"] = rc.gammas;
  j["gamma_grid"] = rc.gamma_grid;
  j["gammas"] = run.gammas;  // realized, one per step t = 2..T
  nlohmann::json dists = nlohmann::json::array();
  for (const auto& d : run.chain) dists.push_back(distribution_to_json(d));
  j["distributions"] = dists;
  return j;
}

nlohmann::json baseline_checkpoint(const std::string& method,
                                   const BaselineConfig& bc,
                                   const HypothesisDistribution& prior,
                                   const BaselineReport& rep) {
  nlohmann::json j;
  j["kind"] = "baseline-chain";
  j["method"] = method;
  j["seed"] = bc.seed;
  j["delta"] = bc.delta;
  j["delta_prime"] = bc.delta_prime;
  j["mode"] = mode_name(bc.mode);
  nlohmann::json dists = nlohmann::json::array();
  dists.push_back(distribution_to_json(
      rep.informed_prior ? *rep.informed_prior : prior));
  dists.push_back(distribution_to_json(*rep.posterior));
  j["distributions"] = dists;
  if (rep.reference) j["reference"] = hypothesis_to_json(*rep.reference);
  return j;
}

[[noreturn]] void revalidation_failed(const std::string& where) {
  throw std::runtime_error(
      "checkpoint re-validation failed (" + where +
      "): recomputation from serialized distributions disagrees");
}

// Parses the serialized checkpoint back and recomputes the whole trace from
// it; any deviation from the emitted rows is an error.
void revalidate_recursive(const nlohmann::json& j, const Dataset& data,
                          const Dataset* test, const BoundTrace& expected) {
  RecursionConfig rc;
  rc.seed = j.at("seed").get<std::uint64_t>();
  rc.delta = j.at("delta").get<double>();
  rc.delta_prime = j.at("delta_prime").get<double>();
  rc.mode = mode_from_name(j.at("mode").get<std::string>());
  rc.steps = j.at("steps").get<std::size_t>();
  rc.gammas = j.at("config_gammas").get<std::vector<double>>();
  rc.gamma_grid = j.at("gamma_grid").get<std::vector<double>>();
  const auto gammas = j.at("gammas").get<std::vector<double>>();
  std::vector<HypothesisDistribution> chain;
  for (const auto& e : j.at("distributions")) {
    chain.push_back(distribution_from_json(e));
  }
  const BoundTrace redo = evaluate_chain(chain, gammas, data, rc, test);
  if (redo.steps.size() != expected.steps.size()) {
    revalidation_failed("step count");
  }
  for (std::size_t i = 0; i < redo.steps.size(); ++i) {
    const StepRecord& a = expected.steps[i];
    const StepRecord& b = redo.steps[i];
    if (a.t != b.t || a.n_val != b.n_val || a.vacuous != b.vacuous ||
        !same_value(a.gamma, b.gamma) || !same_value(a.f_hat, b.f_hat) ||
        !same_value(a.kl, b.kl) ||
        !same_value(a.excess_bound, b.excess_bound) ||
        !same_value(a.bound, b.bound) || !same_value(a.test01, b.test01)) {
      revalidation_failed("step " + std::to_string(a.t));
    }
  }
}

void revalidate_baseline(const nlohmann::json& j, const Dataset& data,
                         const Dataset* test, const BaselineReport& expected) {
  BaselineConfig bc;
  bc.seed = j.at("seed").get<std::uint64_t>();
  bc.delta = j.at("delta").get<double>();
  bc.delta_prime = j.at("delta_prime").get<double>();
  bc.mode = mode_from_name(j.at("mode").get<std::string>());
  const std::string method = j.at("method").get<std::string>();
  const auto& dists = j.at("distributions");
  const HypothesisDistribution first = distribution_from_json(dists.at(0));
  const HypothesisDistribution post = distribution_from_json(dists.at(1));
  BaselineReport redo;
  if (method == "uninformed") {
    redo = evaluate_uninformed(first, post, data, bc, test);
  } else if (method == "informed") {
    redo = evaluate_informed(first, post, data, bc, test);
  } else {
    redo = evaluate_informed_excess(
        first, post, hypothesis_from_json(j.at("reference")), data, bc, test);
  }
  if (!same_value(redo.bound, expected.bound) ||
      !same_value(redo.kl, expected.kl) ||
      !same_value(redo.emp, expected.emp) ||
      !same_value(redo.train01, expected.train01) ||
      !same_value(redo.test01, expected.test01) ||
      !same_value(redo.excess_bound, expected.excess_bound) ||
      !same_value(redo.hstar_bound, expected.hstar_bound) ||
      !same_value(redo.excess_f_hat, expected.excess_f_hat) ||
      !same_value(redo.hstar_emp, expected.hstar_emp) ||
      redo.n_bound != expected.n_bound) {
    revalidation_failed(method);
  }
}

struct MethodResult {
  double train01;
  double test01;
  double bound;
};

struct RunArtifacts {
  MethodResult result;
  std::string csv;
  nlohmann::json detail;      // trace array (rpb) or report object
  nlohmann::json checkpoint;  // serialized chain, already re-validated
};

RunArtifacts run_one_method(const std::string& method,
                            const ExperimentConfig& cfg, std::uint64_t seed,
                            const ExperimentData& d) {
  const Dataset* test = d.test ? &*d.test : nullptr;
  const HypothesisDistribution prior = build_prior(cfg, d.train, seed);
  RunArtifacts art;
  if (method == "rpb") {
    const RecursionConfig rc = recursion_config(cfg, seed);
    const RecursiveRun run = run_recursive(prior, d.train, rc, test);
    art.checkpoint = recursive_checkpoint(rc, run);
    revalidate_recursive(nlohmann::json::parse(art.checkpoint.dump()),
                         d.train, test, run.trace);
    // Gibbs train error of the final posterior on all of S, same stream as
    // the baselines use, so the comparison table is like for like.
    const double train01 =
        empirical_gibbs_loss(run.posterior(), full_view(d.train), cfg.mode,
                             derive_seed(seed, "gibbs", 1))
            .mean;
    art.result = {train01, run.trace.steps.back().test01,
                  run.trace.final_bound()};
    art.csv = run.trace.to_csv();
    art.detail = run.trace.to_json();
    return art;
  }
  const BaselineConfig bc = baseline_config(cfg, seed);
  const BaselineReport rep = run_baseline(method, prior, d.train, bc, test);
  art.checkpoint = baseline_checkpoint(method, bc, prior, rep);
  revalidate_baseline(nlohmann::json::parse(art.checkpoint.dump()), d.train,
                      test, rep);
  art.result = {rep.train01, rep.test01, rep.bound};
  art.csv = rep.to_csv();
  art.detail = rep.to_json();
  return art;
}

double vec_mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double vec_std(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = vec_mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

CoverageReport dispatch_harness(const ValidateConfig& cfg) {
  std::vector<double> probs = cfg.probs;
  if (cfg.harness == "split-kl") {
    if (probs.empty()) {
      probs.assign(cfg.support.size(),
                   1.0 / static_cast<double>(cfg.support.size()));
    }
    return coverage_split_kl(cfg.support, probs, cfg.n, cfg.delta, cfg.trials,
                             cfg.seed, cfg.threads);
  }
  if (cfg.harness == "kl") {
    if (probs.empty()) {
      probs.assign(cfg.values.size(),
                   1.0 / static_cast<double>(cfg.values.size()));
    }
    return coverage_kl_bound(cfg.values, probs, cfg.n, cfg.delta, cfg.trials,
                             cfg.seed, cfg.threads);
  }
  const ThresholdTask task{cfg.theta_star, cfg.eta};
  if (cfg.harness == "pb-kl") {
    return coverage_pb_kl(task, cfg.grid_size, cfg.n, cfg.delta, cfg.trials,
                          cfg.seed, cfg.threads);
  }
  if (cfg.harness == "pb-split-kl") {
    return coverage_pb_split_kl(task, cfg.grid_size, cfg.gamma, cfg.n,
                                cfg.delta, cfg.trials, cfg.seed, cfg.threads);
  }
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.learning_rate = cfg.learning_rate;
  if (cfg.harness == "recursive") {
    return coverage_recursive(task, cfg.grid_size, cfg.n, cfg.steps,
                              cfg.delta, cfg.trials, cfg.seed, cfg.threads,
                              &tc);
  }
  return coverage_baseline(cfg.harness, task, cfg.grid_size, cfg.n, cfg.delta,
                           cfg.trials, cfg.seed, cfg.threads, &tc);
}

}  // namespace

int cmd_split(std::size_t n, std::size_t steps, std::ostream& out,
              std::ostream& err) {
  try {
    const std::vector<std::size_t> sizes = geometric_split(n, steps);
    std::string line;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (i > 0) line += ',';
      line += std::to_string(sizes[i]);
    }
    out << line << '\n';
    return kExitSuccess;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_run(const std::string& config_path, std::ostream& out,
            std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment_config(load_json_file(config_path));
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    std::optional<Dataset> idx_train;
    std::optional<Dataset> idx_test;
    if (cfg.dataset == "idx") {
      idx_train = load_idx(cfg.train_images, cfg.train_labels);
      if (!cfg.test_images.empty()) {
        idx_test = load_idx(cfg.test_images, cfg.test_labels);
      }
    }
    const ExperimentData data =
        build_data(cfg, cfg.seed, idx_train ? &*idx_train : nullptr,
                   idx_test ? &*idx_test : nullptr);

    const RunArtifacts art = run_one_method(cfg.method, cfg, cfg.seed, data);

    nlohmann::json doc;
    doc["meta"] = meta_json(cfg, cfg.method, cfg.seed);
    doc[cfg.method == "rpb" ? "trace" : "report"] = art.detail;

    out << art.csv;
    if (!cfg.output_csv.empty()) write_text_file(cfg.output_csv, art.csv);
    if (!cfg.output_json.empty()) {
      write_text_file(cfg.output_json, doc.dump(2) + "\n");
    }
    if (!cfg.checkpoint.empty()) {
      write_text_file(cfg.checkpoint, art.checkpoint.dump(2) + "\n");
    }
    return kExitSuccess;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_validate(const std::string& config_path, std::ostream& out,
                 std::ostream& err) {
  ValidateConfig cfg;
  try {
    cfg = parse_validate_config(load_json_file(config_path));
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    const CoverageReport rep = dispatch_harness(cfg);
    const std::string csv = rep.to_csv();
    out << csv;
    if (!cfg.output_csv.empty()) write_text_file(cfg.output_csv, csv);
    if (!cfg.output_json.empty()) {
      write_text_file(cfg.output_json, rep.to_json().dump(2) + "\n");
    }
    if (!rep.passed()) {
      err << "coverage " << rep.coverage << " below target "
          << rep.pass_threshold() << '\n';
      return kExitValidation;
    }
    return kExitSuccess;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_compare(const std::string& config_path, std::ostream& out,
                std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = parse_experiment_config(load_json_file(config_path),
                                  /*compare=*/true);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    const std::vector<std::string> methods = {"rpb", "uninformed", "informed",
                                              "informed-excess"};
    std::optional<Dataset> idx_train;
    std::optional<Dataset> idx_test;
    if (cfg.dataset == "idx") {
      idx_train = load_idx(cfg.train_images, cfg.train_labels);
      if (!cfg.test_images.empty()) {
        idx_test = load_idx(cfg.test_images, cfg.test_labels);
      }
    }

    std::vector<std::vector<MethodResult>> results(methods.size());
    for (const std::uint64_t seed : cfg.seeds) {
      const ExperimentData data =
          build_data(cfg, seed, idx_train ? &*idx_train : nullptr,
                     idx_test ? &*idx_test : nullptr);
      for (std::size_t m = 0; m < methods.size(); ++m) {
        results[m].push_back(run_one_method(methods[m], cfg, seed, data).result);
      }
    }

    const bool multi = cfg.seeds.size() > 1;
    std::string csv =
        multi
            ? "method,train01_mean,train01_std,test01_mean,test01_std,"
              "bound_mean,bound_std\n"
            : "method,train01,test01,bound\n";
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      std::vector<double> train01, test01, bound;
      for (const MethodResult& r : results[m]) {
        train01.push_back(r.train01);
        test01.push_back(r.test01);
        bound.push_back(r.bound);
      }
      csv += methods[m];
      if (multi) {
        for (const auto& v : {train01, test01, bound}) {
          csv += ',';
          append_cell(csv, vec_mean(v));
          csv += ',';
          append_cell(csv, vec_std(v));
        }
      } else {
        for (const auto& v : {train01, test01, bound}) {
          csv += ',';
          append_cell(csv, v[0]);
        }
      }
      csv += '\n';

      nlohmann::json row;
      row["method"] = methods[m];
      row["train01"] = train01;
      row["test01"] = test01;
      row["bound"] = bound;
      if (multi) {
        row["train01_mean"] = vec_mean(train01);
        row["train01_std"] = vec_std(train01);
        row["test01_mean"] = vec_mean(test01);
        row["test01_std"] = vec_std(test01);
        row["bound_mean"] = vec_mean(bound);
        row["bound_std"] = vec_std(bound);
      }
      rows.push_back(row);
    }

    out << csv;
    if (!cfg.output_csv.empty()) write_text_file(cfg.output_csv, csv);
    if (!cfg.output_json.empty()) {
      nlohmann::json doc;
      doc["meta"] = meta_json(cfg, "compare", cfg.seed);
      doc["meta"]["seeds"] = cfg.seeds;
      doc["rows"] = rows;
      write_text_file(cfg.output_json, doc.dump(2) + "\n");
    }
    return kExitSuccess;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace rpb