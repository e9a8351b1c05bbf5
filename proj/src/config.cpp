#include "rpb/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace rpb {

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

double get_double(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) bad_key(key, "expected a number");
  return v.get<double>();
}

std::uint64_t get_uint(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
    bad_key(key, "expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) bad_key(key, "expected a string");
  return v.get<std::string>();
}

std::vector<double> get_double_vec(const nlohmann::json& v,
                                   const std::string& key) {
  if (!v.is_array()) bad_key(key, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(get_double(e, key));
  return out;
}

std::vector<std::uint64_t> get_uint_vec(const nlohmann::json& v,
                                        const std::string& key) {
  if (!v.is_array()) bad_key(key, "expected an array of integers");
  std::vector<std::uint64_t> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(get_uint(e, key));
  return out;
}

std::vector<std::size_t> get_size_vec(const nlohmann::json& v,
                                      const std::string& key) {
  std::vector<std::size_t> out;
  for (std::uint64_t e : get_uint_vec(v, key)) {
    out.push_back(static_cast<std::size_t>(e));
  }
  return out;
}

void require_unit_interval(double v, const std::string& key) {
  if (!(v > 0.0 && v < 1.0)) bad_key(key, "must lie strictly in (0,1)");
}

void require_object(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
}

}  // namespace

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         bool compare) {
  require_object(j);
  ExperimentConfig cfg;
  std::set<std::string> seen;
  bool mode_given = false;

  for (const auto& [key, value] : j.items()) {
    seen.insert(key);
    if (key == "method") {
      cfg.method = get_string(value, key);
    } else if (key == "dataset") {
      cfg.dataset = get_string(value, key);
    } else if (key == "n") {
      cfg.n = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "theta_star") {
      cfg.theta_star = get_double(value, key);
    } else if (key == "eta") {
      cfg.eta = get_double(value, key);
    } else if (key == "test_n") {
      cfg.test_n = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "train_images") {
      cfg.train_images = get_string(value, key);
    } else if (key == "train_labels") {
      cfg.train_labels = get_string(value, key);
    } else if (key == "test_images") {
      cfg.test_images = get_string(value, key);
    } else if (key == "test_labels") {
      cfg.test_labels = get_string(value, key);
    } else if (key == "subsample") {
      cfg.subsample = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "model") {
      cfg.model = get_string(value, key);
    } else if (key == "grid_size") {
      cfg.grid_size = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "hidden") {
      cfg.hidden = get_size_vec(value, key);
    } else if (key == "sigma0") {
      cfg.sigma0 = get_double(value, key);
    } else if (key == "mode") {
      const std::string mode = get_string(value, key);
      if (mode == "exact") {
        cfg.mode = EstimationMode::exact;
      } else if (mode == "sampled") {
        cfg.mode = EstimationMode::sampled;
      } else {
        bad_key(key, "expected \"exact\" or \"sampled\"");
      }
      mode_given = true;
    } else if (key == "steps") {
      cfg.steps = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "gamma") {
      cfg.gamma = get_double(value, key);
    } else if (key == "gamma_grid") {
      cfg.gamma_grid = get_double_vec(value, key);
    } else if (key == "delta") {
      cfg.delta = get_double(value, key);
    } else if (key == "delta_prime") {
      cfg.delta_prime = get_double(value, key);
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = get_double(value, key);
    } else if (key == "momentum") {
      cfg.train.momentum = get_double(value, key);
    } else if (key == "batch_size") {
      cfg.train.batch_size = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "epochs") {
      cfg.train.epochs = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "c1") {
      cfg.train.surrogate.c1 = get_double(value, key);
    } else if (key == "c2") {
      cfg.train.surrogate.c2 = get_double(value, key);
    } else if (key == "p_min") {
      cfg.train.surrogate.p_min = get_double(value, key);
    } else if (key == "seed") {
      cfg.seed = get_uint(value, key);
    } else if (key == "seeds") {
      cfg.seeds = get_uint_vec(value, key);
    } else if (key == "output_csv") {
      cfg.output_csv = get_string(value, key);
    } else if (key == "output_json") {
      cfg.output_json = get_string(value, key);
    } else if (key == "checkpoint") {
      cfg.checkpoint = get_string(value, key);
    } else {
      throw ConfigError("unknown config key: '" + key + "'");
    }
  }

  // Schema shape per command.
  if (compare) {
    if (seen.count("method")) {
      throw ConfigError(
          "'method' is fixed by compare (all methods run); remove it");
    }
    if (seen.count("checkpoint")) {
      throw ConfigError("'checkpoint' applies to run only");
    }
    if (cfg.seeds.empty()) cfg.seeds = {cfg.seed};
  } else {
    if (seen.count("seeds")) {
      throw ConfigError("'seeds' applies to compare only; use 'seed'");
    }
    if (cfg.method != "rpb" && cfg.method != "uninformed" &&
        cfg.method != "informed" && cfg.method != "informed-excess") {
      bad_key("method",
              "expected \"rpb\", \"uninformed\", \"informed\", or "
              "\"informed-excess\"");
    }
  }

  // Dataset spec.
  if (cfg.dataset == "synthetic") {
    for (const char* k :
         {"train_images", "train_labels", "test_images", "test_labels"}) {
      if (seen.count(k)) {
        throw ConfigError(std::string("'") + k +
                          "' requires dataset \"idx\"");
      }
    }
    if (cfg.n == 0) bad_key("n", "must be positive");
  } else if (cfg.dataset == "idx") {
    for (const char* k : {"n", "theta_star", "eta", "test_n"}) {
      if (seen.count(k)) {
        throw ConfigError(std::string("'") + k +
                          "' applies to synthetic data only");
      }
    }
    if (cfg.train_images.empty() || cfg.train_labels.empty()) {
      throw ConfigError(
          "dataset \"idx\" requires 'train_images' and 'train_labels'");
    }
    if (cfg.test_images.empty() != cfg.test_labels.empty()) {
      throw ConfigError(
          "'test_images' and 'test_labels' must be given together");
    }
  } else {
    bad_key("dataset", "expected \"synthetic\" or \"idx\"");
  }

  // Model spec.
  if (cfg.model == "finite") {
    for (const char* k : {"hidden", "sigma0"}) {
      if (seen.count(k)) {
        throw ConfigError(std::string("'") + k +
                          "' requires model \"network\"");
      }
    }
    if (cfg.dataset != "synthetic") {
      throw ConfigError(
          "model \"finite\" (threshold rules) requires dataset "
          "\"synthetic\"");
    }
    if (cfg.grid_size == 0) bad_key("grid_size", "must be positive");
  } else if (cfg.model == "network") {
    if (seen.count("grid_size")) {
      throw ConfigError("'grid_size' requires model \"finite\"");
    }
    for (std::size_t width : cfg.hidden) {
      if (width == 0) bad_key("hidden", "layer widths must be positive");
    }
    if (!(cfg.sigma0 > 0.0)) bad_key("sigma0", "must be positive");
  } else {
    bad_key("model", "expected \"finite\" or \"network\"");
  }

  if (!mode_given) {
    cfg.mode = cfg.model == "finite" ? EstimationMode::exact
                                     : EstimationMode::sampled;
  }
  if (cfg.mode == EstimationMode::exact && cfg.model != "finite") {
    throw ConfigError("mode \"exact\" requires model \"finite\"");
  }

  // Recursion and budget.
  if (cfg.steps == 0) bad_key("steps", "must be at least 1");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) {
    bad_key("gamma", "must lie in (0,1]");
  }
  if (cfg.steps >= 2 && !(cfg.gamma < 1.0) && cfg.gamma_grid.empty()) {
    bad_key("gamma", "must lie strictly in (0,1) when steps >= 2");
  }
  for (double g : cfg.gamma_grid) {
    if (!(g > 0.0 && g < 1.0)) {
      bad_key("gamma_grid", "entries must lie strictly in (0,1)");
    }
  }
  require_unit_interval(cfg.delta, "delta");
  require_unit_interval(cfg.delta_prime, "delta_prime");

  // Trainer.
  if (!(cfg.train.learning_rate > 0.0)) {
    bad_key("learning_rate", "must be positive");
  }
  if (!(cfg.train.momentum >= 0.0 && cfg.train.momentum < 1.0)) {
    bad_key("momentum", "must lie in [0,1)");
  }
  if (cfg.train.batch_size == 0) bad_key("batch_size", "must be positive");
  if (!(cfg.train.surrogate.c1 > 0.0)) bad_key("c1", "must be positive");
  if (!(cfg.train.surrogate.c2 > 0.0)) bad_key("c2", "must be positive");
  require_unit_interval(cfg.train.surrogate.p_min, "p_min");

  if (compare && cfg.seeds.empty()) bad_key("seeds", "must not be empty");

  return cfg;
}

ValidateConfig parse_validate_config(const nlohmann::json& j) {
  require_object(j);
  ValidateConfig cfg;

  for (const auto& [key, value] : j.items()) {
    if (key == "harness") {
      cfg.harness = get_string(value, key);
    } else if (key == "trials") {
      cfg.trials = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "n") {
      cfg.n = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "delta") {
      cfg.delta = get_double(value, key);
    } else if (key == "seed") {
      cfg.seed = get_uint(value, key);
    } else if (key == "threads") {
      cfg.threads = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "support") {
      cfg.support = get_double_vec(value, key);
    } else if (key == "values") {
      cfg.values = get_double_vec(value, key);
    } else if (key == "probs") {
      cfg.probs = get_double_vec(value, key);
    } else if (key == "gamma") {
      cfg.gamma = get_double(value, key);
    } else if (key == "steps") {
      cfg.steps = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "grid_size") {
      cfg.grid_size = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "theta_star") {
      cfg.theta_star = get_double(value, key);
    } else if (key == "eta") {
      cfg.eta = get_double(value, key);
    } else if (key == "epochs") {
      cfg.epochs = static_cast<std::size_t>(get_uint(value, key));
    } else if (key == "learning_rate") {
      cfg.learning_rate = get_double(value, key);
    } else if (key == "output_csv") {
      cfg.output_csv = get_string(value, key);
    } else if (key == "output_json") {
      cfg.output_json = get_string(value, key);
    } else {
      throw ConfigError("unknown config key: '" + key + "'");
    }
  }

  static const std::set<std::string> kHarnesses = {
      "split-kl", "kl",        "pb-kl",    "pb-split-kl",
      "recursive", "uninformed", "informed", "informed-excess"};
  if (cfg.harness.empty()) throw ConfigError("'harness' is required");
  if (!kHarnesses.count(cfg.harness)) {
    std::ostringstream msg;
    msg << "unknown harness '" << cfg.harness << "'; expected one of";
    for (const auto& h : kHarnesses) msg << " \"" << h << "\"";
    throw ConfigError(msg.str());
  }

  if (cfg.trials == 0) bad_key("trials", "must be at least 1");
  if (cfg.n == 0) bad_key("n", "must be at least 1");
  require_unit_interval(cfg.delta, "delta");
  if (cfg.support.size() < 2) {
    bad_key("support", "needs at least two points");
  }
  if (cfg.values.empty()) bad_key("values", "must not be empty");
  if (!cfg.probs.empty()) {
    const std::size_t outcomes = cfg.harness == "split-kl"
                                     ? cfg.support.size()
                                     : cfg.values.size();
    if ((cfg.harness == "split-kl" || cfg.harness == "kl") &&
        cfg.probs.size() != outcomes) {
      bad_key("probs", "needs one entry per outcome");
    }
  }
  require_unit_interval(cfg.gamma, "gamma");
  if (cfg.steps == 0) bad_key("steps", "must be at least 1");
  if (cfg.grid_size == 0) bad_key("grid_size", "must be positive");
  if (!(cfg.eta >= 0.0 && cfg.eta < 0.5)) {
    bad_key("eta", "label noise must lie in [0, 0.5)");
  }
  if (!(cfg.learning_rate > 0.0)) {
    bad_key("learning_rate", "must be positive");
  }
  return cfg;
}

}  // namespace rpb