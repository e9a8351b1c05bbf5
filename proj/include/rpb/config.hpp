#pragma once
// Strict flat-JSON experiment configuration. One document, documented keys,
// unknown keys and contradictory combinations are errors (fail-fast beats a
// silently ignored typo). Parsing never touches data or trains anything.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpb/hypotheses.hpp"

namespace rpb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Keys and defaults for `run` and `compare`:
//   method        "rpb" | "uninformed" | "informed" | "informed-excess"
//                 (required for run, disallowed for compare)
//   dataset       "synthetic" (default) | "idx"
//   n, theta_star, eta, test_n    synthetic task spec (n=1000, 0.5, 0.0, 0)
//   train_images, train_labels,
//   test_images, test_labels      IDX paths (dataset "idx" only)
//   subsample     stratified subsample size, 0 = use all (default 0)
//   model         "finite" (default) | "network"
//   grid_size     finite model: number of threshold rules (default 101)
//   hidden        network model: hidden layer widths (default [100])
//   sigma0        network model: initial posterior scale (default 0.03)
//   mode          "exact" | "sampled" (default: exact for finite,
//                 sampled for network; exact requires the finite model)
//   steps         recursion steps T (default 4)
//   gamma         fixed interpolation coefficient (default 0.5)
//   gamma_grid    per-step grid of candidate coefficients (default: fixed)
//   delta, delta_prime            confidence budget (0.025, 0.01)
//   learning_rate, momentum, batch_size, epochs, c1, c2, p_min
//                 trainer settings (0.005, 0.95, 250, 200, 5, 5, 1e-5)
//   seed          root seed, all streams derive from it (default 1)
//   seeds         compare only: one run per seed (default [seed])
//   output_csv, output_json, checkpoint   output paths (default: stdout
//                 only; checkpoint applies to run)
struct ExperimentConfig {
  std::string method = "rpb";
  std::string dataset = "synthetic";
  std::size_t n = 1000;
  double theta_star = 0.5;
  double eta = 0.0;
  std::size_t test_n = 0;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t subsample = 0;
  std::string model = "finite";
  std::size_t grid_size = 101;
  std::vector<std::size_t> hidden = {100};
  double sigma0 = 0.03;
  EstimationMode mode = EstimationMode::exact;
  std::size_t steps = 4;
  double gamma = 0.5;
  std::vector<double> gamma_grid;
  double delta = 0.025;
  double delta_prime = 0.01;
  TrainConfig train;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;
  std::string output_csv;
  std::string output_json;
  std::string checkpoint;
};

// Keys and defaults for `validate`:
//   harness       "split-kl" | "kl" | "pb-kl" | "pb-split-kl" | "recursive"
//                 | "uninformed" | "informed" | "informed-excess" (required)
//   trials        Monte Carlo repetitions (default 1000)
//   n             sample size per trial (default 1000)
//   delta         stated confidence level (default 0.05)
//   seed, threads (default 1, 0 = hardware)
//   support       split-kl outcome points (default [-0.5, 0, 0.5, 1])
//   values        kl harness outcome values in [0,1] (default [0, 1])
//   probs         outcome probabilities (default: uniform)
//   gamma         pb-split-kl coefficient (default 0.5)
//   steps         recursive harness T (default 4)
//   grid_size, theta_star, eta   threshold task (101, 0.5, 0.1)
//   epochs, learning_rate        trainer overrides (200, 1.0; the softmax
//                                parameters of the finite backend take far
//                                larger steps than network weights)
//   output_csv, output_json      report paths
struct ValidateConfig {
  std::string harness;
  std::size_t trials = 1000;
  std::size_t n = 1000;
  double delta = 0.05;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  std::vector<double> support = {-0.5, 0.0, 0.5, 1.0};
  std::vector<double> values = {0.0, 1.0};
  std::vector<double> probs;
  double gamma = 0.5;
  std::size_t steps = 4;
  std::size_t grid_size = 101;
  double theta_star = 0.5;
  double eta = 0.1;
  std::size_t epochs = 200;
  double learning_rate = 1.0;
  std::string output_csv;
  std::string output_json;
};

// Reads and parses a JSON document; I/O and syntax problems surface as
// ConfigError.
nlohmann::json load_json_file(const std::string& path);

// `compare` toggles the compare-specific schema (seeds allowed, method and
// checkpoint disallowed).
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         bool compare = false);

ValidateConfig parse_validate_config(const nlohmann::json& j);

}  // namespace rpb