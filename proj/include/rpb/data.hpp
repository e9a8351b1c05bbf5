#pragma once
// Dataset container and sources: the IDX binary format (big-endian magics
// 2051 for images / 2049 for labels, optionally gzip-compressed), a synthetic
// one-dimensional threshold task with label noise, and deterministic
// stratified subsampling.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpb {

struct Dataset {
  std::size_t n = 0;
  std::size_t dim = 0;
  int classes = 0;
  std::vector<float> features;  // n * dim, row-major, scaled to [0,1]
  std::vector<int> labels;      // values in [0, classes)
  std::string source;

  std::span<const float> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
};

// Contiguous index range [begin, end) into a dataset. Indices are global so
// overlapping views agree on per-point identities.
struct DataView {
  const Dataset* data = nullptr;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

inline DataView full_view(const Dataset& d) { return {&d, 0, d.n}; }

// IDX failure modes are distinct types so callers can tell a malformed magic,
// a short or oversized payload, and an image/label count mismatch apart.
struct IdxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IdxMagicError : IdxError {
  using IdxError::IdxError;
};
struct IdxTruncatedError : IdxError {
  using IdxError::IdxError;
};
struct IdxCountMismatchError : IdxError {
  using IdxError::IdxError;
};

// Loads an image/label pair. Files may be raw IDX or gzip-compressed IDX
// (detected by content, not extension). Pixels are scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Exact inverses of the loader's byte layout, used to build fixtures.
void write_idx_images(const std::string& path, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols,
                      const std::vector<unsigned char>& pixels);
void write_idx_labels(const std::string& path,
                      const std::vector<unsigned char>& labels);

// X ~ U[0,1]; clean label 1[x >= theta_star]; label flipped with prob eta.
struct ThresholdTask {
  double theta_star = 0.5;
  double eta = 0.0;  // in [0, 1/2)
};

Dataset gen_threshold_data(const ThresholdTask& task, std::size_t n,
                           std::uint64_t seed);

// Risk of the rule 1[x >= theta] on the task: eta + (1-2 eta)|theta - theta*|.
double true_risk_threshold(double theta, const ThresholdTask& task);

// Deterministic subsample of `size` points with per-class proportions
// preserved by largest-remainder apportionment; original order retained.
Dataset stratified_subsample(const Dataset& d, std::size_t size,
                             std::uint64_t seed);

}  // namespace rpb
