#include "rpb/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "rpb/random.hpp"

namespace rpb {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

// Reads a whole file, transparently inflating gzip content (gzread passes
// uncompressed files through unchanged).
std::vector<unsigned char> read_file(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) {
    throw IdxError("cannot open " + path);
  }
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int got;
  while ((got = gzread(f, buf, sizeof(buf))) > 0) {
    out.insert(out.end(), buf, buf + got);
  }
  const bool ok = (got == 0);
  gzclose(f);
  if (!ok) {
    throw IdxTruncatedError("corrupt or truncated stream in " + path);
  }
  return out;
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_be32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  std::fwrite(b, 1, 4, f);
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  const auto img = read_file(images_path);
  if (img.size() < 16) {
    throw IdxTruncatedError("image file too short for its header: " +
                            images_path);
  }
  if (read_be32(img, 0) != kImageMagic) {
    throw IdxMagicError("bad image magic in " + images_path + " (want 2051, got " +
                        std::to_string(read_be32(img, 0)) + ")");
  }
  const std::uint32_t n = read_be32(img, 4);
  const std::uint32_t rows = read_be32(img, 8);
  const std::uint32_t cols = read_be32(img, 12);
  const std::size_t want = 16 + std::size_t(n) * rows * cols;
  if (img.size() < want) {
    throw IdxTruncatedError("image payload short in " + images_path);
  }
  if (img.size() > want) {
    throw IdxTruncatedError("unexpected trailing bytes in " + images_path);
  }

  const auto lab = read_file(labels_path);
  if (lab.size() < 8) {
    throw IdxTruncatedError("label file too short for its header: " +
                            labels_path);
  }
  if (read_be32(lab, 0) != kLabelMagic) {
    throw IdxMagicError("bad label magic in " + labels_path + " (want 2049, got " +
                        std::to_string(read_be32(lab, 0)) + ")");
  }
  const std::uint32_t nl = read_be32(lab, 4);
  if (lab.size() < 8 + std::size_t(nl)) {
    throw IdxTruncatedError("label payload short in " + labels_path);
  }
  if (lab.size() > 8 + std::size_t(nl)) {
    throw IdxTruncatedError("unexpected trailing bytes in " + labels_path);
  }
  if (nl != n) {
    throw IdxCountMismatchError("image/label count mismatch: " +
                                std::to_string(n) + " images vs " +
                                std::to_string(nl) + " labels");
  }

  Dataset d;
  d.n = n;
  d.dim = std::size_t(rows) * cols;
  d.features.resize(d.n * d.dim);
  for (std::size_t i = 0; i < d.n * d.dim; ++i) {
    d.features[i] = static_cast<float>(img[16 + i]) / 255.0f;
  }
  d.labels.resize(d.n);
  int max_label = 0;
  for (std::size_t i = 0; i < d.n; ++i) {
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = max_label + 1;
  d.source = images_path;
  return d;
}

void write_idx_images(const std::string& path, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols,
                      const std::vector<unsigned char>& pixels) {
  if (pixels.size() != std::size_t(count) * rows * cols) {
    throw std::invalid_argument("pixel buffer does not match count*rows*cols");
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw std::runtime_error("cannot write " + path);
  write_be32(f, kImageMagic);
  write_be32(f, count);
  write_be32(f, rows);
  write_be32(f, cols);
  std::fwrite(pixels.data(), 1, pixels.size(), f);
  std::fclose(f);
}

void write_idx_labels(const std::string& path,
                      const std::vector<unsigned char>& labels) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw std::runtime_error("cannot write " + path);
  write_be32(f, kLabelMagic);
  write_be32(f, static_cast<std::uint32_t>(labels.size()));
  std::fwrite(labels.data(), 1, labels.size(), f);
  std::fclose(f);
}

Dataset gen_threshold_data(const ThresholdTask& task, std::size_t n,
                           std::uint64_t seed) {
  if (!(task.theta_star >= 0.0 && task.theta_star <= 1.0)) {
    throw std::invalid_argument("theta_star must lie in [0,1]");
  }
  if (!(task.eta >= 0.0 && task.eta < 0.5)) {
    throw std::invalid_argument("eta must lie in [0, 1/2)");
  }
  Dataset d;
  d.n = n;
  d.dim = 1;
  d.classes = 2;
  d.features.resize(n);
  d.labels.resize(n);
  d.source = "synthetic-threshold";
  auto eng = make_engine(seed, "threshold-data");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(eng);
    int y = x >= task.theta_star ? 1 : 0;
    if (u(eng) < task.eta) y = 1 - y;
    d.features[i] = static_cast<float>(x);
    d.labels[i] = y;
  }
  return d;
}

double true_risk_threshold(double theta, const ThresholdTask& task) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw std::invalid_argument("theta must lie in [0,1]");
  }
  return task.eta + (1.0 - 2.0 * task.eta) * std::abs(theta - task.theta_star);
}

Dataset stratified_subsample(const Dataset& d, std::size_t size,
                             std::uint64_t seed) {
  if (size == 0 || size > d.n) {
    throw std::invalid_argument("subsample size must lie in [1, n]");
  }
  std::vector<std::vector<std::size_t>> by_class(d.classes);
  for (std::size_t i = 0; i < d.n; ++i) {
    by_class[d.labels[i]].push_back(i);
  }
  // Largest-remainder apportionment of `size` across classes.
  std::vector<std::size_t> take(by_class.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = static_cast<double>(size) * by_class[c].size() /
                         static_cast<double>(d.n);
    take[c] = static_cast<std::size_t>(exact);
    assigned += take[c];
    remainders.push_back({exact - static_cast<double>(take[c]), c});
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (std::size_t k = 0; assigned < size; ++k) {
    const std::size_t c = remainders[k % remainders.size()].second;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(size);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto eng = make_engine(seed, "stratified-subsample", c);
    std::shuffle(by_class[c].begin(), by_class[c].end(), eng);
    chosen.insert(chosen.end(), by_class[c].begin(),
                  by_class[c].begin() + take[c]);
  }
  std::sort(chosen.begin(), chosen.end());  // keep original order

  Dataset out;
  out.n = size;
  out.dim = d.dim;
  out.classes = d.classes;
  out.source = d.source + ":subsample";
  out.features.resize(size * d.dim);
  out.labels.resize(size);
  for (std::size_t k = 0; k < size; ++k) {
    const std::size_t i = chosen[k];
    std::copy_n(d.features.data() + i * d.dim, d.dim,
                out.features.data() + k * d.dim);
    out.labels[k] = d.labels[i];
  }
  return out;
}

}  // namespace rpb
