// Dataset ingestion and feature engineering for the logistic-regression
// experiments: IDX / CIFAR-10 binary loaders, intensity-symmetry features,
// standardized polynomial design matrices, agent partitioning, caching.
#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipgd/linalg.hpp"

namespace ipgd {

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RawImageSet {
  int rows = 0;
  int cols = 0;
  int channels = 1;
  std::vector<std::vector<std::uint8_t>> images;  // channel-major planes
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  std::size_t pixels_per_channel() const {
    return static_cast<std::size_t>(rows) * cols;
  }
};

namespace detail {

// Reads a whole file, transparently inflating gzip.
inline std::vector<std::uint8_t> read_maybe_gz(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IngestError("cannot open " + path);
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  const bool bad = n < 0;
  gzclose(f);
  if (bad) throw IngestError("decompression failed for " + path);
  return out;
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off,
                          const std::string& path) {
  if (off + 4 > b.size())
    throw IngestError(path + ": truncated at offset " + std::to_string(off));
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

}  // namespace detail

/// IDX image file (magic 0x00000803), optionally gzipped.
inline RawImageSet load_idx_images(const std::string& path) {
  const auto b = detail::read_maybe_gz(path);
  if (detail::be32(b, 0, path) != 0x00000803u)
    throw IngestError(path + ": bad image magic at offset 0");
  RawImageSet set;
  const std::uint32_t n = detail::be32(b, 4, path);
  set.rows = static_cast<int>(detail::be32(b, 8, path));
  set.cols = static_cast<int>(detail::be32(b, 12, path));
  const std::size_t px = set.pixels_per_channel();
  if (16 + std::size_t(n) * px != b.size())
    throw IngestError(path + ": truncated at offset " + std::to_string(b.size()));
  set.images.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto* p = b.data() + 16 + std::size_t(i) * px;
    set.images.emplace_back(p, p + px);
  }
  set.labels.assign(n, 0);
  return set;
}

/// IDX label file (magic 0x00000801), optionally gzipped.
inline std::vector<int> load_idx_labels(const std::string& path) {
  const auto b = detail::read_maybe_gz(path);
  if (detail::be32(b, 0, path) != 0x00000801u)
    throw IngestError(path + ": bad label magic at offset 0");
  const std::uint32_t n = detail::be32(b, 4, path);
  if (8 + std::size_t(n) != b.size())
    throw IngestError(path + ": truncated at offset " + std::to_string(b.size()));
  return std::vector<int>(b.begin() + 8, b.end());
}

/// MNIST-layout directory: <split>-images-idx3-ubyte.gz and matching
/// labels, where split is "train" or "t10k".
inline RawImageSet load_mnist(const std::string& dir, const std::string& split) {
  namespace fs = std::filesystem;
  auto pick = [&](const std::string& stem) {
    for (const char* ext : {".gz", ""}) {
      fs::path p = fs::path(dir) / (stem + ext);
      if (fs::exists(p)) return p.string();
    }
    throw IngestError("missing " + stem + " under " + dir);
  };
  RawImageSet set = load_idx_images(pick(split + "-images-idx3-ubyte"));
  std::vector<int> labels = load_idx_labels(pick(split + "-labels-idx1-ubyte"));
  if (labels.size() != set.size())
    throw IngestError(dir + ": image/label count mismatch");
  set.labels = std::move(labels);
  return set;
}

/// One CIFAR-10 binary batch: 10000 records of 1 label byte + 3072 pixel
/// bytes (channel-major 32x32 RGB).
inline RawImageSet load_cifar10(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path);
  std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
  constexpr std::size_t kRecord = 3073;
  if (b.empty() || b.size() % kRecord != 0)
    throw IngestError(path + ": truncated at offset " + std::to_string(b.size()));
  RawImageSet set;
  set.rows = 32;
  set.cols = 32;
  set.channels = 3;
  const std::size_t n = b.size() / kRecord;
  set.images.reserve(n);
  set.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = b.data() + i * kRecord;
    set.labels.push_back(p[0]);
    set.images.emplace_back(p + 1, p + kRecord);
  }
  return set;
}

/// Seeded two-class subsample, relabeled +1 (class_a) / -1 (class_b).
inline RawImageSet select_binary(const RawImageSet& raw, int class_a,
                                 int class_b, std::size_t n_target,
                                 SeededRng& rng) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw.labels[i] == class_a || raw.labels[i] == class_b)
      pool.push_back(i);
  if (pool.size() < n_target)
    throw IngestError("select_binary: only " + std::to_string(pool.size()) +
                      " instances of the two classes available");
  for (std::size_t i = 0; i + 1 < pool.size(); ++i) {
    const auto j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  RawImageSet out;
  out.rows = raw.rows;
  out.cols = raw.cols;
  out.channels = raw.channels;
  for (std::size_t i = 0; i < n_target; ++i) {
    out.images.push_back(raw.images[pool[i]]);
    out.labels.push_back(raw.labels[pool[i]] == class_a ? 1 : -1);
  }
  return out;
}

/// Average intensity and average symmetry of one single-channel plane,
/// pixels scaled to [0,1]. Symmetry is the negative mean absolute
/// difference against the horizontal flip (0 is maximal).
inline std::pair<double, double> intensity_symmetry(
    const std::uint8_t* plane, int rows, int cols) {
  double sum = 0.0, asym = 0.0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double v = plane[r * cols + c] / 255.0;
      const double w = plane[r * cols + (cols - 1 - c)] / 255.0;
      sum += v;
      asym += std::abs(v - w);
    }
  const double n = static_cast<double>(rows) * cols;
  return {sum / n, -asym / n};
}

struct ColumnStats {
  Vec mean;
  Vec std;
};

struct DesignMatrix {
  Mat a;
  Vec b;
  ColumnStats column_stats;  // non-intercept columns only
};

namespace detail {

// Standardizes every column of `raw` in place (training stats computed
// here, or reused stats passed in), then appends the intercept column.
inline DesignMatrix standardize_and_finish(Mat raw, Vec labels,
                                           const ColumnStats* reuse) {
  const Eigen::Index n = raw.rows(), p = raw.cols();
  ColumnStats stats;
  if (reuse) {
    stats = *reuse;
    if (stats.mean.size() != p)
      throw ConfigError("design: reused column_stats width mismatch");
  } else {
    stats.mean = raw.colwise().mean();
    stats.std = Vec(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double var =
          (raw.col(j).array() - stats.mean[j]).square().sum() / n;
      stats.std[j] = std::sqrt(var);
      if (stats.std[j] == 0.0)
        throw ConfigError("design: zero-variance column " + std::to_string(j));
    }
  }
  DesignMatrix d;
  d.a = Mat(n, p + 1);
  for (Eigen::Index j = 0; j < p; ++j)
    d.a.col(j) = (raw.col(j).array() - stats.mean[j]) / stats.std[j];
  d.a.col(p).setOnes();
  d.b = std::move(labels);
  d.column_stats = std::move(stats);
  return d;
}

}  // namespace detail

/// [a1 a2 a1^2 a1*a2 a2^2], standardized, plus intercept: width 6.
/// Pass training-set stats when featurizing a test split.
inline DesignMatrix build_design_mnist(const RawImageSet& sel,
                                       const ColumnStats* stats = nullptr) {
  if (sel.channels != 1)
    throw ConfigError("build_design_mnist: expects single-channel images");
  const Eigen::Index n = static_cast<Eigen::Index>(sel.size());
  Mat raw(n, 5);
  Vec labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [a1, a2] =
        intensity_symmetry(sel.images[i].data(), sel.rows, sel.cols);
    raw(i, 0) = a1;
    raw(i, 1) = a2;
    raw(i, 2) = a1 * a1;
    raw(i, 3) = a1 * a2;
    raw(i, 4) = a2 * a2;
    labels[i] = sel.labels[i];
  }
  return detail::standardize_and_finish(std::move(raw), std::move(labels),
                                        stats);
}

/// Per-channel intensity and symmetry (6 features) plus their squares,
/// standardized, plus intercept: width 13.
inline DesignMatrix build_design_cifar(const RawImageSet& sel,
                                       const ColumnStats* stats = nullptr) {
  if (sel.channels != 3)
    throw ConfigError("build_design_cifar: expects three-channel images");
  const Eigen::Index n = static_cast<Eigen::Index>(sel.size());
  const std::size_t px = sel.pixels_per_channel();
  Mat raw(n, 12);
  Vec labels(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      const auto [a, s] = intensity_symmetry(
          sel.images[i].data() + ch * px, sel.rows, sel.cols);
      raw(i, 2 * ch) = a;
      raw(i, 2 * ch + 1) = s;
    }
    for (int j = 0; j < 6; ++j) raw(i, 6 + j) = raw(i, j) * raw(i, j);
    labels[i] = sel.labels[i];
  }
  return detail::standardize_and_finish(std::move(raw), std::move(labels),
                                        stats);
}

/// m contiguous row blocks of n/m rows each, in stored order.
inline std::vector<std::pair<Mat, Vec>> partition(const DesignMatrix& d,
                                                  int m) {
  if (m <= 0 || d.a.rows() % m != 0)
    throw ConfigError("partition: m must divide the row count");
  const Eigen::Index rows = d.a.rows() / m;
  std::vector<std::pair<Mat, Vec>> blocks;
  blocks.reserve(m);
  for (int i = 0; i < m; ++i)
    blocks.emplace_back(d.a.middleRows(i * rows, rows),
                        d.b.segment(i * rows, rows));
  return blocks;
}

inline constexpr int kCacheVersion = 1;

/// Little-endian flat binary (row-major doubles: A then b) with a JSON
/// sidecar carrying shape, column stats, seed and pipeline version.
inline void write_design_cache(const DesignMatrix& d, const std::string& stem,
                               std::uint64_t seed) {
  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw IngestError("cannot write " + stem + ".bin");
  for (Eigen::Index i = 0; i < d.a.rows(); ++i)
    for (Eigen::Index j = 0; j < d.a.cols(); ++j) {
      const double v = d.a(i, j);
      bin.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  for (Eigen::Index i = 0; i < d.b.size(); ++i) {
    const double v = d.b[i];
    bin.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  nlohmann::json side;
  side["version"] = kCacheVersion;
  side["rows"] = d.a.rows();
  side["cols"] = d.a.cols();
  side["seed"] = seed;
  side["column_mean"] = std::vector<double>(
      d.column_stats.mean.data(),
      d.column_stats.mean.data() + d.column_stats.mean.size());
  side["column_std"] = std::vector<double>(
      d.column_stats.std.data(),
      d.column_stats.std.data() + d.column_stats.std.size());
  std::ofstream js(stem + ".json");
  js << side.dump(2) << "\n";
}

inline DesignMatrix read_design_cache(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw IngestError("cannot read " + stem + ".json");
  nlohmann::json side = nlohmann::json::parse(js);
  if (side.at("version").get<int>() != kCacheVersion)
    throw IngestError(stem + ": unsupported cache version");
  const Eigen::Index rows = side.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = side.at("cols").get<Eigen::Index>();
  DesignMatrix d;
  d.a = Mat(rows, cols);
  d.b = Vec(rows);
  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw IngestError("cannot read " + stem + ".bin");
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      bin.read(reinterpret_cast<char*>(&d.a(i, j)), sizeof(double));
  for (Eigen::Index i = 0; i < rows; ++i)
    bin.read(reinterpret_cast<char*>(&d.b[i]), sizeof(double));
  if (!bin) throw IngestError(stem + ".bin: truncated");
  const auto mean = side.at("column_mean").get<std::vector<double>>();
  const auto std_ = side.at("column_std").get<std::vector<double>>();
  d.column_stats.mean = Eigen::Map<const Vec>(mean.data(), mean.size());
  d.column_stats.std = Eigen::Map<const Vec>(std_.data(), std_.size());
  return d;
}

}  // namespace ipgd
