// Synthetic dataset fixtures in the standard on-disk formats. Two image
// families per dataset with overlapping intensity/symmetry statistics, so
// the downstream classification problem is non-trivial but learnable.
#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ipgd/linalg.hpp"

namespace ipgd {
namespace synth {

using Image = std::vector<double>;  // row-major, one channel

inline int ibetween(SeededRng& rng, int lo, int hi) {  // [lo, hi)
  return lo + static_cast<int>(rng.below(hi - lo));
}

/// Digit "one": tilted vertical bar, sometimes with a heavy base serif.
inline Image draw_one(SeededRng& rng) {
  Image img(28 * 28, 0.0);
  const int c = ibetween(rng, 9, 19);
  const int w = ibetween(rng, 2, 5);
  const double tilt = rng.uniform(-0.25, 0.25);
  const double inten = rng.uniform(80.0, 255.0);
  const int top = ibetween(rng, 3, 8);
  const int bot = ibetween(rng, 20, 26);
  for (int r = top; r < bot; ++r) {
    const int cc = std::clamp(static_cast<int>(c + tilt * (r - 14)), 0, 25);
    for (int k = 0; k < w; ++k)
      img[r * 28 + cc + k] = inten * rng.uniform(0.6, 1.0);
  }
  if (rng.uniform(0.0, 1.0) < 0.6) {  // base bar makes some ones look dense
    const int bw = ibetween(rng, 3, 9);
    const double v = inten * rng.uniform(0.6, 1.0);
    for (int r = bot - 2; r < bot; ++r)
      for (int cc = std::max(c - bw / 2, 0); cc < std::min(c + bw, 28); ++cc)
        img[r * 28 + cc] = v;
  }
  for (auto& p : img) p = std::clamp(p + rng.uniform(0.0, 25.0), 0.0, 255.0);
  return img;
}

/// Digit "five": three horizontal strokes joined by two verticals, with a
/// random fade so faint fives overlap the ones in feature space.
inline Image draw_five(SeededRng& rng) {
  Image img(28 * 28, 0.0);
  const double inten = rng.uniform(80.0, 255.0);
  const int l = ibetween(rng, 5, 11);
  const int r = ibetween(rng, 17, 24);
  const int t = ibetween(rng, 3, 7);
  const int mid = ibetween(rng, 11, 17);
  const int b = ibetween(rng, 20, 26);
  const int th = ibetween(rng, 1, 4);
  const double fade = rng.uniform(0.4, 1.0);
  auto fill = [&](int r0, int r1, int c0, int c1, double v) {
    for (int rr = r0; rr < std::min(r1, 28); ++rr)
      for (int cc = c0; cc < std::min(c1, 28); ++cc) img[rr * 28 + cc] = v;
  };
  fill(t, t + th, l, r, inten);
  fill(t, mid, l, l + th, inten * 0.9);
  fill(mid, mid + th, l, r, inten * 0.95);
  fill(mid, b, r - th, r, inten * 0.9);
  fill(b, b + th, l, r, inten * 0.85);
  for (auto& p : img) {
    p *= fade * rng.uniform(0.7, 1.0);
    p = std::clamp(p + rng.uniform(0.0, 25.0), 0.0, 255.0);
  }
  return img;
}

inline std::vector<std::uint8_t> quantize(const Image& img) {
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::clamp(img[i], 0.0, 255.0));
  return out;
}

namespace detail {

inline void gz_write_all(gzFile f, const std::uint8_t* p, std::size_t n) {
  if (gzwrite(f, p, static_cast<unsigned>(n)) != static_cast<int>(n))
    throw ConfigError("synth: gzip write failed");
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(v >> 24);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back(v & 0xff);
}

}  // namespace detail

inline void write_idx_images(const std::string& path,
                             const std::vector<std::vector<std::uint8_t>>& imgs,
                             int rows, int cols) {
  std::vector<std::uint8_t> head;
  detail::put_be32(head, 0x00000803u);
  detail::put_be32(head, static_cast<std::uint32_t>(imgs.size()));
  detail::put_be32(head, rows);
  detail::put_be32(head, cols);
  gzFile f = gzopen(path.c_str(), "wb");
  if (!f) throw ConfigError("synth: cannot write " + path);
  detail::gz_write_all(f, head.data(), head.size());
  for (const auto& img : imgs)
    detail::gz_write_all(f, img.data(), img.size());
  gzclose(f);
}

inline void write_idx_labels(const std::string& path,
                             const std::vector<int>& labels) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, 0x00000801u);
  detail::put_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) b.push_back(static_cast<std::uint8_t>(l));
  gzFile f = gzopen(path.c_str(), "wb");
  if (!f) throw ConfigError("synth: cannot write " + path);
  detail::gz_write_all(f, b.data(), b.size());
  gzclose(f);
}

/// Writes an MNIST-layout split (IDX gzip) of synthetic ones and fives,
/// interleaved then permuted.
inline void make_mnist_split(const std::string& dir, const std::string& split,
                             int n_each, SeededRng& rng) {
  std::vector<std::vector<std::uint8_t>> imgs;
  std::vector<int> labels;
  for (int i = 0; i < n_each; ++i) {
    imgs.push_back(quantize(draw_one(rng)));
    labels.push_back(1);
    imgs.push_back(quantize(draw_five(rng)));
    labels.push_back(5);
  }
  for (std::size_t i = 0; i + 1 < imgs.size(); ++i) {
    const auto j = i + rng.below(imgs.size() - i);
    std::swap(imgs[i], imgs[j]);
    std::swap(labels[i], labels[j]);
  }
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_idx_images((fs::path(dir) / (split + "-images-idx3-ubyte.gz")).string(),
                   imgs, 28, 28);
  write_idx_labels((fs::path(dir) / (split + "-labels-idx1-ubyte.gz")).string(),
                   labels);
}

inline void make_mnist_fixture(const std::string& dir, int n_train_each,
                               int n_test_each, std::uint64_t seed) {
  SeededRng train_rng(seed, 101);
  SeededRng test_rng(seed, 102);
  make_mnist_split(dir, "train", n_train_each, train_rng);
  make_mnist_split(dir, "t10k", n_test_each, test_rng);
}

/// "Airplane": bright sky gradient with a symmetric horizontal fuselage
/// band, blue-heavy.
inline std::vector<std::uint8_t> draw_plane(SeededRng& rng) {
  std::vector<double> img(3 * 32 * 32, 0.0);
  const double sky = rng.uniform(120.0, 220.0);
  const int band = ibetween(rng, 12, 20);
  const int bw = ibetween(rng, 2, 5);
  const double body = rng.uniform(140.0, 255.0);
  for (int ch = 0; ch < 3; ++ch) {
    const double tint = ch == 2 ? 1.0 : rng.uniform(0.55, 0.8);
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        img[(ch * 32 + r) * 32 + c] = sky * tint * (1.0 - 0.3 * r / 31.0);
  }
  for (int ch = 0; ch < 3; ++ch)
    for (int r = band; r < band + bw; ++r)
      for (int c = 4; c < 28; ++c)
        img[(ch * 32 + r) * 32 + c] = body * rng.uniform(0.85, 1.0);
  for (auto& p : img) p = std::clamp(p + rng.uniform(0.0, 20.0), 0.0, 255.0);
  return quantize(img);
}

/// "Automobile": dark ground, off-center red-heavy box with wheels, so the
/// horizontal-flip asymmetry separates it from the plane.
inline std::vector<std::uint8_t> draw_car(SeededRng& rng) {
  std::vector<double> img(3 * 32 * 32, 0.0);
  const double ground = rng.uniform(30.0, 90.0);
  const int left = ibetween(rng, 2, 12);
  const int width = ibetween(rng, 12, 18);
  const int top = ibetween(rng, 14, 20);
  const double body = rng.uniform(120.0, 255.0);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c)
        img[(ch * 32 + r) * 32 + c] = ground * rng.uniform(0.8, 1.0);
  for (int ch = 0; ch < 3; ++ch) {
    const double tint = ch == 0 ? 1.0 : rng.uniform(0.35, 0.7);
    for (int r = top; r < 28; ++r)
      for (int c = left; c < std::min(left + width, 32); ++c)
        img[(ch * 32 + r) * 32 + c] = body * tint * rng.uniform(0.85, 1.0);
  }
  for (auto& p : img) p = std::clamp(p + rng.uniform(0.0, 20.0), 0.0, 255.0);
  return quantize(img);
}

/// Writes CIFAR-layout binary batches of synthetic planes (label 0) and
/// cars (label 1).
inline void write_cifar_batch(const std::string& path,
                              const std::vector<std::vector<std::uint8_t>>& imgs,
                              const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("synth: cannot write " + path);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const char l = static_cast<char>(labels[i]);
    out.write(&l, 1);
    out.write(reinterpret_cast<const char*>(imgs[i].data()), 3072);
  }
}

inline void make_cifar_split(const std::string& path, int n_each,
                             SeededRng& rng) {
  std::vector<std::vector<std::uint8_t>> imgs;
  std::vector<int> labels;
  for (int i = 0; i < n_each; ++i) {
    imgs.push_back(draw_plane(rng));
    labels.push_back(0);
    imgs.push_back(draw_car(rng));
    labels.push_back(1);
  }
  for (std::size_t i = 0; i + 1 < imgs.size(); ++i) {
    const auto j = i + rng.below(imgs.size() - i);
    std::swap(imgs[i], imgs[j]);
    std::swap(labels[i], labels[j]);
  }
  write_cifar_batch(path, imgs, labels);
}

inline void make_cifar_fixture(const std::string& dir, int n_train_each,
                               int n_test_each, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  SeededRng train_rng(seed, 201);
  SeededRng test_rng(seed, 202);
  make_cifar_split((fs::path(dir) / "data_batch_1.bin").string(), n_train_each,
                   train_rng);
  make_cifar_split((fs::path(dir) / "test_batch.bin").string(), n_test_each,
                   test_rng);
}

}  // namespace synth
}  // namespace ipgd
