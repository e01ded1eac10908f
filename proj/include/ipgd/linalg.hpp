// Dense vector/matrix aliases, seeded randomness, and spectral estimation
// shared by every other component.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>

namespace ipgd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic RNG keyed by (seed, stream_id). One stream per logical
/// actor (agent or server); identical keys reproduce identical draws.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_(stream_id), engine_(mix(seed, stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  double normal(double mean, double std) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return mean + std * dist(engine_);
  }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(engine_);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
    return dist(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

  /// Derives an independent child stream, e.g. per agent or per sweep cell.
  SeededRng child(std::uint64_t sub_stream) const {
    return SeededRng(mix(seed_, stream_), sub_stream);
  }

 private:
  // splitmix64 of the concatenated key; decorrelates nearby seeds.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

inline Vec draw_normal(SeededRng& rng, double mean, double std, Eigen::Index n) {
  if (std < 0) throw ConfigError("draw_normal: std must be >= 0");
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal(mean, std);
  return v;
}

inline Vec draw_uniform(SeededRng& rng, double lo, double hi, Eigen::Index n) {
  if (lo > hi) throw ConfigError("draw_uniform: lo must be <= hi");
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

inline Vec mat_vec(const Mat& m, const Vec& v) {
  if (m.cols() != v.size())
    throw ConfigError("mat_vec: dimension mismatch");
  return m * v;
}

struct SpectralEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Largest eigenvalue of a symmetric PSD operator given only through
/// matrix-vector products, by power iteration. The estimate approaches
/// lambda_max from below; callers needing a strict upper bound should use
/// value * (1 + tol).
template <typename Hvp>
SpectralEstimate spectral_max(Hvp&& hvp, Eigen::Index d, double tol,
                              int max_iter, SeededRng& rng) {
  if (tol <= 0) throw ConfigError("spectral_max: tol must be > 0");
  Vec v = draw_normal(rng, 0.0, 1.0, d);
  double nv = v.norm();
  if (nv == 0) v.setConstant(1.0), nv = v.norm();
  v /= nv;
  double lambda = 0.0;
  SpectralEstimate out;
  for (int it = 1; it <= max_iter; ++it) {
    Vec w = hvp(v);
    double next = v.dot(w);  // Rayleigh quotient
    double nw = w.norm();
    out.iterations = it;
    if (nw == 0.0) {  // operator annihilated v: lambda_max could be 0
      out.value = 0.0;
      out.converged = true;
      return out;
    }
    v = w / nw;
    if (it > 1 && std::abs(next - lambda) <= tol * std::max(next, 1e-300)) {
      out.value = next;
      out.converged = true;
      return out;
    }
    lambda = next;
  }
  out.value = lambda;
  out.converged = false;
  return out;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Spectral norm by dense SVD-free symmetric eigensolve for symmetric
/// input, general SVD otherwise. Oracle-grade, small matrices only.
inline double spectral_norm(const Mat& m) {
  if (m.rows() == m.cols() && m.isApprox(m.transpose(), 1e-12)) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()[0];
}

}  // namespace ipgd
