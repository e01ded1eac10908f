// Server-side state and updates: the preconditioned estimate/K updates,
// five baseline optimizers, step-size schedules and validity checks, and
// process-noise injection.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <variant>
#include <vector>

#include "ipgd/linalg.hpp"

namespace ipgd {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kDivergenceNorm = 1e12;

// ---------------------------------------------------------------------------
// Step-size schedules

class AlphaSchedule {
 public:
  static AlphaSchedule constant(double a) {
    return AlphaSchedule(Constant{a});
  }
  /// 2/(l1+ld), the optimal constant rate for a quadratic with extreme
  /// Hessian eigenvalues l1 >= ld.
  static AlphaSchedule two_over_sum(double l1, double ld) {
    return AlphaSchedule(Constant{2.0 / (l1 + ld)});
  }
  /// 0.99 * min{1/(Lambda+beta), mu^t (1-mu rho)/(2 l)}.
  static AlphaSchedule theorem_bound(double lambda_bound, double beta,
                                     double l, double mu, double rho) {
    if (mu <= 1.0) throw ConfigError("theorem schedule: mu must exceed 1");
    if (mu * rho >= 1.0)
      throw ConfigError("theorem schedule: mu*rho must be below 1");
    if (l <= 0) throw ConfigError("theorem schedule: l must be positive");
    return AlphaSchedule(Theorem{lambda_bound, beta, l, mu, rho});
  }
  static AlphaSchedule inv_t(double c) {
    return AlphaSchedule(InvT{c, false});
  }
  static AlphaSchedule inv_sqrt_t(double c) {
    return AlphaSchedule(InvT{c, true});
  }
  static AlphaSchedule custom(std::vector<double> values) {
    if (values.empty()) throw ConfigError("custom schedule: empty list");
    return AlphaSchedule(Custom{std::move(values)});
  }

  double at(long t) const {
    if (const auto* c = std::get_if<Constant>(&mode_)) return c->alpha;
    if (const auto* th = std::get_if<Theorem>(&mode_))
      return 0.99 * std::min(1.0 / (th->lambda_bound + th->beta),
                             std::pow(th->mu, static_cast<double>(t)) *
                                 (1.0 - th->mu * th->rho) / (2.0 * th->l));
    if (const auto* it = std::get_if<InvT>(&mode_)) {
      const double tt = static_cast<double>(t + 1);
      return it->sqrt ? it->c / std::sqrt(tt) : it->c / tt;
    }
    const auto& v = std::get<Custom>(mode_).values;
    return v[std::min<std::size_t>(t, v.size() - 1)];
  }

 private:
  struct Constant {
    double alpha;
  };
  struct Theorem {
    double lambda_bound, beta, l, mu, rho;
  };
  struct InvT {
    double c;
    bool sqrt;
  };
  struct Custom {
    std::vector<double> values;
  };
  using Mode = std::variant<Constant, Theorem, InvT, Custom>;

  explicit AlphaSchedule(Mode m) : mode_(std::move(m)) {}
  Mode mode_;
};

/// Strict step-size condition 0 < alpha < 1/(lam_max + beta). Advisory in
/// experiment mode (tuned schedules may exceed it).
inline bool alpha_valid(double alpha_t, double lam_max, double beta) {
  return alpha_t > 0.0 && alpha_t < 1.0 / (lam_max + beta);
}

/// Conservative theorem-mode bound min{1/(Lambda+beta), mu^t(1-mu rho)/2l}.
inline double theorem_alpha_bound(long t, double lambda_bound, double beta,
                                  double l, double mu, double rho) {
  if (mu <= 1.0) throw ConfigError("theorem_alpha_bound: mu must exceed 1");
  if (mu * rho >= 1.0)
    throw ConfigError("theorem_alpha_bound: mu*rho must be below 1");
  if (l <= 0) throw ConfigError("theorem_alpha_bound: l must be positive");
  return std::min(1.0 / (lambda_bound + beta),
                  std::pow(mu, static_cast<double>(t)) * (1.0 - mu * rho) /
                      (2.0 * l));
}

struct InitConditionReport {
  bool ok = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double eta = 0.0;
};

/// Local-convergence initial condition
///   eta*gamma/2 ||x0-x*|| + l ||K0-K*|| + eta*beta <= 1/(2 mu)
/// with K* = (hess(x*) + beta I)^{-1} and eta = ||K*||. Oracle context:
/// x* and hess(x*) must be known.
inline InitConditionReport init_condition_check(const Vec& x0, const Mat& k0,
                                                const Vec& x_star,
                                                const Mat& hess_star,
                                                double beta, double gamma,
                                                double l, double mu) {
  Mat shifted = hess_star;
  shifted.diagonal().array() += beta;
  Eigen::FullPivLU<Mat> lu(shifted);
  if (!lu.isInvertible())
    throw ConfigError("init_condition_check: hess(x*)+beta I is singular");
  const Mat k_star = lu.inverse();
  InitConditionReport rep;
  rep.eta = spectral_norm(k_star);
  rep.lhs = 0.5 * rep.eta * gamma * (x0 - x_star).norm() +
            l * spectral_norm(k0 - k_star) + rep.eta * beta;
  rep.rhs = 1.0 / (2.0 * mu);
  rep.ok = rep.lhs <= rep.rhs;
  return rep;
}

// ---------------------------------------------------------------------------
// Preconditioned-gradient server state

struct IpgState {
  Vec x;
  Mat k;
  long t = 0;
  double delta = 1.0;
  double beta = 0.0;
  AlphaSchedule alpha = AlphaSchedule::constant(1.0);

  /// x(t+1) = x(t) - delta K(t) g_sum; uses the pre-update K.
  Vec update_x(const Vec& g_sum) const {
    Vec next = x - delta * (k * g_sum);
    if (!next.allFinite() || next.norm() > kDivergenceNorm)
      throw DivergenceError("estimate update produced a non-finite/huge x");
    return next;
  }

  /// K(t+1) = K(t) - alpha(t) R_sum.
  Mat update_k(const Mat& r_sum, double alpha_t) const {
    Mat next = k - alpha_t * r_sum;
    if (!next.allFinite())
      throw DivergenceError("preconditioner update produced non-finite K");
    return next;
  }

  void advance(const Vec& g_sum, const Mat& r_sum) {
    const double a = alpha.at(t);
    Vec nx = update_x(g_sum);
    k = update_k(r_sum, a);
    x = std::move(nx);
    ++t;
  }
};

// ---------------------------------------------------------------------------
// Baseline optimizers

struct GdParams {
  double alpha;
};
struct MomentumParams {  // NAG and HBM
  double alpha;
  double beta;
};
struct AdamParams {
  AlphaSchedule alpha = AlphaSchedule::constant(1.0);
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
struct BfgsParams {
  bool backtrack = true;
  double fixed_alpha = 1e-3;  // used when backtrack is false
  double armijo_c1 = 1e-4;
  double halving = 0.5;
  int max_halvings = 30;
};

struct BaselineState {
  Vec x;
  Vec x_prev;       // NAG / HBM
  Vec m1, m2;       // Adam moments (start at zero)
  Mat b_inv;        // BFGS inverse-Hessian approximation, B(0) = I
  Vec g_prev;       // BFGS previous gradient
  bool has_prev = false;
  long t = 0;
  long skipped_updates = 0;  // BFGS curvature-condition skips

  static BaselineState init(const Vec& x0, bool with_bfgs = false) {
    BaselineState s;
    s.x = x0;
    s.x_prev = x0;
    s.m1 = Vec::Zero(x0.size());
    s.m2 = Vec::Zero(x0.size());
    if (with_bfgs) s.b_inv = Mat::Identity(x0.size(), x0.size());
    return s;
  }

  void check() const {
    if (!x.allFinite() || x.norm() > kDivergenceNorm)
      throw DivergenceError("baseline iterate diverged");
  }
};

inline void step_gd(BaselineState& s, const Vec& g_sum, const GdParams& p) {
  s.x -= p.alpha * g_sum;
  ++s.t;
  s.check();
}

inline void step_hbm(BaselineState& s, const Vec& g_sum,
                     const MomentumParams& p) {
  Vec next = s.x - p.alpha * g_sum + p.beta * (s.x - s.x_prev);
  s.x_prev = s.x;
  s.x = std::move(next);
  ++s.t;
  s.check();
}

/// Lookahead point y = x + beta (x - x_prev); the caller must evaluate the
/// aggregate gradient there and pass it as g_at_lookahead.
inline Vec nag_lookahead(const BaselineState& s, const MomentumParams& p) {
  return s.x + p.beta * (s.x - s.x_prev);
}

inline void step_nag(BaselineState& s, const Vec& g_at_lookahead,
                     const MomentumParams& p) {
  Vec y = nag_lookahead(s, p);
  Vec next = y - p.alpha * g_at_lookahead;
  s.x_prev = s.x;
  s.x = std::move(next);
  ++s.t;
  s.check();
}

inline void step_adam(BaselineState& s, const Vec& g_sum,
                      const AdamParams& p) {
  s.m1 = p.beta1 * s.m1 + (1.0 - p.beta1) * g_sum;
  s.m2 = p.beta2 * s.m2 + (1.0 - p.beta2) * g_sum.cwiseProduct(g_sum);
  const double a = p.alpha.at(s.t);
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(s.t + 1));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(s.t + 1));
  const Vec m_hat = s.m1 / c1;
  const Vec v_hat = s.m2 / c2;
  s.x.array() -= a * m_hat.array() / (v_hat.array().sqrt() + p.eps);
  ++s.t;
  s.check();
}

/// One BFGS step. `g_sum` is the aggregate gradient at the current x;
/// `eval_cost` evaluates the aggregate cost (one communication round per
/// call, counted by the harness). Returns the number of cost evaluations.
inline int step_bfgs(BaselineState& s, const Vec& g_sum, const BfgsParams& p,
                     const std::function<double(const Vec&)>& eval_cost) {
  if (s.has_prev) {
    const Vec step = s.x - s.x_prev;
    const Vec y = g_sum - s.g_prev;
    const double sy = step.dot(y);
    if (sy > 0.0) {
      // Rank-2 expansion of (I-r s y^T) B (I-r y s^T) + r s s^T, O(d^2).
      const double r = 1.0 / sy;
      const Vec by = s.b_inv * y;
      const double yby = y.dot(by);
      s.b_inv.noalias() -= r * step * by.transpose();
      s.b_inv.noalias() -= r * by * step.transpose();
      s.b_inv.noalias() += (r * r * yby + r) * step * step.transpose();
    } else {
      ++s.skipped_updates;  // keep B
    }
  }
  const Vec dir = -(s.b_inv * g_sum);
  double alpha = 1.0;
  int evals = 0;
  if (p.backtrack) {
    const double f0 = eval_cost(s.x);
    ++evals;
    const double slope = g_sum.dot(dir);
    for (int h = 0; h < p.max_halvings; ++h) {
      const double f1 = eval_cost(s.x + alpha * dir);
      ++evals;
      if (f1 <= f0 + p.armijo_c1 * alpha * slope) break;
      alpha *= p.halving;
    }
  } else {
    alpha = p.fixed_alpha;
  }
  s.x_prev = s.x;
  s.g_prev = g_sum;
  s.has_prev = true;
  s.x += alpha * dir;
  ++s.t;
  s.check();
  return evals;
}

// ---------------------------------------------------------------------------
// Process noise

struct NoiseSpec {
  enum class Kind { kNone, kProcessUniform, kGradientGaussian };
  Kind kind = Kind::kNone;
  double lo = 0.0, hi = 0.0;  // process_uniform bounds
  Vec gradient_std;           // per-coordinate std for gradient noise
  bool per_agent = false;     // split gradient noise across agents
  bool x_only = false;        // restrict process-noise targets to x

  static NoiseSpec none() { return {}; }
  static NoiseSpec process_uniform(double lo, double hi, bool x_only = false) {
    NoiseSpec s;
    s.kind = Kind::kProcessUniform;
    s.lo = lo;
    s.hi = hi;
    s.x_only = x_only;
    return s;
  }
  static NoiseSpec gradient_gaussian(Vec std_per_coord) {
    NoiseSpec s;
    s.kind = Kind::kGradientGaussian;
    s.gradient_std = std::move(std_per_coord);
    return s;
  }
};

inline void add_uniform_noise(Vec& v, const NoiseSpec& spec, SeededRng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] += rng.uniform(spec.lo, spec.hi);
}

inline void add_uniform_noise(Mat& m, const NoiseSpec& spec, SeededRng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      m(r, c) += rng.uniform(spec.lo, spec.hi);
}

/// Adds an independent uniform(lo,hi) draw to every entry of every listed
/// variable. No-op unless the spec is process_uniform with a nonempty
/// interval.
inline void inject_process_noise(const std::vector<Vec*>& vectors,
                                 const std::vector<Mat*>& matrices,
                                 const NoiseSpec& spec, SeededRng& rng) {
  if (spec.kind != NoiseSpec::Kind::kProcessUniform) return;
  if (spec.lo == spec.hi) return;
  for (Vec* v : vectors) add_uniform_noise(*v, spec, rng);
  for (Mat* m : matrices) add_uniform_noise(*m, spec, rng);
}

/// Zero-mean Gaussian gradient noise with the configured per-coordinate
/// standard deviations.
inline Vec draw_gradient_noise(const NoiseSpec& spec, SeededRng& rng) {
  Vec noise = Vec::Zero(spec.gradient_std.size());
  for (Eigen::Index i = 0; i < noise.size(); ++i)
    noise[i] = rng.normal(0.0, spec.gradient_std[i]);
  return noise;
}

}  // namespace ipgd
