// Convergence-rate oracles: the per-step contraction factor of the
// preconditioner recursion, problem constants for quadratics, and
// verifiers for linear contraction and superlinear decay of traces.
#pragma once

#include <cmath>
#include <vector>

#include "ipgd/coordinator.hpp"
#include "ipgd/linalg.hpp"

namespace ipgd {

inline constexpr Eigen::Index kRhoDimLimit = 64;

/// rho(t) = || I - alpha_t (hess + beta I) ||_2 by dense symmetric
/// eigensolve. Refuses large problems; use closed forms there.
inline double compute_rho(const Mat& hess, double alpha_t, double beta) {
  if (hess.rows() != hess.cols())
    throw ConfigError("compute_rho: hessian must be square");
  if (hess.rows() > kRhoDimLimit)
    throw ConfigError("compute_rho: dimension above dense eigensolve limit");
  Eigen::SelfAdjointEigenSolver<Mat> es(hess);
  double rho = 0.0;
  for (Eigen::Index i = 0; i < hess.rows(); ++i)
    rho = std::max(rho, std::abs(1.0 - alpha_t * (es.eigenvalues()[i] + beta)));
  return rho;
}

struct QuadraticConstants {
  double l = 0.0;          // Lipschitz constant of the aggregate gradient
  double gamma = 0.0;      // Hessian Lipschitz constant (0 for quadratics)
  double lambda_min = 0.0; // smallest aggregate Hessian eigenvalue
  double lambda_max = 0.0;
  double eta = 0.0;        // 1/(lambda_min + beta)
  double rho = 0.0;        // contraction at the capped step size
  double alpha_cap = 0.0;  // 0.99/(lambda_max + beta)
};

/// Exact constants for an aggregate quadratic with the given Hessian.
inline QuadraticConstants quadratic_constants(const Mat& hess, double beta) {
  if (hess.rows() != hess.cols())
    throw ConfigError("quadratic_constants: hessian must be square");
  Eigen::SelfAdjointEigenSolver<Mat> es(hess);
  QuadraticConstants c;
  c.lambda_min = es.eigenvalues().minCoeff();
  c.lambda_max = es.eigenvalues().maxCoeff();
  c.l = c.lambda_max;
  c.gamma = 0.0;
  if (c.lambda_min + beta <= 0.0)
    throw ConfigError("quadratic_constants: hess + beta I not positive");
  c.eta = 1.0 / (c.lambda_min + beta);
  c.alpha_cap = 0.99 / (c.lambda_max + beta);
  double rho = 0.0;
  for (Eigen::Index i = 0; i < hess.rows(); ++i)
    rho = std::max(rho,
                   std::abs(1.0 - c.alpha_cap * (es.eigenvalues()[i] + beta)));
  c.rho = rho;
  return c;
}

/// Same, with rho taken as the supremum of the contraction factor over the
/// schedule's step sizes on [0, horizon).
inline QuadraticConstants quadratic_constants(const Mat& hess, double beta,
                                              const AlphaSchedule& sched,
                                              long horizon) {
  QuadraticConstants c = quadratic_constants(hess, beta);
  Eigen::SelfAdjointEigenSolver<Mat> es(hess);
  double rho = 0.0;
  for (long t = 0; t < horizon; ++t) {
    const double a = sched.at(t);
    for (Eigen::Index i = 0; i < hess.rows(); ++i)
      rho = std::max(rho, std::abs(1.0 - a * (es.eigenvalues()[i] + beta)));
  }
  c.rho = rho;
  return c;
}

struct ContractionReport {
  bool ok = false;
  long violations = 0;
  long first_violation = -1;
  double worst_ratio = 0.0;
  long steps_checked = 0;
};

/// Checks ||e(t+1)|| <= (rho + slack) ||e(t)|| along a trace of error
/// norms. Entries at or below `floor` end the check (numerical noise
/// dominates past it).
inline ContractionReport verify_linear_contraction(
    const std::vector<double>& error_norms, double rho, double slack = 1e-10,
    double floor = 1e-300) {
  ContractionReport rep;
  for (std::size_t t = 0; t + 1 < error_norms.size(); ++t) {
    if (error_norms[t] <= floor || error_norms[t + 1] <= floor) break;
    const double ratio = error_norms[t + 1] / error_norms[t];
    rep.worst_ratio = std::max(rep.worst_ratio, ratio);
    ++rep.steps_checked;
    if (ratio > rho + slack) {
      ++rep.violations;
      if (rep.first_violation < 0)
        rep.first_violation = static_cast<long>(t);
    }
  }
  rep.ok = rep.steps_checked > 0 && rep.violations == 0;
  return rep;
}

/// Per-step ||z(t+1)|| <= (1/mu)||z(t)|| together with the boundedness
/// condition ||z(t)|| < 1/(mu*eta*gamma), vacuous when gamma = 0.
inline ContractionReport verify_theorem_contraction(
    const std::vector<double>& error_norms, double mu, double eta,
    double gamma, double slack = 1e-12) {
  if (mu <= 1.0)
    throw ConfigError("verify_theorem_contraction: mu must exceed 1");
  ContractionReport rep = verify_linear_contraction(error_norms, 1.0 / mu,
                                                    slack);
  if (gamma > 0.0) {
    const double bound = 1.0 / (mu * eta * gamma);
    for (std::size_t t = 0; t < error_norms.size(); ++t)
      if (error_norms[t] >= bound) {
        ++rep.violations;
        if (rep.first_violation < 0) rep.first_violation = static_cast<long>(t);
        rep.ok = false;
      }
  }
  return rep;
}

enum class OrderVerdict { kSuperlinear, kNotSuperlinear, kInconclusive };

struct SuperlinearReport {
  OrderVerdict verdict = OrderVerdict::kInconclusive;
  std::vector<double> ratios;  // last usable successive ratios
  long usable_steps = 0;
};

/// Superlinear decay test on an error-norm trace: over the last `window`
/// ratios above the numerical floor, successive ratios must strictly
/// decrease and the final ratio must be below half the first. Fewer than
/// `min_steps` usable points is inconclusive.
inline SuperlinearReport verify_superlinear(
    const std::vector<double>& error_norms, double floor = 1e-13,
    int window = 10, int min_steps = 12) {
  SuperlinearReport rep;
  std::vector<double> ratios;
  for (std::size_t t = 0; t + 1 < error_norms.size(); ++t) {
    if (error_norms[t] <= floor) break;
    ratios.push_back(error_norms[t + 1] / error_norms[t]);
    if (error_norms[t + 1] <= floor) break;  // keep the crossing ratio
  }
  rep.usable_steps = static_cast<long>(ratios.size()) + 1;
  if (rep.usable_steps < min_steps) {
    // A run that annihilates the error outright is conclusive on its own.
    const bool hit_floor = ratios.size() + 1 < error_norms.size();
    if (hit_floor && !ratios.empty() && ratios.back() < 1e-8) {
      rep.ratios = ratios;
      rep.verdict = OrderVerdict::kSuperlinear;
    } else {
      rep.verdict = OrderVerdict::kInconclusive;
    }
    return rep;
  }
  const std::size_t n = ratios.size();
  const std::size_t start = n > static_cast<std::size_t>(window)
                                ? n - static_cast<std::size_t>(window)
                                : 0;
  rep.ratios.assign(ratios.begin() + start, ratios.end());
  bool decreasing = true;
  for (std::size_t i = 1; i < rep.ratios.size(); ++i)
    if (rep.ratios[i] >= rep.ratios[i - 1]) decreasing = false;
  const bool halved = rep.ratios.back() < 0.5 * rep.ratios.front();
  rep.verdict = decreasing && halved ? OrderVerdict::kSuperlinear
                                     : OrderVerdict::kNotSuperlinear;
  return rep;
}

}  // namespace ipgd
