// Experiment orchestration core: the synchronous round loop over all six
// optimizers, the convergence metrics and stopping rules, and CSV / JSON
// trace emission.
#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipgd/agent.hpp"
#include "ipgd/coordinator.hpp"
#include "ipgd/linalg.hpp"

namespace ipgd {

enum class OptimizerKind { kIpg, kGd, kNag, kHbm, kAdam, kBfgs };

inline const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kIpg: return "ipg";
    case OptimizerKind::kGd: return "gd";
    case OptimizerKind::kNag: return "nag";
    case OptimizerKind::kHbm: return "hbm";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kBfgs: return "bfgs";
  }
  return "?";
}

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "ipg") return OptimizerKind::kIpg;
  if (s == "gd") return OptimizerKind::kGd;
  if (s == "nag") return OptimizerKind::kNag;
  if (s == "hbm") return OptimizerKind::kHbm;
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "bfgs") return OptimizerKind::kBfgs;
  throw ConfigError("unknown optimizer: " + s);
}

enum class RunStatus { kConverged, kMaxIter, kDiverged };

inline const char* status_name(RunStatus s) {
  switch (s) {
    case RunStatus::kConverged: return "converged";
    case RunStatus::kMaxIter: return "max_iter";
    case RunStatus::kDiverged: return "diverged";
  }
  return "?";
}

/// All hyperparameters for every optimizer; the active kind picks which
/// fields matter.
struct OptimizerParams {
  // preconditioned gradient
  AlphaSchedule ipg_alpha = AlphaSchedule::constant(1.0);
  double delta = 1.0;
  double beta = 0.0;
  // baselines
  GdParams gd{1.0};
  MomentumParams nag{1.0, 0.9};
  MomentumParams hbm{1.0, 0.9};
  AdamParams adam{};
  BfgsParams bfgs{};
};

struct RunTrace {
  std::vector<long> t;
  std::vector<double> err;    // ||x(t) - x*|| (NaN when x* unknown)
  std::vector<double> cost;   // aggregate f(x(t)) (NaN when not logged)
  std::vector<double> alpha;  // step size used to produce row t
  std::vector<int> noise_flag;
  std::vector<long> aux_rounds;  // extra communication rounds at step t
  RunStatus status = RunStatus::kMaxIter;
  Vec x_final;
  long total_rounds = 0;  // per-iteration rounds + aux
  long bfgs_skips = 0;

  long iterations() const { return t.empty() ? 0 : t.back(); }
};

struct LoopSpec {
  OptimizerKind opt = OptimizerKind::kIpg;
  OptimizerParams params;
  long max_iter = 10000;
  NoiseSpec process = NoiseSpec::none();  // process_uniform or none
  Vec gradient_noise_std;                 // empty: exact gradients
  bool noise_x_only = false;
  bool has_x_star = false;
  Vec x_star;
  bool log_cost = true;
  // Early exits (0 disables): stop once the quantity stays at or below the
  // threshold for `stop_window` consecutive iterations.
  double stop_err = 0.0;   // on ||x - x*||
  double stop_cost = 0.0;  // on aggregate f(x)
  int stop_window = 10;
};

/// Runs one optimizer on one agent population from x0. Row 0 is the
/// initialization; row t reflects the state after t estimate updates.
inline RunTrace run_loop(std::vector<AgentState>& agents, const Vec& x0,
                         const LoopSpec& sp, SeededRng server_rng) {
  const Eigen::Index d = x0.size();
  RunTrace trace;
  const bool noisy_grad = sp.gradient_noise_std.size() > 0;
  NoiseSpec grad_noise =
      noisy_grad ? NoiseSpec::gradient_gaussian(sp.gradient_noise_std)
                 : NoiseSpec::none();
  const bool proc = sp.process.kind == NoiseSpec::Kind::kProcessUniform;

  IpgState ipg;
  BaselineState base;
  if (sp.opt == OptimizerKind::kIpg) {
    ipg.x = x0;
    ipg.k = Mat::Zero(d, d);
    ipg.delta = sp.params.delta;
    ipg.beta = sp.params.beta;
    ipg.alpha = sp.params.ipg_alpha;
  } else {
    base = BaselineState::init(x0, sp.opt == OptimizerKind::kBfgs);
  }
  auto current_x = [&]() -> const Vec& {
    return sp.opt == OptimizerKind::kIpg ? ipg.x : base.x;
  };

  auto record = [&](long t, double alpha_used, long aux, bool noised) {
    trace.t.push_back(t);
    trace.err.push_back(sp.has_x_star
                            ? (current_x() - sp.x_star).norm()
                            : std::numeric_limits<double>::quiet_NaN());
    trace.cost.push_back(sp.log_cost
                             ? aggregate_value(agents, current_x())
                             : std::numeric_limits<double>::quiet_NaN());
    trace.alpha.push_back(alpha_used);
    trace.noise_flag.push_back(noised ? 1 : 0);
    trace.aux_rounds.push_back(aux);
  };

  record(0, 0.0, 0, false);
  int settled = 0;
  trace.status = RunStatus::kMaxIter;
  for (long t = 0; t < sp.max_iter; ++t) {
    double alpha_used = 0.0;
    long aux = 0;
    bool noised = false;
    try {
      switch (sp.opt) {
        case OptimizerKind::kIpg: {
          AgentReply sum = aggregate_round(agents, ipg.x, ipg.k);
          if (noisy_grad) {
            sum.gradient += draw_gradient_noise(grad_noise, server_rng);
            noised = true;
          }
          alpha_used = ipg.alpha.at(ipg.t);
          ipg.advance(sum.gradient, sum.residuals);
          if (proc) {
            std::vector<Mat*> mats;
            if (!sp.noise_x_only) mats.push_back(&ipg.k);
            inject_process_noise({&ipg.x}, mats, sp.process, server_rng);
            noised = true;
          }
          break;
        }
        case OptimizerKind::kGd:
        case OptimizerKind::kHbm:
        case OptimizerKind::kAdam: {
          Vec g = aggregate_gradient(agents, base.x);
          if (noisy_grad) {
            g += draw_gradient_noise(grad_noise, server_rng);
            noised = true;
          }
          if (sp.opt == OptimizerKind::kGd) {
            alpha_used = sp.params.gd.alpha;
            step_gd(base, g, sp.params.gd);
          } else if (sp.opt == OptimizerKind::kHbm) {
            alpha_used = sp.params.hbm.alpha;
            step_hbm(base, g, sp.params.hbm);
          } else {
            alpha_used = sp.params.adam.alpha.at(base.t);
            step_adam(base, g, sp.params.adam);
          }
          if (proc) {
            std::vector<Vec*> vecs{&base.x};
            if (!sp.noise_x_only && sp.opt == OptimizerKind::kAdam) {
              vecs.push_back(&base.m1);
              vecs.push_back(&base.m2);
            }
            inject_process_noise(vecs, {}, sp.process, server_rng);
            noised = true;
          }
          break;
        }
        case OptimizerKind::kNag: {
          Vec g = aggregate_gradient(agents, nag_lookahead(base, sp.params.nag));
          if (noisy_grad) {
            g += draw_gradient_noise(grad_noise, server_rng);
            noised = true;
          }
          alpha_used = sp.params.nag.alpha;
          step_nag(base, g, sp.params.nag);
          if (proc) {
            inject_process_noise({&base.x}, {}, sp.process, server_rng);
            noised = true;
          }
          break;
        }
        case OptimizerKind::kBfgs: {
          Vec g = aggregate_gradient(agents, base.x);
          if (noisy_grad) {
            g += draw_gradient_noise(grad_noise, server_rng);
            noised = true;
          }
          alpha_used = sp.params.bfgs.backtrack ? -1.0
                                                : sp.params.bfgs.fixed_alpha;
          aux = step_bfgs(base, g, sp.params.bfgs, [&](const Vec& x) {
            return aggregate_value(agents, x);
          });
          if (proc) {
            std::vector<Mat*> mats;
            if (!sp.noise_x_only) mats.push_back(&base.b_inv);
            inject_process_noise({&base.x}, mats, sp.process, server_rng);
            noised = true;
          }
          break;
        }
      }
    } catch (const DivergenceError&) {
      trace.status = RunStatus::kDiverged;
      break;
    }
    record(t + 1, alpha_used, aux, noised);
    if (!std::isnan(trace.cost.back()) && !std::isfinite(trace.cost.back())) {
      trace.status = RunStatus::kDiverged;
      break;
    }
    const bool err_ok = sp.stop_err > 0.0 && sp.has_x_star &&
                        trace.err.back() <= sp.stop_err;
    const bool cost_ok = sp.stop_cost > 0.0 && sp.log_cost &&
                         trace.cost.back() <= sp.stop_cost;
    if ((sp.stop_err > 0.0 || sp.stop_cost > 0.0) &&
        (sp.stop_err > 0.0 ? err_ok : true) &&
        (sp.stop_cost > 0.0 ? cost_ok : true)) {
      if (++settled >= sp.stop_window) {
        trace.status = RunStatus::kConverged;
        break;
      }
    } else {
      settled = 0;
    }
  }
  trace.x_final = current_x();
  trace.bfgs_skips = base.skipped_updates;
  trace.total_rounds = trace.iterations();
  for (long a : trace.aux_rounds) trace.total_rounds += a;
  return trace;
}

// ---------------------------------------------------------------------------
// Metrics and stopping rules

/// ||x(t)-x*|| / ||x(0)-x*|| series from a trace's raw error column.
inline std::vector<double> rel_est_error(const RunTrace& trace) {
  if (trace.err.empty() || std::isnan(trace.err.front()))
    throw ConfigError("rel_est_error: trace has no error column");
  const double e0 = trace.err.front();
  if (e0 == 0.0) throw ConfigError("rel_est_error: x(0) equals x*");
  std::vector<double> out(trace.err.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = trace.err[i] / e0;
  return out;
}

/// (f(x(t)) - f*)/f* series.
inline std::vector<double> rel_est_cost(const RunTrace& trace, double f_star) {
  if (f_star <= 0.0)
    throw ConfigError("rel_est_cost: f* must be positive");
  std::vector<double> out(trace.cost.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (trace.cost[i] - f_star) / f_star;
  return out;
}

/// Smallest t with series(t..t+window-1) <= eps_tol throughout.
inline std::optional<long> iterations_to_tol(const std::vector<double>& series,
                                             double eps_tol, int window = 10) {
  if (window < 1) throw ConfigError("iterations_to_tol: window must be >= 1");
  int run = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] <= eps_tol) {
      if (++run >= window)
        return static_cast<long>(i) - window + 1;
    } else {
      run = 0;
    }
  }
  return std::nullopt;
}

struct SseResult {
  double value = std::numeric_limits<double>::infinity();
  bool settled = false;
  bool diverged = false;
};

/// Series value at the first index where the change stays below
/// delta_thresh for `window` consecutive steps; infinity on divergence;
/// value at the end (not-settled flag) otherwise.
inline SseResult final_sse(const std::vector<double>& series, bool diverged,
                           double delta_thresh = 1e-4, int window = 50) {
  SseResult res;
  if (diverged) {
    res.diverged = true;
    return res;
  }
  if (series.empty()) throw ConfigError("final_sse: empty series");
  int run = 0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (std::abs(series[i] - series[i - 1]) < delta_thresh) {
      if (++run >= window) {
        res.value = series[i];
        res.settled = true;
        return res;
      }
    } else {
      run = 0;
    }
  }
  res.value = series.back();
  res.settled = false;
  return res;
}

/// Fraction of test points with sign(a_k^T x) != b_k; ties (zero margin)
/// count as errors.
inline double test_error(const Vec& x_hat, const Mat& test_a,
                         const Vec& test_b) {
  if (test_a.rows() != test_b.size() || test_a.cols() != x_hat.size())
    throw ConfigError("test_error: shape mismatch");
  const Vec z = test_a * x_hat;
  long wrong = 0;
  for (Eigen::Index k = 0; k < z.size(); ++k)
    if (z[k] * test_b[k] <= 0.0) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(z.size());
}

// ---------------------------------------------------------------------------
// Emission

inline constexpr int kCsvVersion = 1;

namespace detail {
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Schema v1: t,rel_error,cost,alpha,noise_flag. rel_error is NaN when x*
/// is unknown.
inline void write_trace_csv(const std::string& path, const RunTrace& trace) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "t,rel_error,cost,alpha,noise_flag\n";
  const double e0 = trace.err.empty() ? 0.0 : trace.err.front();
  for (std::size_t i = 0; i < trace.t.size(); ++i) {
    const double rel =
        e0 > 0.0 ? trace.err[i] / e0 : std::numeric_limits<double>::quiet_NaN();
    out << trace.t[i] << ',' << detail::fmt(rel) << ','
        << detail::fmt(trace.cost[i]) << ',' << detail::fmt(trace.alpha[i])
        << ',' << trace.noise_flag[i] << '\n';
  }
}

struct CsvTrace {
  std::vector<long> t;
  std::vector<double> rel_error, cost, alpha;
  std::vector<int> noise_flag;
};

inline CsvTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "t,rel_error,cost,alpha,noise_flag")
    throw ConfigError(path + ": unexpected CSV header");
  CsvTrace out;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 5)
      throw ConfigError(path + ": malformed row: " + line);
    out.t.push_back(std::stol(fields[0]));
    out.rel_error.push_back(std::stod(fields[1]));
    out.cost.push_back(std::stod(fields[2]));
    out.alpha.push_back(std::stod(fields[3]));
    out.noise_flag.push_back(std::stoi(fields[4]));
  }
  return out;
}

struct SummaryRow {
  std::string dataset;
  std::string optimizer;
  double eps_tol = 0.0;
  std::optional<long> iterations;  // nullopt: ">max_iter"
  long max_iter = 0;
  double sse = std::numeric_limits<double>::quiet_NaN();
  double test_err = std::numeric_limits<double>::quiet_NaN();
};

inline void write_summary_csv(const std::string& path,
                              const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "dataset,optimizer,eps_tol,iterations_to_tol,sse,test_error\n";
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.optimizer << ',' << detail::fmt(r.eps_tol)
        << ',';
    if (r.iterations)
      out << *r.iterations;
    else
      out << ">" << r.max_iter;
    out << ',' << detail::fmt(r.sse) << ',' << detail::fmt(r.test_err) << '\n';
  }
}

inline nlohmann::json summary_json(const std::vector<SummaryRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["dataset"] = r.dataset;
    j["optimizer"] = r.optimizer;
    j["eps_tol"] = r.eps_tol;
    if (r.iterations)
      j["iterations_to_tol"] = *r.iterations;
    else
      j["iterations_to_tol"] = ">" + std::to_string(r.max_iter);
    j["sse"] = r.sse;
    j["test_error"] = r.test_err;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace ipgd
