// Experiment configuration: JSON schema, per-problem tuned parameter
// presets, problem construction (benchmark quadratics and the image
// datasets), and the top-level run_experiment entry point.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ipgd/costs.hpp"
#include "ipgd/datapipe.hpp"
#include "ipgd/harness.hpp"

namespace ipgd {

enum class ProblemKind { kNqm, kMnist, kCifar10, kQuadratic };
enum class RunMode { kFullBatch, kProcessNoise, kMiniBatch };

inline const char* problem_name(ProblemKind p) {
  switch (p) {
    case ProblemKind::kNqm: return "nqm";
    case ProblemKind::kMnist: return "mnist";
    case ProblemKind::kCifar10: return "cifar10";
    case ProblemKind::kQuadratic: return "quadratic";
  }
  return "?";
}

inline ProblemKind problem_from_name(const std::string& s) {
  if (s == "nqm") return ProblemKind::kNqm;
  if (s == "mnist") return ProblemKind::kMnist;
  if (s == "cifar10") return ProblemKind::kCifar10;
  if (s == "quadratic") return ProblemKind::kQuadratic;
  throw ConfigError("unknown problem: " + s);
}

inline const char* mode_name(RunMode m) {
  switch (m) {
    case RunMode::kFullBatch: return "full_batch";
    case RunMode::kProcessNoise: return "process_noise";
    case RunMode::kMiniBatch: return "mini_batch";
  }
  return "?";
}

inline RunMode mode_from_name(const std::string& s) {
  if (s == "full_batch") return RunMode::kFullBatch;
  if (s == "process_noise") return RunMode::kProcessNoise;
  if (s == "mini_batch") return RunMode::kMiniBatch;
  throw ConfigError("unknown mode: " + s);
}

/// JSON-friendly step-size schedule description.
struct ScheduleSpec {
  enum class Kind { kConstant, kInvT, kInvSqrtT, kCustom };
  Kind kind = Kind::kConstant;
  double value = 1.0;
  std::vector<double> values;

  AlphaSchedule build() const {
    switch (kind) {
      case Kind::kConstant: return AlphaSchedule::constant(value);
      case Kind::kInvT: return AlphaSchedule::inv_t(value);
      case Kind::kInvSqrtT: return AlphaSchedule::inv_sqrt_t(value);
      case Kind::kCustom: return AlphaSchedule::custom(values);
    }
    throw ConfigError("schedule: bad kind");
  }

  static ScheduleSpec constant(double v) { return {Kind::kConstant, v, {}}; }
  static ScheduleSpec inv_t(double c) { return {Kind::kInvT, c, {}}; }
  static ScheduleSpec inv_sqrt_t(double c) { return {Kind::kInvSqrtT, c, {}}; }

  nlohmann::json to_json() const {
    switch (kind) {
      case Kind::kConstant: return value;
      case Kind::kInvT: return {{"kind", "inv_t"}, {"c", value}};
      case Kind::kInvSqrtT: return {{"kind", "inv_sqrt_t"}, {"c", value}};
      case Kind::kCustom: return {{"kind", "custom"}, {"values", values}};
    }
    return nullptr;
  }

  static ScheduleSpec from_json(const nlohmann::json& j) {
    if (j.is_number()) return constant(j.get<double>());
    const std::string k = j.at("kind").get<std::string>();
    if (k == "constant") return constant(j.at("value").get<double>());
    if (k == "inv_t") return inv_t(j.at("c").get<double>());
    if (k == "inv_sqrt_t") return inv_sqrt_t(j.at("c").get<double>());
    if (k == "custom") {
      ScheduleSpec s;
      s.kind = Kind::kCustom;
      s.values = j.at("values").get<std::vector<double>>();
      return s;
    }
    throw ConfigError("schedule: unknown kind " + k);
  }
};

/// JSON-side optimizer parameters; `resolve` turns them into runtime ones.
struct ParamSpec {
  ScheduleSpec ipg_alpha = ScheduleSpec::constant(1.0);
  double delta = 1.0;
  double beta = 0.0;
  double gd_alpha = 1.0;
  double nag_alpha = 1.0, nag_beta = 0.9;
  double hbm_alpha = 1.0, hbm_beta = 0.9;
  ScheduleSpec adam_alpha = ScheduleSpec::constant(1.0);
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  bool bfgs_backtrack = true;
  double bfgs_alpha = 1e-3;

  OptimizerParams resolve() const {
    OptimizerParams p;
    p.ipg_alpha = ipg_alpha.build();
    p.delta = delta;
    p.beta = beta;
    p.gd = {gd_alpha};
    p.nag = {nag_alpha, nag_beta};
    p.hbm = {hbm_alpha, hbm_beta};
    p.adam.alpha = adam_alpha.build();
    p.adam.beta1 = adam_beta1;
    p.adam.beta2 = adam_beta2;
    p.adam.eps = adam_eps;
    p.bfgs.backtrack = bfgs_backtrack;
    p.bfgs.fixed_alpha = bfgs_alpha;
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["ipg"] = {{"alpha", ipg_alpha.to_json()}, {"delta", delta},
                {"beta", beta}};
    j["gd"] = {{"alpha", gd_alpha}};
    j["nag"] = {{"alpha", nag_alpha}, {"beta", nag_beta}};
    j["hbm"] = {{"alpha", hbm_alpha}, {"beta", hbm_beta}};
    j["adam"] = {{"alpha", adam_alpha.to_json()}, {"beta1", adam_beta1},
                 {"beta2", adam_beta2}, {"eps", adam_eps}};
    j["bfgs"] = {{"backtrack", bfgs_backtrack}, {"alpha", bfgs_alpha}};
    return j;
  }

  void merge_json(const nlohmann::json& j) {
    if (j.contains("ipg")) {
      const auto& o = j["ipg"];
      if (o.contains("alpha")) ipg_alpha = ScheduleSpec::from_json(o["alpha"]);
      if (o.contains("delta")) delta = o["delta"].get<double>();
      if (o.contains("beta")) beta = o["beta"].get<double>();
    }
    if (j.contains("gd") && j["gd"].contains("alpha"))
      gd_alpha = j["gd"]["alpha"].get<double>();
    if (j.contains("nag")) {
      if (j["nag"].contains("alpha")) nag_alpha = j["nag"]["alpha"].get<double>();
      if (j["nag"].contains("beta")) nag_beta = j["nag"]["beta"].get<double>();
    }
    if (j.contains("hbm")) {
      if (j["hbm"].contains("alpha")) hbm_alpha = j["hbm"]["alpha"].get<double>();
      if (j["hbm"].contains("beta")) hbm_beta = j["hbm"]["beta"].get<double>();
    }
    if (j.contains("adam")) {
      const auto& o = j["adam"];
      if (o.contains("alpha")) adam_alpha = ScheduleSpec::from_json(o["alpha"]);
      if (o.contains("beta1")) adam_beta1 = o["beta1"].get<double>();
      if (o.contains("beta2")) adam_beta2 = o["beta2"].get<double>();
      if (o.contains("eps")) adam_eps = o["eps"].get<double>();
    }
    if (j.contains("bfgs")) {
      const auto& o = j["bfgs"];
      if (o.contains("backtrack")) bfgs_backtrack = o["backtrack"].get<bool>();
      if (o.contains("alpha")) bfgs_alpha = o["alpha"].get<double>();
    }
  }
};

/// Tuned parameter presets per (problem, mode). The full-batch image-data
/// BFGS rows default to backtracking so its line search is self-scaling
/// across feature pipelines.
inline ParamSpec preset_params(ProblemKind problem, RunMode mode) {
  ParamSpec p;
  switch (problem) {
    case ProblemKind::kNqm:
    case ProblemKind::kQuadratic:
      p.ipg_alpha = ScheduleSpec::constant(1.99);
      p.delta = 1.0;
      p.beta = 0.0;
      p.gd_alpha = 1.99;
      p.nag_alpha = 1.33;
      p.nag_beta = 0.97;
      p.hbm_alpha = 3.92;
      p.hbm_beta = 0.96;
      p.adam_alpha = ScheduleSpec::inv_t(1.0);
      p.bfgs_backtrack = true;
      break;
    case ProblemKind::kMnist:
      if (mode == RunMode::kMiniBatch) {
        p.ipg_alpha = ScheduleSpec::constant(1e-4);
        p.delta = 0.05;
        p.beta = 1.0;
        p.gd_alpha = 1e-4;
        p.nag_alpha = 5e-4;
        p.nag_beta = 0.97;
        p.hbm_alpha = 1e-3;
        p.hbm_beta = 0.95;
        p.adam_alpha = ScheduleSpec::constant(1.0);
        p.bfgs_backtrack = false;
        p.bfgs_alpha = 0.05;
      } else {
        p.ipg_alpha = ScheduleSpec::constant(5e-4);
        p.delta = 1.0;
        p.beta = 0.0;
        p.gd_alpha = 5e-4;
        p.nag_alpha = 5e-4;
        p.nag_beta = 0.97;
        p.hbm_alpha = 1e-3;
        p.hbm_beta = 0.94;
        p.adam_alpha = ScheduleSpec::constant(2.0);
        p.bfgs_backtrack = true;
      }
      break;
    case ProblemKind::kCifar10:
      if (mode == RunMode::kMiniBatch) {
        p.ipg_alpha = ScheduleSpec::constant(1e-3);
        p.delta = 0.05;
        p.beta = 0.0;
        p.gd_alpha = 2e-4;
        p.nag_alpha = 2e-4;
        p.nag_beta = 0.95;
        p.hbm_alpha = 2e-4;
        p.hbm_beta = 0.92;
        p.adam_alpha = ScheduleSpec::inv_sqrt_t(1.0);
        p.bfgs_backtrack = true;
      } else if (mode == RunMode::kProcessNoise) {
        p.ipg_alpha = ScheduleSpec::constant(2e-4);
        p.delta = 0.05;
        p.beta = 0.0;
        p.gd_alpha = 2e-4;
        p.nag_alpha = 1e-4;
        p.nag_beta = 0.93;
        p.hbm_alpha = 3e-4;
        p.hbm_beta = 0.94;
        p.adam_alpha = ScheduleSpec::constant(0.1);
        p.bfgs_backtrack = false;
        p.bfgs_alpha = 1e-5;
      } else {
        p.ipg_alpha = ScheduleSpec::constant(2e-4);
        p.delta = 1.0;
        p.beta = 0.0;
        p.gd_alpha = 2e-4;
        p.nag_alpha = 1e-4;
        p.nag_beta = 0.95;
        p.hbm_alpha = 3e-4;
        p.hbm_beta = 0.94;
        p.adam_alpha = ScheduleSpec::inv_sqrt_t(1.0);
        p.bfgs_backtrack = true;
      }
      break;
  }
  return p;
}

/// Default additive-noise intervals for the process-noise settings.
inline std::pair<double, double> preset_process_interval(ProblemKind p) {
  if (p == ProblemKind::kCifar10) return {0.0, 1e-4};
  return {0.0, 2.3e-4};
}

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::kNqm;
  Eigen::Index d = 1000;  // nqm / quadratic dimension
  int m = 10;
  OptimizerKind optimizer = OptimizerKind::kIpg;
  ParamSpec params;
  bool params_explicit = false;
  RunMode mode = RunMode::kFullBatch;
  Eigen::Index batch_size = 10;  // per-agent points in mini-batch mode
  double noise_lo = 0.0, noise_hi = 0.0;  // process-noise interval
  bool noise_x_only = false;
  double gradient_noise_scale = 1.0;  // benchmark gradient noise multiplier
  bool gradient_noise = true;         // nqm only
  std::uint64_t seed = 1;
  long max_iter = 10000;
  double eps_tol = 1e-3;
  double sse_delta = 1e-4;
  int sse_window = 50;
  double init_std = -1.0;  // <0: per-family default
  double cost_scale = 0.1;  // logistic aggregate normalization
  std::size_t n_select = 10000;
  std::vector<double> quad_diag;  // custom quadratic spectrum
  bool early_stop = true;
  bool log_cost = true;
  std::string data_dir;  // falls back to IPGD_DATA_DIR
  std::string out_dir = "runs";
  std::string name;

  double resolved_init_std() const {
    if (init_std >= 0) return init_std;
    // Benchmark init N(0,1); image experiments N(0, 0.1) variance.
    return (problem == ProblemKind::kMnist || problem == ProblemKind::kCifar10)
               ? std::sqrt(0.1)
               : 1.0;
  }

  std::string resolved_data_dir() const {
    if (!data_dir.empty()) return data_dir;
    if (const char* env = std::getenv("IPGD_DATA_DIR")) return env;
    throw ConfigError("no data_dir configured and IPGD_DATA_DIR unset");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["problem"] = problem_name(problem);
    j["d"] = d;
    j["m"] = m;
    j["optimizer"] = optimizer_name(optimizer);
    j["params"] = params.to_json();
    j["mode"] = mode_name(mode);
    j["batch_size"] = batch_size;
    j["noise"] = {{"lo", noise_lo}, {"hi", noise_hi}, {"x_only", noise_x_only}};
    j["gradient_noise"] = gradient_noise;
    j["gradient_noise_scale"] = gradient_noise_scale;
    j["seed"] = seed;
    j["max_iter"] = max_iter;
    j["eps_tol"] = eps_tol;
    j["sse_delta"] = sse_delta;
    j["sse_window"] = sse_window;
    j["init_std"] = resolved_init_std();
    j["cost_scale"] = cost_scale;
    j["n_select"] = n_select;
    if (!quad_diag.empty()) j["quad_diag"] = quad_diag;
    j["early_stop"] = early_stop;
    j["log_cost"] = log_cost;
    if (!data_dir.empty()) j["data_dir"] = data_dir;
    j["out"] = out_dir;
    j["name"] = name;
    return j;
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("problem"))
      c.problem = problem_from_name(j["problem"].get<std::string>());
    if (j.contains("mode")) c.mode = mode_from_name(j["mode"].get<std::string>());
    c.params = preset_params(c.problem, c.mode);
    if (j.contains("params")) {
      c.params.merge_json(j["params"]);
      c.params_explicit = true;
    }
    if (j.contains("d")) c.d = j["d"].get<Eigen::Index>();
    if (j.contains("m")) c.m = j["m"].get<int>();
    if (j.contains("optimizer"))
      c.optimizer = optimizer_from_name(j["optimizer"].get<std::string>());
    if (j.contains("batch_size"))
      c.batch_size = j["batch_size"].get<Eigen::Index>();
    if (j.contains("noise")) {
      c.noise_lo = j["noise"].value("lo", 0.0);
      c.noise_hi = j["noise"].value("hi", 0.0);
      c.noise_x_only = j["noise"].value("x_only", false);
    } else if (c.mode == RunMode::kProcessNoise) {
      std::tie(c.noise_lo, c.noise_hi) = preset_process_interval(c.problem);
    }
    if (j.contains("gradient_noise"))
      c.gradient_noise = j["gradient_noise"].get<bool>();
    if (j.contains("gradient_noise_scale"))
      c.gradient_noise_scale = j["gradient_noise_scale"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("max_iter")) c.max_iter = j["max_iter"].get<long>();
    if (j.contains("eps_tol")) c.eps_tol = j["eps_tol"].get<double>();
    if (j.contains("sse_delta")) c.sse_delta = j["sse_delta"].get<double>();
    if (j.contains("sse_window")) c.sse_window = j["sse_window"].get<int>();
    if (j.contains("init_std")) c.init_std = j["init_std"].get<double>();
    if (j.contains("cost_scale")) c.cost_scale = j["cost_scale"].get<double>();
    if (j.contains("n_select")) c.n_select = j["n_select"].get<std::size_t>();
    if (j.contains("quad_diag"))
      c.quad_diag = j["quad_diag"].get<std::vector<double>>();
    if (j.contains("early_stop")) c.early_stop = j["early_stop"].get<bool>();
    if (j.contains("log_cost")) c.log_cost = j["log_cost"].get<bool>();
    if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    if (j.contains("name")) c.name = j["name"].get<std::string>();
    return c;
  }

  static ExperimentConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    return from_json(nlohmann::json::parse(in));
  }
};

/// A fully constructed problem instance: agent costs, initialization, and
/// whatever reference quantities are available.
struct Problem {
  std::vector<std::shared_ptr<CostModel>> costs;
  Vec x0;
  bool has_x_star = false;
  Vec x_star;
  Vec gradient_noise_std;  // empty: exact gradients
  bool has_test = false;
  Mat test_a;
  Vec test_b;
  std::string dataset_label;
};

namespace detail {

inline Problem build_image_problem(const ExperimentConfig& cfg) {
  Problem prob;
  const std::string dir = cfg.resolved_data_dir();
  SeededRng select_rng(cfg.seed, 7001);
  DesignMatrix train, test;
  namespace fs = std::filesystem;
  if (cfg.problem == ProblemKind::kMnist) {
    RawImageSet raw = load_mnist(dir, "train");
    RawImageSet sel = select_binary(raw, 1, 5, cfg.n_select, select_rng);
    train = build_design_mnist(sel);
    RawImageSet raw_test = load_mnist(dir, "t10k");
    RawImageSet sel_test =
        select_binary(raw_test, 1, 5,
                      std::count_if(raw_test.labels.begin(),
                                    raw_test.labels.end(),
                                    [](int l) { return l == 1 || l == 5; }),
                      select_rng);
    test = build_design_mnist(sel_test, &train.column_stats);
    prob.dataset_label = "mnist";
  } else {
    RawImageSet raw = load_cifar10((fs::path(dir) / "data_batch_1.bin").string());
    RawImageSet sel = select_binary(raw, 0, 1, cfg.n_select, select_rng);
    train = build_design_cifar(sel);
    RawImageSet raw_test =
        load_cifar10((fs::path(dir) / "test_batch.bin").string());
    RawImageSet sel_test =
        select_binary(raw_test, 0, 1,
                      std::count_if(raw_test.labels.begin(),
                                    raw_test.labels.end(),
                                    [](int l) { return l == 0 || l == 1; }),
                      select_rng);
    test = build_design_cifar(sel_test, &train.column_stats);
    prob.dataset_label = "cifar10";
  }
  for (auto& [a_i, b_i] : partition(train, cfg.m))
    prob.costs.push_back(std::make_shared<LogisticCost>(
        std::move(a_i), std::move(b_i), cfg.cost_scale));
  prob.has_test = true;
  prob.test_a = std::move(test.a);
  prob.test_b = std::move(test.b);
  return prob;
}

}  // namespace detail

inline Problem build_problem(const ExperimentConfig& cfg) {
  Problem prob;
  switch (cfg.problem) {
    case ProblemKind::kNqm: {
      prob.costs = nqm_build(cfg.d, cfg.m);
      prob.has_x_star = true;
      prob.x_star = Vec::Zero(cfg.d);
      if (cfg.gradient_noise && cfg.mode != RunMode::kMiniBatch)
        prob.gradient_noise_std = cfg.gradient_noise_scale *
                                  nqm_hessian_diagonal(cfg.d).cwiseSqrt();
      prob.dataset_label = "nqm";
      break;
    }
    case ProblemKind::kQuadratic: {
      if (cfg.quad_diag.empty())
        throw ConfigError("quadratic problem needs quad_diag");
      Vec diag = Eigen::Map<const Vec>(cfg.quad_diag.data(),
                                       cfg.quad_diag.size());
      const Eigen::Index d = diag.size();
      if (cfg.m <= 0 || d % cfg.m != 0)
        throw ConfigError("quadratic problem: m must divide d");
      const Eigen::Index rows = d / cfg.m;
      for (int i = 0; i < cfg.m; ++i) {
        Vec part = Vec::Zero(d);
        part.segment(i * rows, rows) = diag.segment(i * rows, rows);
        prob.costs.push_back(
            std::make_shared<DiagonalQuadraticCost>(std::move(part)));
      }
      prob.has_x_star = true;
      prob.x_star = Vec::Zero(d);
      prob.dataset_label = "quadratic";
      break;
    }
    case ProblemKind::kMnist:
    case ProblemKind::kCifar10:
      prob = detail::build_image_problem(cfg);
      break;
  }
  SeededRng init_rng(cfg.seed, 999);
  prob.x0 = draw_normal(init_rng, 0.0, cfg.resolved_init_std(),
                        prob.costs.front()->dim());
  return prob;
}

inline std::vector<AgentState> build_agents(const Problem& prob,
                                            const ExperimentConfig& cfg) {
  std::vector<AgentState> agents;
  const Eigen::Index batch =
      cfg.mode == RunMode::kMiniBatch ? cfg.batch_size : kFullBatch;
  for (std::size_t i = 0; i < prob.costs.size(); ++i)
    agents.emplace_back(static_cast<int>(i), prob.costs[i],
                        SeededRng(cfg.seed, 1 + i),
                        static_cast<int>(prob.costs.size()),
                        cfg.params.beta, batch);
  return agents;
}

inline LoopSpec build_loop_spec(const Problem& prob,
                                const ExperimentConfig& cfg) {
  LoopSpec sp;
  sp.opt = cfg.optimizer;
  sp.params = cfg.params.resolve();
  sp.max_iter = cfg.max_iter;
  if (cfg.mode == RunMode::kProcessNoise)
    sp.process = NoiseSpec::process_uniform(cfg.noise_lo, cfg.noise_hi);
  sp.noise_x_only = cfg.noise_x_only;
  sp.gradient_noise_std = prob.gradient_noise_std;
  sp.has_x_star = prob.has_x_star;
  if (prob.has_x_star) sp.x_star = prob.x_star;
  sp.log_cost = cfg.log_cost;
  if (cfg.early_stop && prob.has_x_star)
    sp.stop_err = cfg.eps_tol * (prob.x0 - prob.x_star).norm();
  return sp;
}

struct ExperimentResult {
  RunTrace trace;
  Problem problem;
  ExperimentConfig config;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.config = cfg;
  res.problem = build_problem(cfg);
  std::vector<AgentState> agents = build_agents(res.problem, cfg);
  LoopSpec sp = build_loop_spec(res.problem, cfg);
  res.trace = run_loop(agents, res.problem.x0, sp, SeededRng(cfg.seed, 0));
  return res;
}

/// High-precision reference minimum of an aggregate cost, by BFGS with
/// backtracking until the gradient norm drops below `gtol`.
inline std::pair<double, Vec> reference_minimum(
    std::vector<AgentState>& agents, const Vec& x0, double gtol = 1e-12,
    long max_iter = 2000) {
  BaselineState s = BaselineState::init(x0, true);
  BfgsParams p;
  auto eval = [&](const Vec& x) { return aggregate_value(agents, x); };
  for (long t = 0; t < max_iter; ++t) {
    Vec g = aggregate_gradient(agents, s.x);
    if (g.norm() < gtol) break;
    step_bfgs(s, g, p, eval);
  }
  return {aggregate_value(agents, s.x), s.x};
}

}  // namespace ipgd
