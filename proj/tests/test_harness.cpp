#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <memory>

#include "ipgd/config.hpp"
#include "ipgd/harness.hpp"

namespace {

namespace fs = std::filesystem;

using ipgd::AgentState;
using ipgd::LoopSpec;
using ipgd::Mat;
using ipgd::OptimizerKind;
using ipgd::RunStatus;
using ipgd::RunTrace;
using ipgd::SeededRng;
using ipgd::Vec;

fs::path scratch_dir() {
  fs::path p = fs::temp_directory_path() / "ipgd_harness_tests";
  fs::create_directories(p);
  return p;
}

std::vector<AgentState> one_quadratic_agent(const Vec& diag, double beta = 0.0) {
  auto cost = std::make_shared<ipgd::DiagonalQuadraticCost>(diag);
  std::vector<AgentState> agents;
  agents.emplace_back(0, cost, SeededRng(1, 1), 1, beta);
  return agents;
}

TEST(RunLoop, ZeroIterationsRecordsInitOnly) {
  auto agents = one_quadratic_agent(Vec::Ones(3));
  LoopSpec sp;
  sp.max_iter = 0;
  sp.has_x_star = true;
  sp.x_star = Vec::Zero(3);
  RunTrace tr = ipgd::run_loop(agents, Vec::Ones(3), sp, SeededRng(1, 0));
  ASSERT_EQ(tr.t.size(), 1u);
  EXPECT_EQ(tr.iterations(), 0);
  EXPECT_DOUBLE_EQ(tr.err[0], std::sqrt(3.0));
  EXPECT_EQ(tr.status, RunStatus::kMaxIter);
}

TEST(RunLoop, PreconditionedSolvesIdentityInTwoSteps) {
  // K(0)=0 freezes x for one step while K learns the inverse; with unit
  // curvature and alpha=1 the second estimate update is exact.
  auto agents = one_quadratic_agent(Vec::Ones(2));
  LoopSpec sp;
  sp.opt = OptimizerKind::kIpg;
  sp.params.ipg_alpha = ipgd::AlphaSchedule::constant(1.0);
  sp.max_iter = 100;
  sp.has_x_star = true;
  sp.x_star = Vec::Zero(2);
  Vec x0(2);
  x0 << 3.0, -4.0;
  RunTrace tr = ipgd::run_loop(agents, x0, sp, SeededRng(1, 0));
  ASSERT_GE(tr.err.size(), 3u);
  EXPECT_DOUBLE_EQ(tr.err[1], 5.0);  // frozen while K is still zero
  EXPECT_LT(tr.err[2], 1e-12);
}

TEST(RunLoop, GradientDescentMatchesClosedForm) {
  Vec diag(2);
  diag << 1.0, 0.5;
  auto agents = one_quadratic_agent(diag);
  LoopSpec sp;
  sp.opt = OptimizerKind::kGd;
  sp.params.gd = {4.0 / 3.0};
  sp.max_iter = 12;
  sp.has_x_star = true;
  sp.x_star = Vec::Zero(2);
  Vec x0 = Vec::Ones(2);
  RunTrace tr = ipgd::run_loop(agents, x0, sp, SeededRng(1, 0));
  auto rel = ipgd::rel_est_error(tr);
  for (std::size_t t = 0; t < rel.size(); ++t)
    EXPECT_NEAR(rel[t], std::pow(1.0 / 3.0, static_cast<double>(t)), 1e-12);
}

TEST(RunLoop, EarlyStopRequiresFullWindow) {
  auto agents = one_quadratic_agent(Vec::Ones(2));
  LoopSpec sp;
  sp.opt = OptimizerKind::kGd;
  sp.params.gd = {0.5};  // err halves every step
  sp.max_iter = 200;
  sp.has_x_star = true;
  sp.x_star = Vec::Zero(2);
  sp.stop_err = 1e-3;
  sp.stop_window = 10;
  RunTrace tr = ipgd::run_loop(agents, Vec::Ones(2), sp, SeededRng(1, 0));
  EXPECT_EQ(tr.status, RunStatus::kConverged);
  // first compliant iterate plus nine more below threshold
  long first = -1;
  auto rel_err = tr.err;
  for (std::size_t i = 0; i < rel_err.size(); ++i)
    if (rel_err[i] <= sp.stop_err) {
      first = static_cast<long>(i);
      break;
    }
  ASSERT_GE(first, 0);
  EXPECT_EQ(tr.iterations(), first + 9);
}

TEST(RunLoop, DivergenceFlagged) {
  auto agents = one_quadratic_agent(Vec::Ones(2));
  LoopSpec sp;
  sp.opt = OptimizerKind::kGd;
  sp.params.gd = {10.0};  // factor |1-10| = 9 per step
  sp.max_iter = 100;
  sp.has_x_star = true;
  sp.x_star = Vec::Zero(2);
  RunTrace tr = ipgd::run_loop(agents, Vec::Ones(2), sp, SeededRng(1, 0));
  EXPECT_EQ(tr.status, RunStatus::kDiverged);
  EXPECT_LT(tr.iterations(), 100);
}

TEST(RunLoop, RepeatedRunsBitIdentical) {
  Vec diag(4);
  diag << 1.0, 0.5, 0.25, 0.125;
  LoopSpec sp;
  sp.opt = OptimizerKind::kIpg;
  sp.params.ipg_alpha = ipgd::AlphaSchedule::constant(0.9);
  sp.max_iter = 50;
  sp.has_x_star = true;
  sp.x_star = Vec::Zero(4);
  sp.gradient_noise_std = Vec::Constant(4, 0.01);
  auto run = [&] {
    auto agents = one_quadratic_agent(diag);
    return ipgd::run_loop(agents, Vec::Ones(4), sp, SeededRng(9, 0));
  };
  RunTrace a = run();
  RunTrace b = run();
  EXPECT_TRUE(a.x_final == b.x_final);
  EXPECT_EQ(a.err, b.err);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.noise_flag, b.noise_flag);
}

TEST(RunLoop, BfgsCountsAuxiliaryRounds) {
  Vec diag(3);
  diag << 2.0, 1.0, 0.5;
  auto agents = one_quadratic_agent(diag);
  LoopSpec sp;
  sp.opt = OptimizerKind::kBfgs;
  sp.params.bfgs.backtrack = true;
  sp.max_iter = 20;
  sp.has_x_star = true;
  sp.x_star = Vec::Zero(3);
  sp.stop_err = 1e-9;
  RunTrace tr = ipgd::run_loop(agents, Vec::Ones(3), sp, SeededRng(1, 0));
  EXPECT_EQ(tr.status, RunStatus::kConverged);
  long aux = 0;
  for (long a : tr.aux_rounds) aux += a;
  EXPECT_GT(aux, 0);
  EXPECT_EQ(tr.total_rounds, tr.iterations() + aux);
}

TEST(RelEstError, NormalizesByInitialError) {
  RunTrace tr;
  tr.t = {0, 1, 2};
  tr.err = {4.0, 2.0, 0.0};
  auto rel = ipgd::rel_est_error(tr);
  EXPECT_DOUBLE_EQ(rel[0], 1.0);
  EXPECT_DOUBLE_EQ(rel[1], 0.5);
  EXPECT_DOUBLE_EQ(rel[2], 0.0);
}

TEST(RelEstError, StartingAtOptimumRejected) {
  RunTrace tr;
  tr.t = {0};
  tr.err = {0.0};
  EXPECT_THROW(ipgd::rel_est_error(tr), ipgd::ConfigError);
}

TEST(RelEstCost, RelativeSuboptimality) {
  RunTrace tr;
  tr.t = {0, 1};
  tr.cost = {3.0, 1.5};
  auto rel = ipgd::rel_est_cost(tr, 1.0);
  EXPECT_DOUBLE_EQ(rel[0], 2.0);
  EXPECT_DOUBLE_EQ(rel[1], 0.5);
  EXPECT_THROW(ipgd::rel_est_cost(tr, 0.0), ipgd::ConfigError);
  EXPECT_THROW(ipgd::rel_est_cost(tr, -1.0), ipgd::ConfigError);
}

TEST(IterationsToTol, ImmediateWhenAlwaysBelow) {
  std::vector<double> zeros(12, 0.0);
  auto it = ipgd::iterations_to_tol(zeros, 1e-3);
  ASSERT_TRUE(it.has_value());
  EXPECT_EQ(*it, 0);
}

TEST(IterationsToTol, NeverReached) {
  std::vector<double> ones(40, 1.0);
  EXPECT_FALSE(ipgd::iterations_to_tol(ones, 1e-3).has_value());
}

TEST(IterationsToTol, FirstIndexOfSustainedWindow) {
  std::vector<double> s{1.0, 0.5, 2e-3, 1e-3};  // dips, then re-enters
  s.insert(s.end(), 10, 5e-4);
  // window of 10 starting at index 3 (the 1e-3 entry counts)
  auto it = ipgd::iterations_to_tol(s, 1e-3);
  ASSERT_TRUE(it.has_value());
  EXPECT_EQ(*it, 3);
}

TEST(IterationsToTol, TransientDipDoesNotCount) {
  std::vector<double> s(30, 1.0);
  for (int i = 5; i < 9; ++i) s[i] = 1e-6;  // only four compliant steps
  EXPECT_FALSE(ipgd::iterations_to_tol(s, 1e-3).has_value());
}

TEST(FinalSse, ConstantSeriesSettlesEarly) {
  std::vector<double> s(80, 0.037);
  auto res = ipgd::final_sse(s, false);
  EXPECT_TRUE(res.settled);
  EXPECT_DOUBLE_EQ(res.value, 0.037);
}

TEST(FinalSse, DivergedIsInfinite) {
  auto res = ipgd::final_sse({1.0, 2.0}, true);
  EXPECT_TRUE(res.diverged);
  EXPECT_TRUE(std::isinf(res.value));
}

TEST(FinalSse, DecayThenPlateau) {
  std::vector<double> s;
  for (int t = 0; t < 30; ++t) s.push_back(std::pow(2.0, -t));
  s.insert(s.end(), 60, 3e-3);
  auto res = ipgd::final_sse(s, false);
  EXPECT_TRUE(res.settled);
  EXPECT_DOUBLE_EQ(res.value, 3e-3);
}

TEST(FinalSse, NeverSettledReportsLastValue) {
  std::vector<double> s;
  for (int t = 0; t < 40; ++t) s.push_back(t * 0.01);  // steps of 1e-2
  auto res = ipgd::final_sse(s, false);
  EXPECT_FALSE(res.settled);
  EXPECT_DOUBLE_EQ(res.value, 0.39);
}

TEST(TestError, PerfectAndDegenerateClassifiers) {
  Mat a(4, 2);
  a << 1, 0, 2, 0, -1, 0, -3, 0;
  Vec b(4);
  b << 1, 1, -1, -1;
  Vec good(2);
  good << 1.0, 0.0;
  EXPECT_DOUBLE_EQ(ipgd::test_error(good, a, b), 0.0);
  EXPECT_DOUBLE_EQ(ipgd::test_error(Vec::Zero(2), a, b), 1.0);  // all ties
  Vec flipped = -good;
  EXPECT_DOUBLE_EQ(ipgd::test_error(flipped, a, b), 1.0);
}

TEST(TestError, ShapeMismatchThrows) {
  EXPECT_THROW(ipgd::test_error(Vec::Zero(3), Mat::Zero(2, 2), Vec::Zero(2)),
               ipgd::ConfigError);
}

TEST(TraceCsv, RoundTrip) {
  RunTrace tr;
  tr.t = {0, 1, 2};
  tr.err = {2.0, 1.0, 0.5};
  tr.cost = {4.0, 1.0, 0.25};
  tr.alpha = {0.0, 1.99, 1.99};
  tr.noise_flag = {0, 1, 1};
  tr.aux_rounds = {0, 0, 0};
  const std::string path = (scratch_dir() / "trace.csv").string();
  ipgd::write_trace_csv(path, tr);
  auto back = ipgd::read_trace_csv(path);
  ASSERT_EQ(back.t, tr.t);
  EXPECT_EQ(back.rel_error, (std::vector<double>{1.0, 0.5, 0.25}));
  EXPECT_EQ(back.cost, tr.cost);
  EXPECT_EQ(back.alpha, tr.alpha);
  EXPECT_EQ(back.noise_flag, tr.noise_flag);
}

TEST(TraceCsv, HeaderIsStable) {
  const std::string path = (scratch_dir() / "hdr.csv").string();
  RunTrace tr;
  tr.t = {0};
  tr.err = {1.0};
  tr.cost = {1.0};
  tr.alpha = {0.0};
  tr.noise_flag = {0};
  tr.aux_rounds = {0};
  ipgd::write_trace_csv(path, tr);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,rel_error,cost,alpha,noise_flag");
}

TEST(TraceCsv, WrongHeaderRejected) {
  const std::string path = (scratch_dir() / "bad.csv").string();
  std::ofstream(path) << "time,err\n0,1\n";
  EXPECT_THROW(ipgd::read_trace_csv(path), ipgd::ConfigError);
}

TEST(SummaryCsv, EmptyAndCensoredRows) {
  const std::string path = (scratch_dir() / "summary.csv").string();
  ipgd::write_summary_csv(path, {});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "dataset,optimizer,eps_tol,iterations_to_tol,sse,test_error");
  EXPECT_FALSE(std::getline(in, line));

  ipgd::SummaryRow hit{"nqm", "ipg", 1e-3, 76, 10000, 1e-4, NAN};
  ipgd::SummaryRow censored{"nqm", "gd", 1e-3, std::nullopt, 10000, 0.2, NAN};
  ipgd::write_summary_csv(path, {hit, censored});
  std::ifstream in2(path);
  std::getline(in2, line);
  std::getline(in2, line);
  EXPECT_NE(line.find("nqm,ipg,"), std::string::npos);
  EXPECT_NE(line.find(",76,"), std::string::npos);
  std::getline(in2, line);
  EXPECT_NE(line.find(">10000"), std::string::npos);
  auto j = ipgd::summary_json({censored});
  EXPECT_EQ(j[0]["iterations_to_tol"], ">10000");
}

TEST(ScheduleSpec, ParsesPlainNumberAndTaggedForms) {
  auto c = ipgd::ScheduleSpec::from_json(nlohmann::json(1.99));
  EXPECT_DOUBLE_EQ(c.build().at(0), 1.99);
  EXPECT_DOUBLE_EQ(c.build().at(500), 1.99);
  auto it = ipgd::ScheduleSpec::from_json({{"kind", "inv_t"}, {"c", 1.0}});
  EXPECT_DOUBLE_EQ(it.build().at(0), 1.0);
  EXPECT_DOUBLE_EQ(it.build().at(9), 0.1);
  auto is = ipgd::ScheduleSpec::from_json({{"kind", "inv_sqrt_t"}, {"c", 1.0}});
  EXPECT_DOUBLE_EQ(is.build().at(3), 0.5);
  EXPECT_THROW(ipgd::ScheduleSpec::from_json({{"kind", "warmup"}}),
               ipgd::ConfigError);
}

TEST(ExperimentConfig, JsonRoundTripPreservesFields) {
  ipgd::ExperimentConfig c;
  c.problem = ipgd::ProblemKind::kMnist;
  c.mode = ipgd::RunMode::kMiniBatch;
  c.params = ipgd::preset_params(c.problem, c.mode);
  c.optimizer = OptimizerKind::kNag;
  c.seed = 123;
  c.max_iter = 321;
  c.eps_tol = 2e-3;
  c.cost_scale = 0.25;
  c.n_select = 500;
  c.data_dir = "/tmp/somewhere";
  c.name = "round-trip";
  auto back = ipgd::ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.problem, c.problem);
  EXPECT_EQ(back.mode, c.mode);
  EXPECT_EQ(back.optimizer, c.optimizer);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.max_iter, c.max_iter);
  EXPECT_DOUBLE_EQ(back.eps_tol, c.eps_tol);
  EXPECT_DOUBLE_EQ(back.cost_scale, c.cost_scale);
  EXPECT_EQ(back.n_select, c.n_select);
  EXPECT_EQ(back.data_dir, c.data_dir);
  EXPECT_EQ(back.name, c.name);
  EXPECT_DOUBLE_EQ(back.params.delta, c.params.delta);
  EXPECT_DOUBLE_EQ(back.params.beta, c.params.beta);
  EXPECT_DOUBLE_EQ(back.params.hbm_alpha, c.params.hbm_alpha);
  EXPECT_EQ(back.params.bfgs_backtrack, c.params.bfgs_backtrack);
}

TEST(ExperimentConfig, PresetAppliedThenOverridden) {
  nlohmann::json j;
  j["problem"] = "nqm";
  j["params"] = {{"gd", {{"alpha", 0.42}}}};
  auto c = ipgd::ExperimentConfig::from_json(j);
  EXPECT_DOUBLE_EQ(c.params.gd_alpha, 0.42);
  // untouched preset entries survive the partial override
  EXPECT_DOUBLE_EQ(c.params.nag_alpha, 1.33);
  EXPECT_DOUBLE_EQ(c.params.hbm_beta, 0.96);
  EXPECT_TRUE(c.params_explicit);
}

TEST(ExperimentConfig, ProcessNoisePresetIntervals) {
  nlohmann::json j;
  j["problem"] = "mnist";
  j["mode"] = "process_noise";
  auto c = ipgd::ExperimentConfig::from_json(j);
  EXPECT_DOUBLE_EQ(c.noise_lo, 0.0);
  EXPECT_DOUBLE_EQ(c.noise_hi, 2.3e-4);
  j["problem"] = "cifar10";
  auto c2 = ipgd::ExperimentConfig::from_json(j);
  EXPECT_DOUBLE_EQ(c2.noise_hi, 1e-4);
}

TEST(ExperimentConfig, InitStdDefaultsPerFamily) {
  ipgd::ExperimentConfig c;
  c.problem = ipgd::ProblemKind::kNqm;
  EXPECT_DOUBLE_EQ(c.resolved_init_std(), 1.0);
  c.problem = ipgd::ProblemKind::kMnist;
  EXPECT_DOUBLE_EQ(c.resolved_init_std(), std::sqrt(0.1));
  c.init_std = 0.5;
  EXPECT_DOUBLE_EQ(c.resolved_init_std(), 0.5);
}

TEST(RunExperiment, QuadraticEndToEndDeterministic) {
  ipgd::ExperimentConfig c;
  c.problem = ipgd::ProblemKind::kQuadratic;
  c.quad_diag = {1.0, 0.5, 0.25, 0.125};
  c.m = 2;
  c.optimizer = OptimizerKind::kIpg;
  c.params = ipgd::preset_params(c.problem, c.mode);
  c.params.ipg_alpha = ipgd::ScheduleSpec::constant(0.9);
  c.max_iter = 300;
  c.seed = 5;
  auto a = ipgd::run_experiment(c);
  auto b = ipgd::run_experiment(c);
  EXPECT_EQ(a.trace.status, RunStatus::kConverged);
  EXPECT_TRUE(a.trace.x_final == b.trace.x_final);
  EXPECT_EQ(a.trace.err, b.trace.err);
  const std::string pa = (scratch_dir() / "exp_a.csv").string();
  const std::string pb = (scratch_dir() / "exp_b.csv").string();
  ipgd::write_trace_csv(pa, a.trace);
  ipgd::write_trace_csv(pb, b.trace);
  std::ifstream fa(pa), fb(pb);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(ReferenceMinimum, RecoversQuadraticOptimum) {
  SeededRng rng(17, 0);
  Mat f(12, 4);
  for (int i = 0; i < 48; ++i) f.data()[i] = rng.normal(0, 1);
  Vec b = ipgd::draw_normal(rng, 0, 1, 4);
  auto cost = std::make_shared<ipgd::QuadraticCost>(f, b);
  std::vector<AgentState> agents;
  agents.emplace_back(0, cost, SeededRng(1, 1), 1, 0.0);
  Vec x_star = (f.transpose() * f).ldlt().solve(b);
  auto [fmin, xmin] = ipgd::reference_minimum(agents, Vec::Zero(4), 1e-10);
  EXPECT_LT((xmin - x_star).norm(), 1e-6);
  EXPECT_NEAR(fmin, cost->value(x_star), 1e-10 + std::abs(cost->value(x_star)) * 1e-10);
}

}  // namespace
