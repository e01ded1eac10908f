// Command-line front end: run one experiment, sweep optimizers/seeds,
// verify convergence-rate properties, or ingest/cache datasets.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "ipgd/config.hpp"
#include "ipgd/synth.hpp"
#include "ipgd/theory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long> max_iter;
  std::optional<std::string> optimizer;
};

ipgd::ExperimentConfig load_config(const std::string& path,
                                   const Overrides& ov) {
  ipgd::ExperimentConfig cfg = ipgd::ExperimentConfig::from_file(path);
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.out) cfg.out_dir = *ov.out;
  if (ov.max_iter) cfg.max_iter = *ov.max_iter;
  if (ov.optimizer) cfg.optimizer = ipgd::optimizer_from_name(*ov.optimizer);
  return cfg;
}

std::string run_stem(const ipgd::ExperimentConfig& cfg) {
  std::string name = cfg.name.empty()
                         ? std::string(ipgd::problem_name(cfg.problem)) + "_" +
                               ipgd::optimizer_name(cfg.optimizer) + "_s" +
                               std::to_string(cfg.seed)
                         : cfg.name;
  return (fs::path(cfg.out_dir) / name).string();
}

void emit_run(const ipgd::ExperimentResult& res) {
  fs::create_directories(res.config.out_dir);
  const std::string stem = run_stem(res.config);
  ipgd::write_trace_csv(stem + ".csv", res.trace);
  json side;
  side["config"] = res.config.to_json();
  side["status"] = ipgd::status_name(res.trace.status);
  side["iterations"] = res.trace.iterations();
  side["total_rounds"] = res.trace.total_rounds;
  std::ofstream js(stem + ".json");
  js << side.dump(2) << "\n";
  std::cout << stem << ".csv  status=" << ipgd::status_name(res.trace.status)
            << " iterations=" << res.trace.iterations() << "\n";
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  ipgd::ExperimentConfig cfg = load_config(config_path, ov);
  emit_run(ipgd::run_experiment(cfg));
  return 0;
}

int cmd_sweep(const std::string& config_path, const Overrides& ov,
              std::vector<std::string> optimizers,
              std::vector<std::uint64_t> seeds) {
  ipgd::ExperimentConfig base = load_config(config_path, ov);
  if (optimizers.empty())
    optimizers = {"ipg", "gd", "nag", "hbm", "adam", "bfgs"};
  if (seeds.empty()) seeds = {base.seed};
  std::vector<ipgd::SummaryRow> rows;
  for (const auto& opt : optimizers)
    for (auto seed : seeds) {
      ipgd::ExperimentConfig cfg = base;
      cfg.optimizer = ipgd::optimizer_from_name(opt);
      cfg.seed = seed;
      cfg.name.clear();
      ipgd::ExperimentResult res = ipgd::run_experiment(cfg);
      emit_run(res);
      ipgd::SummaryRow row;
      row.dataset = res.problem.dataset_label;
      row.optimizer = opt;
      row.eps_tol = cfg.eps_tol;
      row.max_iter = cfg.max_iter;
      const bool diverged = res.trace.status == ipgd::RunStatus::kDiverged;
      if (res.problem.has_x_star) {
        auto series = ipgd::rel_est_error(res.trace);
        row.iterations = ipgd::iterations_to_tol(series, cfg.eps_tol);
        row.sse = ipgd::final_sse(res.trace.cost, diverged, cfg.sse_delta,
                                  cfg.sse_window)
                      .value;
      } else {
        // No closed-form minimizer: measure against a high-precision
        // reference minimum of the same aggregate cost.
        ipgd::ExperimentConfig ref_cfg = cfg;
        ref_cfg.mode = ipgd::RunMode::kFullBatch;
        std::vector<ipgd::AgentState> ref_agents =
            ipgd::build_agents(res.problem, ref_cfg);
        const auto [f_star, x_ref] =
            ipgd::reference_minimum(ref_agents, res.problem.x0, 1e-10);
        auto series = ipgd::rel_est_cost(res.trace, f_star);
        row.iterations = ipgd::iterations_to_tol(series, cfg.eps_tol);
        row.sse = ipgd::final_sse(series, diverged, cfg.sse_delta,
                                  cfg.sse_window)
                      .value;
      }
      if (res.problem.has_test)
        row.test_err = ipgd::test_error(res.trace.x_final, res.problem.test_a,
                                        res.problem.test_b);
      rows.push_back(std::move(row));
    }
  fs::create_directories(base.out_dir);
  const std::string spath =
      (fs::path(base.out_dir) / "summary.csv").string();
  ipgd::write_summary_csv(spath, rows);
  std::ofstream js((fs::path(base.out_dir) / "summary.json").string());
  js << ipgd::summary_json(rows).dump(2) << "\n";
  std::cout << spath << "\n";
  return 0;
}

int cmd_verify(std::uint64_t seed) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "\n";
    if (!ok) ++failures;
  };

  // Preconditioner contraction on a random PSD quadratic.
  {
    ipgd::SeededRng rng(seed, 1);
    const Eigen::Index d = 16;
    ipgd::Mat f(d + 4, d);
    for (Eigen::Index i = 0; i < f.size(); ++i)
      f.data()[i] = rng.normal(0.0, 1.0);
    ipgd::Mat h = f.transpose() * f / f.rows();
    const double beta = 0.1;
    auto c = ipgd::quadratic_constants(h, beta);
    const double alpha = c.alpha_cap;
    ipgd::Mat shifted = h;
    shifted.diagonal().array() += beta;
    ipgd::Mat k_star = shifted.inverse();
    ipgd::Mat k = ipgd::Mat::Zero(d, d);
    std::vector<double> norms;
    for (int t = 0; t < 60; ++t) {
      norms.push_back(ipgd::spectral_norm(k - k_star));
      k -= alpha * (shifted * k - ipgd::Mat::Identity(d, d));
    }
    auto rep = ipgd::verify_linear_contraction(norms, c.rho);
    report("preconditioner-contraction", rep.ok);
  }

  // Superlinear decay of the estimate error, with a plain-gradient
  // negative control.
  {
    const Eigen::Index d = 8;
    ipgd::Vec diag(d);
    for (Eigen::Index i = 0; i < d; ++i) diag[i] = 1.0 - 0.9 * i / (d - 1);
    auto c = ipgd::quadratic_constants(ipgd::Mat(diag.asDiagonal()), 0.0);
    ipgd::SeededRng rng(seed, 2);
    ipgd::Vec x = ipgd::draw_normal(rng, 0.0, 1.0, d);
    ipgd::Vec x_gd = x;
    ipgd::Vec kdiag = ipgd::Vec::Zero(d);
    const double alpha = c.alpha_cap;
    const double alpha_gd = 2.0 / (c.lambda_max + c.lambda_min);
    std::vector<double> ipg_err, gd_err;
    for (int t = 0; t < 60; ++t) {
      ipg_err.push_back(x.norm());
      gd_err.push_back(x_gd.norm());
      x = (ipgd::Vec::Ones(d) - kdiag.cwiseProduct(diag)).cwiseProduct(x);
      kdiag += alpha * (ipgd::Vec::Ones(d) - diag.cwiseProduct(kdiag));
      x_gd = (ipgd::Vec::Ones(d) - alpha_gd * diag).cwiseProduct(x_gd);
    }
    auto sup = ipgd::verify_superlinear(ipg_err);
    auto ctl = ipgd::verify_superlinear(gd_err);
    report("superlinear-decay",
           sup.verdict == ipgd::OrderVerdict::kSuperlinear &&
               ctl.verdict == ipgd::OrderVerdict::kNotSuperlinear);
  }

  std::cout << (failures == 0 ? "verify: all checks passed"
                              : "verify: FAILURES") << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_ingest(const std::string& dataset, std::string data_dir,
               const std::string& out_stem, std::uint64_t seed,
               std::size_t n_select, bool make_fixture, int fixture_n) {
  if (data_dir.empty()) {
    if (const char* env = std::getenv("IPGD_DATA_DIR")) data_dir = env;
    else throw ipgd::ConfigError("--data-dir or IPGD_DATA_DIR required");
  }
  if (make_fixture) {
    if (dataset == "mnist")
      ipgd::synth::make_mnist_fixture(data_dir, fixture_n, fixture_n / 5, seed);
    else
      ipgd::synth::make_cifar_fixture(data_dir, fixture_n, fixture_n / 5, seed);
    std::cout << "fixture written under " << data_dir << "\n";
    if (out_stem.empty()) return 0;
  }
  ipgd::SeededRng rng(seed, 7001);
  ipgd::DesignMatrix design;
  if (dataset == "mnist") {
    auto raw = ipgd::load_mnist(data_dir, "train");
    auto sel = ipgd::select_binary(raw, 1, 5, n_select, rng);
    design = ipgd::build_design_mnist(sel);
  } else if (dataset == "cifar10") {
    auto raw = ipgd::load_cifar10(
        (fs::path(data_dir) / "data_batch_1.bin").string());
    auto sel = ipgd::select_binary(raw, 0, 1, n_select, rng);
    design = ipgd::build_design_cifar(sel);
  } else {
    throw ipgd::ConfigError("unknown dataset: " + dataset);
  }
  const std::string stem = out_stem.empty() ? dataset + "_design" : out_stem;
  if (auto dir = fs::path(stem).parent_path(); !dir.empty())
    fs::create_directories(dir);
  ipgd::write_design_cache(design, stem, seed);
  std::cout << stem << ".bin (" << design.a.rows() << "x" << design.a.cols()
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed preconditioned-gradient experiment harness"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config")
        ->required();
    sub->add_option("--seed", ov.seed, "override RNG seed");
    sub->add_option("--out", ov.out, "override output directory");
    sub->add_option("--max-iter", ov.max_iter, "override iteration budget");
  };

  auto* run = app.add_subcommand("run", "execute one configured experiment");
  add_common(run);
  run->add_option("--optimizer", ov.optimizer, "override optimizer");

  auto* sweep = app.add_subcommand("sweep", "grid over optimizers and seeds");
  add_common(sweep);
  std::vector<std::string> sweep_opts;
  std::vector<std::uint64_t> sweep_seeds;
  sweep->add_option("--optimizers", sweep_opts,
                    "optimizer names (default: all six)");
  sweep->add_option("--seeds", sweep_seeds, "seed list (default: config seed)");

  auto* verify = app.add_subcommand("verify", "convergence-rate checks");
  std::uint64_t verify_seed = 1;
  verify->add_option("--seed", verify_seed, "RNG seed");

  auto* ingest = app.add_subcommand("ingest", "decode, featurize and cache");
  std::string dataset = "mnist", data_dir, out_stem;
  std::uint64_t ingest_seed = 1;
  std::size_t n_select = 10000;
  bool make_fixture = false;
  int fixture_n = 5000;
  ingest->add_option("--dataset", dataset, "mnist or cifar10");
  ingest->add_option("--data-dir", data_dir,
                     "dataset root (default: IPGD_DATA_DIR)");
  ingest->add_option("--out", out_stem, "cache output stem");
  ingest->add_option("--seed", ingest_seed, "selection seed");
  ingest->add_option("--n-select", n_select, "instances to select");
  ingest->add_flag("--make-fixture", make_fixture,
                   "write a synthetic dataset fixture first");
  ingest->add_option("--fixture-n", fixture_n,
                     "fixture training images per class");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, ov);
    if (sweep->parsed())
      return cmd_sweep(config_path, ov, sweep_opts, sweep_seeds);
    if (verify->parsed()) return cmd_verify(verify_seed);
    if (ingest->parsed())
      return cmd_ingest(dataset, data_dir, out_stem, ingest_seed, n_select,
                        make_fixture, fixture_n);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
