#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "beamscope/eval.hpp"
#include "beamscope/oracle.hpp"

namespace fs = std::filesystem;
using namespace beamscope;

namespace {

struct GlobalArgs {
  std::string config;
  std::int64_t seed = -1;  // -1: unset
  int threads = 1;
};

std::uint64_t resolve_seed(const GlobalArgs& g, const ExperimentConfig* cfg) {
  if (g.seed >= 0) return static_cast<std::uint64_t>(g.seed);
  if (cfg != nullptr) return cfg->seed;
  if (const char* env = std::getenv("BEAMSCOPE_SEED")) return std::strtoull(env, nullptr, 10);
  return 1;
}

ExperimentConfig load_config(const GlobalArgs& g) {
  if (g.config.empty())
    throw std::runtime_error("this subcommand needs --config <path>");
  ExperimentConfig cfg = ExperimentConfig::from_file(g.config);
  if (g.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(g.seed);
  } else if (const char* env = std::getenv("BEAMSCOPE_SEED")) {
    // config seed wins over the environment fallback only when present
    ConfigTree tree = ConfigTree::parse_file(g.config);
    if (!tree.has("seeds.master")) cfg.seed = std::strtoull(env, nullptr, 10);
  }
  return cfg;
}

std::vector<ChannelSample> make_channel_pool(const ExperimentConfig& cfg, SplitRng rng, int count,
                                             const char* stream) {
  if (!cfg.channel_file.empty()) return import_external_channels(cfg.channel_file, cfg.geometry);
  SplitRng sub = rng.split(stream);
  return sample_sv_channels(cfg.geometry, cfg.num_paths, count, sub);
}

int cmd_generate(const GlobalArgs& g, const std::string& channels_out) {
  ExperimentConfig cfg = load_config(g);
  fs::create_directories(cfg.output_dir);
  SplitRng root(cfg.seed);
  SplitRng sensing_rng = root.split("sensing");
  const SensingSystem sys = gen_sensing(cfg.geometry.size(), cfg.m, sensing_rng);

  const auto train_pool = make_channel_pool(cfg, root, cfg.train_size, "train-channels");
  const auto val_pool = make_channel_pool(cfg, root, cfg.val_size, "val-channels");
  if (!channels_out.empty()) {
    export_channels(channels_out, train_pool);
    std::cout << "wrote " << train_pool.size() << " channel records to " << channels_out << "\n";
  }

  struct Job {
    std::string tag;
    SnrPolicy policy;
  };
  std::vector<Job> jobs;
  if (cfg.dual_snr) {
    jobs = {{"train_low", SnrPolicy::range(0, 10)},
            {"val_low", SnrPolicy::range(0, 10)},
            {"train_high", SnrPolicy::range(10, 20)},
            {"val_high", SnrPolicy::range(10, 20)}};
  } else {
    jobs = {{"train", cfg.train_snr}, {"val", cfg.train_snr}};
  }
  for (const Job& job : jobs) {
    const bool is_val = job.tag.rfind("val", 0) == 0;
    const auto& pool = is_val ? val_pool : train_pool;
    const int count = is_val ? cfg.val_size : cfg.train_size;
    SplitRng rng = root.split("dataset").split(job.tag);
    const MeasurementBatch batch = build_dataset(pool, sys, job.policy, count, rng);
    const std::string path = cfg.dataset_path(job.tag);
    save_dataset(path, batch);
    std::cout << "wrote " << count << " samples to " << path << "\n";
  }
  return 0;
}

int cmd_train(const GlobalArgs& g) {
  ExperimentConfig cfg = load_config(g);
  fs::create_directories(cfg.output_dir);
  SplitRng root(cfg.seed);
  SplitRng sensing_rng = root.split("sensing");
  const SensingSystem sys = gen_sensing(cfg.geometry.size(), cfg.m, sensing_rng);

  const auto load = [&](const std::string& tag) {
    const std::string path = cfg.dataset_path(tag);
    if (!fs::exists(path))
      throw std::runtime_error("dataset " + path + " not found; run the generate subcommand");
    return load_dataset(path);
  };

  TrainLogger logger = [](const std::string& line) { std::cerr << line << "\n"; };
  for (const EstimatorSpec& est : cfg.estimators) {
    if (est.kind != EstimatorKind::Lamp && est.kind != EstimatorKind::GmLamp) continue;
    const NetKind kind = est.kind == EstimatorKind::Lamp ? NetKind::Lamp : NetKind::GmLamp;
    TrainConfig tc = cfg.train;
    tc.seed = SplitRng(cfg.seed).split("train-" + est.name).next_u64();
    if (cfg.dual_snr) {
      for (const char* tag : {"low", "high"}) {
        const MeasurementBatch train = load(std::string("train_") + tag);
        const MeasurementBatch val = load(std::string("val_") + tag);
        TrainConfig sub = tc;
        sub.seed = SplitRng(tc.seed).split(tag).next_u64();
        std::cerr << "training " << est.name << " (" << tag << " SNR range)\n";
        auto [net, report] =
            train_layer_by_layer(sys, train, val, kind, est.layers, sub, est.nc, {}, logger);
        const std::string ckpt = cfg.checkpoint_path(est, std::string("_") + tag);
        save_checkpoint(ckpt, net, sys.n, sys.m);
        save_train_report_csv(
            (fs::path(cfg.output_dir) / ("report_" + est.name + "_" + tag + ".csv")).string(),
            report);
        std::cout << "wrote " << ckpt << "\n";
      }
    } else {
      const MeasurementBatch train = load("train");
      const MeasurementBatch val = load("val");
      std::cerr << "training " << est.name << "\n";
      auto [net, report] =
          train_layer_by_layer(sys, train, val, kind, est.layers, tc, est.nc, {}, logger);
      const std::string ckpt = cfg.checkpoint_path(est, "");
      save_checkpoint(ckpt, net, sys.n, sys.m);
      save_train_report_csv((fs::path(cfg.output_dir) / ("report_" + est.name + ".csv")).string(),
                            report);
      std::cout << "wrote " << ckpt << "\n";
    }
  }
  return 0;
}

int cmd_evaluate(const GlobalArgs& g, bool timing) {
  ExperimentConfig cfg = load_config(g);
  fs::create_directories(cfg.output_dir);
  SweepOptions opts;
  opts.threads = g.threads;
  opts.timing = timing;
  const ExperimentResult result = run_sweep(cfg, opts);
  export_csv(result, cfg.results_path());
  std::cout << "estimator   snr_db   nmse_db\n";
  for (const ResultRow& row : result.rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-10s %7.4g %9.4f\n", row.estimator.c_str(), row.snr_db,
                  row.nmse_db);
    std::cout << buf;
  }
  std::cout << "wrote " << cfg.results_path() << "\n";
  return 0;
}

int cmd_count(const GlobalArgs& g) {
  int n = 256, m = 128, t_amp = 10, t_net = 8, s = 24, nc = 4;
  if (!g.config.empty()) {
    const ExperimentConfig cfg = load_config(g);
    n = cfg.geometry.size();
    m = cfg.m;
    for (const EstimatorSpec& est : cfg.estimators) {
      if (est.kind == EstimatorKind::Omp) s = est.sparsity;
      if (est.kind == EstimatorKind::Amp) t_amp = est.iterations;
      if (est.kind == EstimatorKind::Lamp) t_net = est.layers;
      if (est.kind == EstimatorKind::GmLamp) nc = est.nc;
    }
  }
  char buf[96];
  std::cout << "complex multiplications per estimate (N=" << n << ", M=" << m << ")\n";
  std::snprintf(buf, sizeof buf, "%-8s S=%-3d %12lld\n", "omp", s,
                static_cast<long long>(count_multiplies(EstimatorKind::Omp, n, m, s)));
  std::cout << buf;
  std::snprintf(buf, sizeof buf, "%-8s T=%-3d %12lld\n", "amp", t_amp,
                static_cast<long long>(count_multiplies(EstimatorKind::Amp, n, m, t_amp)));
  std::cout << buf;
  std::snprintf(buf, sizeof buf, "%-8s T=%-3d %12lld\n", "lamp", t_net,
                static_cast<long long>(count_multiplies(EstimatorKind::Lamp, n, m, t_net)));
  std::cout << buf;
  std::snprintf(buf, sizeof buf, "%-8s T=%-3d %12lld (Nc=%d)\n", "gmlamp", t_net,
                static_cast<long long>(count_multiplies(EstimatorKind::GmLamp, n, m, t_net, nc)),
                nc);
  std::cout << buf;
  return 0;
}

int cmd_oracle(const GlobalArgs& g, int cases) {
  SplitRng rng(resolve_seed(g, nullptr));
  bool all_ok = true;
  const auto report = [&](const char* name, bool ok, double worst, double tol) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "  worst=" << worst << "  tol=" << tol
              << "\n";
    all_ok = all_ok && ok;
  };

  // mixture posterior mean against quadrature
  {
    double worst = 0;
    for (int c = 0; c < cases; ++c) {
      const int nc = (c % 3 == 0) ? 1 : (c % 3 == 1) ? 2 : 4;
      GmParams theta;
      theta.weights_raw = RVec::Zero(nc);
      theta.means = CVec::Zero(nc);
      theta.log_vars = RVec::Zero(nc);
      for (int k = 0; k < nc; ++k) {
        theta.weights_raw(k) = rng.uniform(-1, 1);
        theta.means(k) = cx(rng.uniform(-1, 1), rng.uniform(-1, 1));
        theta.log_vars(k) = rng.uniform(-4, 1);
      }
      const double sigma2 = std::exp(rng.uniform(-3, 0.5));
      const cx r = cx(rng.uniform(-2, 2), rng.uniform(-2, 2));
      const cx closed = gm_shrinkage(r, theta, sigma2);
      const cx quad = oracle::gm_posterior_oracle(r, theta, sigma2);
      worst = std::max(worst, oracle::rel_err(closed, quad));
    }
    report("gm shrinkage vs quadrature", worst <= 1e-6, worst, 1e-6);
  }

  // Wirtinger derivatives against finite differences
  {
    double worst = 0;
    for (int c = 0; c < cases; ++c) {
      const double lambda = rng.uniform(0.2, 2.0);
      const double sigma2 = std::exp(rng.uniform(-2, 1));
      cx r(rng.uniform(-3, 3), rng.uniform(-3, 3));
      if (soft_threshold_on_boundary(r, lambda, sigma2) ||
          std::abs(std::abs(r) - lambda * std::sqrt(sigma2)) < 1e-3)
        continue;
      const ShrinkDerivs d = soft_threshold_derivs(r, lambda, sigma2);
      const auto [fdr, fdrc] = oracle::wirtinger_fd(
          [&](cx z) { return soft_threshold(z, lambda, sigma2); }, r);
      worst = std::max({worst, oracle::rel_err(d.d_r, fdr), oracle::rel_err(d.d_rconj, fdrc)});
    }
    report("soft threshold derivatives vs fd", worst <= 1e-5, worst, 1e-5);
  }
  {
    double worst = 0;
    for (int c = 0; c < cases; ++c) {
      const int nc = (c % 2 == 0) ? 2 : 4;
      GmParams theta;
      theta.weights_raw = RVec::Zero(nc);
      theta.means = CVec::Zero(nc);
      theta.log_vars = RVec::Zero(nc);
      for (int k = 0; k < nc; ++k) {
        theta.weights_raw(k) = rng.uniform(-1, 1);
        theta.means(k) = cx(rng.uniform(-1, 1), rng.uniform(-1, 1));
        theta.log_vars(k) = rng.uniform(-3, 1);
      }
      const double sigma2 = std::exp(rng.uniform(-2, 0.5));
      const cx r = cx(rng.uniform(-2, 2), rng.uniform(-2, 2));
      const ShrinkDerivs d = gm_shrinkage_derivs(r, theta, sigma2);
      const auto [fdr, fdrc] =
          oracle::wirtinger_fd([&](cx z) { return gm_shrinkage(z, theta, sigma2); }, r);
      worst = std::max({worst, oracle::rel_err(d.d_r, fdr), oracle::rel_err(d.d_rconj, fdrc)});
    }
    report("gm shrinkage derivatives vs fd", worst <= 1e-5, worst, 1e-5);
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beamspace channel estimation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags are accepted after the subcommand too

  GlobalArgs g;
  app.add_option("--config", g.config, "experiment config file");
  app.add_option("--seed", g.seed, "override the experiment seed");
  app.add_option("--threads", g.threads, "worker threads for evaluation")->check(CLI::Range(1, 256));

  std::string channels_out;
  bool timing = false;
  int oracle_cases = 200;

  CLI::App* c_gen = app.add_subcommand("generate", "simulate channels and write datasets");
  c_gen->add_option("--channels-out", channels_out, "also export the channel pool");
  CLI::App* c_train = app.add_subcommand("train", "layer-by-layer training of the unfolded networks");
  CLI::App* c_eval = app.add_subcommand("evaluate", "NMSE sweep over the SNR grid, export CSV");
  c_eval->add_flag("--timing", timing, "record wall-clock per row (breaks byte-reproducibility)");
  CLI::App* c_oracle = app.add_subcommand("oracle", "run the shrinkage and derivative oracle suites");
  c_oracle->add_option("--cases", oracle_cases, "random cases per suite");
  CLI::App* c_count = app.add_subcommand("count", "complexity table of the configured estimators");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (c_gen->parsed()) return cmd_generate(g, channels_out);
    if (c_train->parsed()) return cmd_train(g);
    if (c_eval->parsed()) return cmd_evaluate(g, timing);
    if (c_oracle->parsed()) return cmd_oracle(g, oracle_cases);
    if (c_count->parsed()) return cmd_count(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
