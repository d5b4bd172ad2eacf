#include "beamscope/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

namespace beamscope {

double nmse(const CMat& estimates, const CMat& truths) {
  if (estimates.rows() != truths.rows() || estimates.cols() != truths.cols())
    throw std::invalid_argument("nmse: shape mismatch");
  if (truths.cols() == 0) throw std::invalid_argument("nmse: empty batch");
  const double denom = truths.squaredNorm();
  if (denom == 0.0) throw std::invalid_argument("nmse: zero total truth energy");
  return (estimates - truths).squaredNorm() / denom;
}

double nmse_db(double linear) {
  if (linear <= 0.0) return kNmseFloorDb;
  return std::max(10.0 * std::log10(linear), kNmseFloorDb);
}

namespace {

EstimatorKind kind_from_name(const std::string& name) {
  if (name == "omp") return EstimatorKind::Omp;
  if (name == "amp") return EstimatorKind::Amp;
  if (name == "lamp") return EstimatorKind::Lamp;
  if (name == "gmlamp") return EstimatorKind::GmLamp;
  throw std::runtime_error("config: unknown estimator '" + name + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_tree(const ConfigTree& tree) {
  ExperimentConfig cfg;
  cfg.schema_version = static_cast<int>(tree.require_int("schema_version"));
  if (cfg.schema_version != 1)
    throw std::runtime_error("config: unsupported schema_version " +
                             std::to_string(cfg.schema_version));

  const std::string kind = tree.get_string("geometry.kind", "ula");
  const double spacing = tree.get_double("geometry.spacing_over_lambda", 0.5);
  if (kind == "ula") {
    cfg.geometry = ArrayGeometry::ula(static_cast<int>(tree.require_int("geometry.n")), spacing);
  } else if (kind == "upa") {
    cfg.geometry = ArrayGeometry::upa(static_cast<int>(tree.require_int("geometry.n1")),
                                      static_cast<int>(tree.require_int("geometry.n2")), spacing);
  } else {
    throw std::runtime_error("config: geometry.kind must be \"ula\" or \"upa\"");
  }

  cfg.m = static_cast<int>(tree.require_int("system.m"));
  cfg.num_paths = static_cast<int>(tree.get_int("system.num_paths", 3));
  cfg.k_users = static_cast<int>(tree.get_int("system.k_users", 16));
  if (cfg.m < 1 || cfg.m > cfg.geometry.size())
    throw std::runtime_error("config: need 1 <= m <= n");

  cfg.channel_file = tree.get_string("data.channel_file", "");
  cfg.train_size = static_cast<int>(tree.get_int("data.train_size", 20000));
  cfg.val_size = static_cast<int>(tree.get_int("data.val_size", 2000));
  cfg.test_size = static_cast<int>(tree.get_int("data.test_size", 2000));
  if (cfg.train_size < 1 || cfg.val_size < 1 || cfg.test_size < 1)
    throw std::runtime_error("config: dataset sizes must be >= 1");
  cfg.train_snr = SnrPolicy::range(tree.get_double("data.train_snr_lo_db", 0.0),
                                   tree.get_double("data.train_snr_hi_db", 10.0));
  cfg.dual_snr = tree.get_bool("data.dual_snr", false);

  cfg.snr_grid_db = tree.get_double_array("eval.snr_grid_db", {0, 5, 10, 15, 20});
  if (cfg.snr_grid_db.empty()) throw std::runtime_error("config: eval.snr_grid_db is empty");
  if (!std::is_sorted(cfg.snr_grid_db.begin(), cfg.snr_grid_db.end()))
    throw std::runtime_error("config: eval.snr_grid_db must be sorted");

  for (const char* name : {"omp", "amp", "lamp", "gmlamp"}) {
    const std::string prefix = std::string("estimators.") + name;
    if (!tree.has_section(prefix) && !tree.has(prefix + ".enabled")) continue;
    if (!tree.get_bool(prefix + ".enabled", true)) continue;
    EstimatorSpec est;
    est.name = name;
    est.kind = kind_from_name(name);
    est.sparsity = static_cast<int>(tree.get_int(prefix + ".sparsity", 24));
    est.iterations = static_cast<int>(tree.get_int(prefix + ".iterations", 10));
    est.lambda = tree.get_double(prefix + ".lambda", 1.1402);
    est.layers = static_cast<int>(tree.get_int(prefix + ".layers", 8));
    est.nc = static_cast<int>(tree.get_int(prefix + ".components", 4));
    est.checkpoint = tree.get_string(prefix + ".checkpoint", name);
    cfg.estimators.push_back(std::move(est));
  }
  if (cfg.estimators.empty()) throw std::runtime_error("config: no estimators configured");

  cfg.train.batch_size = static_cast<int>(tree.get_int("train.batch_size", 128));
  cfg.train.lr_individual = tree.get_double("train.lr_individual", 1e-3);
  cfg.train.lr_joint = tree.get_double_array("train.lr_joint", {5e-4, 1e-4, 1e-5});
  cfg.train.patience = static_cast<int>(tree.get_int("train.patience", 3));
  cfg.train.max_steps = static_cast<int>(tree.get_int("train.max_steps", 2000));
  cfg.train.detach_sigma2 = tree.get_bool("train.detach_sigma2", false);
  cfg.train.detach_onsager = tree.get_bool("train.detach_onsager", false);
  if (cfg.train.batch_size < 1 || cfg.train.lr_individual <= 0 || cfg.train.lr_joint.empty())
    throw std::runtime_error("config: invalid train section");

  cfg.seed = static_cast<std::uint64_t>(tree.get_int("seeds.master", 1));
  cfg.output_dir = tree.get_string("output.dir", "out");
  cfg.results_csv = tree.get_string("output.results_csv", "results.csv");
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_tree(ConfigTree::parse_file(path));
}

std::string ExperimentConfig::dataset_path(const std::string& tag) const {
  return (std::filesystem::path(output_dir) / (tag + ".bsds")).string();
}

std::string ExperimentConfig::checkpoint_path(const EstimatorSpec& est,
                                              const std::string& suffix) const {
  return (std::filesystem::path(output_dir) / (est.checkpoint + suffix + ".bsnet")).string();
}

std::string ExperimentConfig::results_path() const {
  return (std::filesystem::path(output_dir) / results_csv).string();
}

namespace {

struct LoadedNets {
  std::optional<DualNets> dual;
  std::optional<UnfoldedNetwork> single;

  const UnfoldedNetwork& select(double snr_db, const std::string& name) const {
    if (dual) {
      if (snr_db < 0.0 || snr_db > 20.0)
        std::cerr << name << ": SNR " << snr_db
                  << " dB outside both training ranges, clamping to the nearest network\n";
      return dual->select(snr_db);
    }
    return *single;
  }
};

LoadedNets load_networks(const ExperimentConfig& cfg, const EstimatorSpec& est) {
  LoadedNets nets;
  const std::string low = cfg.checkpoint_path(est, "_low");
  const std::string high = cfg.checkpoint_path(est, "_high");
  const std::string single = cfg.checkpoint_path(est, "");
  namespace fs = std::filesystem;
  const int n = cfg.geometry.size();
  if (fs::exists(low) && fs::exists(high)) {
    DualNets d;
    d.low = load_checkpoint(low, n, cfg.m);
    d.high = load_checkpoint(high, n, cfg.m);
    nets.dual = std::move(d);
  } else if (fs::exists(single)) {
    nets.single = load_checkpoint(single, n, cfg.m);
  } else {
    throw std::runtime_error("estimator '" + est.name + "': no checkpoint found at " + low +
                             " / " + high + " or " + single +
                             " (run the train subcommand first)");
  }
  return nets;
}

// deterministic regardless of the worker count: samples are pre-generated,
// estimation is pure, results land in preassigned columns
template <typename F>
void parallel_columns(int count, int threads, F&& work) {
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) work(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
    });
  for (std::thread& th : pool) th.join();
}

}  // namespace

ExperimentResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& opts) {
  const int n = cfg.geometry.size();
  SplitRng root(cfg.seed);

  SplitRng sensing_rng = root.split("sensing");
  SensingSystem sys = gen_sensing(n, cfg.m, sensing_rng);

  std::vector<ChannelSample> pool;
  if (!cfg.channel_file.empty()) {
    pool = import_external_channels(cfg.channel_file, cfg.geometry);
    if (static_cast<int>(pool.size()) > cfg.test_size)
      pool.erase(pool.begin(), pool.end() - cfg.test_size);
  } else {
    SplitRng ch_rng = root.split("test-channels");
    pool = sample_sv_channels(cfg.geometry, cfg.num_paths, cfg.test_size, ch_rng);
  }

  // learned estimators resolve their checkpoints up front so a missing file
  // fails before any computation
  std::map<std::string, LoadedNets> nets;
  for (const EstimatorSpec& est : cfg.estimators)
    if (est.kind == EstimatorKind::Lamp || est.kind == EstimatorKind::GmLamp)
      nets.emplace(est.name, load_networks(cfg, est));

  ExperimentResult result;
  for (std::size_t si = 0; si < cfg.snr_grid_db.size(); ++si) {
    const double snr = cfg.snr_grid_db[si];
    SplitRng noise_rng = root.split("test-noise").split(static_cast<std::uint64_t>(si));
    const MeasurementBatch batch =
        build_dataset(pool, sys, SnrPolicy::single(snr), cfg.test_size, noise_rng);

    for (const EstimatorSpec& est : cfg.estimators) {
      const auto t0 = std::chrono::steady_clock::now();
      CMat estimates(n, batch.size());
      switch (est.kind) {
        case EstimatorKind::Omp:
          parallel_columns(batch.size(), opts.threads, [&](int i) {
            estimates.col(i) = omp_estimate(sys, batch.y.col(i), est.sparsity);
          });
          break;
        case EstimatorKind::Amp: {
          const AmpConfig acfg{est.iterations, est.lambda};
          parallel_columns(batch.size(), opts.threads, [&](int i) {
            estimates.col(i) = amp_estimate(sys, batch.y.col(i), acfg).first;
          });
          break;
        }
        case EstimatorKind::Lamp:
        case EstimatorKind::GmLamp: {
          const UnfoldedNetwork& net = nets.at(est.name).select(snr, est.name);
          estimates = estimate_batch(sys, net, batch.y);
          break;
        }
      }
      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      ResultRow row;
      row.estimator = est.name;
      row.snr_db = snr;
      row.nmse_db = nmse_db(nmse(estimates, batch.truth));
      row.n_test = batch.size();
      const int t_or_s = est.kind == EstimatorKind::Omp ? est.sparsity
                         : est.kind == EstimatorKind::Amp ? est.iterations
                                                          : est.layers;
      row.multiplies = count_multiplies(est.kind, n, cfg.m, t_or_s, est.nc);
      row.wall_ms = opts.timing ? wall_ms : 0.0;
      result.rows.push_back(std::move(row));
    }
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.estimator != b.estimator) return a.estimator < b.estimator;
    return a.snr_db < b.snr_db;
  });
  return result;
}

void export_csv(const ExperimentResult& result, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw io_error("export_csv: cannot open " + path);
  f << "estimator,snr_db,nmse_db,n_test,multiplies,wall_ms\n";
  char buf[192];
  for (const ResultRow& row : result.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6g,%.6g,%lld,%lld,%.6g\n", row.estimator.c_str(),
                  row.snr_db, row.nmse_db, static_cast<long long>(row.n_test),
                  static_cast<long long>(row.multiplies), row.wall_ms);
    f << buf;
  }
  if (!f) throw io_error("export_csv: write failed for " + path);
}

}  // namespace beamscope
