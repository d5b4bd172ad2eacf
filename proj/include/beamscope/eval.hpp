#pragma once

#include <optional>
#include <string>
#include <vector>

#include "beamscope/config.hpp"
#include "beamscope/estimators.hpp"
#include "beamscope/training.hpp"
#include "beamscope/types.hpp"

namespace beamscope {

// Batch NMSE as the ratio of summed error energy to summed channel energy;
// columns are samples.
double nmse(const CMat& estimates, const CMat& truths);
double nmse_db(double linear);  // 10*log10, floored at -150 dB

constexpr double kNmseFloorDb = -150.0;

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Amp;
  std::string name;        // CSV label, also keys error messages
  int sparsity = 24;       // OMP
  int iterations = 10;     // AMP
  double lambda = 1.1402;  // AMP
  int layers = 8;          // LAMP / GM-LAMP
  int nc = 4;              // GM-LAMP
  std::string checkpoint;  // path prefix for the learned estimators
};

struct ExperimentConfig {
  int schema_version = 1;
  ArrayGeometry geometry = ArrayGeometry::ula(64);
  int m = 32;
  int num_paths = 3;
  int k_users = 16;  // metadata: orthogonal pilots make users independent
  std::string channel_file;  // when set, channels are imported instead of sampled

  int train_size = 20000;
  int val_size = 2000;
  int test_size = 2000;
  SnrPolicy train_snr = SnrPolicy::range(0.0, 10.0);
  bool dual_snr = false;

  std::vector<double> snr_grid_db = {0, 5, 10, 15, 20};
  std::vector<EstimatorSpec> estimators;

  TrainConfig train;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::string results_csv = "results.csv";

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_tree(const ConfigTree& tree);

  std::string dataset_path(const std::string& tag) const;     // <out>/<tag>.bsds
  std::string checkpoint_path(const EstimatorSpec& est, const std::string& suffix) const;
  std::string results_path() const;
};

struct ResultRow {
  std::string estimator;
  double snr_db = 0;
  double nmse_db = 0;
  std::int64_t n_test = 0;
  std::int64_t multiplies = 0;
  double wall_ms = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
};

struct SweepOptions {
  int threads = 1;
  bool timing = false;  // keep wall_ms at zero so result files stay reproducible
};

ExperimentResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& opts = {});

// Header then one row per result entry; floating columns use six significant
// digits so identical runs serialize identically.
void export_csv(const ExperimentResult& result, const std::string& path);

}  // namespace beamscope
