#pragma once

#include <span>
#include <string>

#include "beamscope/channel.hpp"
#include "beamscope/rng.hpp"
#include "beamscope/types.hpp"

namespace beamscope {

// Pseudo-random beam-selection front end: an MxN matrix with entries
// +-1/sqrt(M), drawn once per experiment and shared by the simulator and
// every estimator.
struct SensingSystem {
  RMat a;
  int n = 0;
  int m = 0;
  double noise_var = 0.0;  // nominal sigma_n^2 of the current experiment
};

SensingSystem gen_sensing(int n, int m, SplitRng& rng);

inline double snr_db_to_noise_var(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

// y = A*(hbeam + n_raw), n_raw ~ CN(0, sigma_n^2 I_N). Passing the raw noise
// through the selector keeps the cross-correlations of the effective noise.
CVec measure(const SensingSystem& sys, const CVec& hbeam, double snr_db, SplitRng& rng);

struct SnrPolicy {
  double lo_db = 0.0;
  double hi_db = 0.0;

  static SnrPolicy single(double db) { return {db, db}; }
  static SnrPolicy range(double lo_db, double hi_db) { return {lo_db, hi_db}; }

  bool is_single() const { return lo_db == hi_db; }
  double draw(SplitRng& rng) const { return is_single() ? lo_db : rng.uniform(lo_db, hi_db); }
};

// Columns are samples: y is MxD, truth (the noiseless beamspace labels) NxD.
struct MeasurementBatch {
  CMat y;
  CMat truth;
  RVec snr_db;

  int m() const { return static_cast<int>(y.rows()); }
  int n() const { return static_cast<int>(truth.rows()); }
  int size() const { return static_cast<int>(y.cols()); }
};

// Channels are consumed round-robin when count exceeds the pool.
MeasurementBatch build_dataset(std::span<const ChannelSample> channels, const SensingSystem& sys,
                               SnrPolicy policy, int count, SplitRng& rng);

// Binary dataset file: "BSDSET1\0", u64 n, u64 m, u64 count, then per sample
// y (2m doubles), truth (2n doubles), snr_db (1 double), little-endian.
void save_dataset(const std::string& path, const MeasurementBatch& batch);
MeasurementBatch load_dataset(const std::string& path);

}  // namespace beamscope
