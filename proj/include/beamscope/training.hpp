#pragma once

#include <functional>
#include <string>
#include <vector>

#include "beamscope/estimators.hpp"
#include "beamscope/measurement.hpp"
#include "beamscope/types.hpp"

namespace beamscope {

struct TrainConfig {
  int batch_size = 128;
  double lr_individual = 1e-3;
  std::vector<double> lr_joint = {5e-4, 1e-4, 1e-5};
  int patience = 3;          // validation evaluations without improvement
  int max_steps = 2000;      // batch updates per optimization phase
  std::uint64_t seed = 1;
  double improve_rel = 1e-5;

  // Full-graph gradients by default: sigma_t^2 and the Onsager coefficients
  // stay inside the differentiated graph unless detached here.
  bool detach_sigma2 = false;
  bool detach_onsager = false;
};

enum class LossKind { Linear, Nonlinear };

struct LossSpec {
  LossKind kind = LossKind::Nonlinear;
  int layer = 0;  // prefix of the network ending at this layer
};

struct TrainMask {
  std::vector<char> b;
  std::vector<char> shrink;

  static TrainMask none(int depth) { return {std::vector<char>(depth, 0), std::vector<char>(depth, 0)}; }
  bool any() const;
};

// Real-valued gradients in the raw (unconstrained) parameterization. B_t
// gradients follow the in-memory complex layout (2*N*M doubles); shrinkage
// gradients are [lambda] for LAMP and [logits, mean re/im pairs, log-vars]
// for GM-LAMP. Unmasked variables stay empty.
struct GradientSet {
  std::vector<RVec> b;
  std::vector<RVec> shrink;
};

double loss_value(const SensingSystem& sys, const UnfoldedNetwork& net,
                  const MeasurementBatch& batch, LossSpec spec);
double loss_linear(const SensingSystem& sys, const UnfoldedNetwork& net,
                   const MeasurementBatch& batch, int layer);
double loss_nonlinear(const SensingSystem& sys, const UnfoldedNetwork& net,
                      const MeasurementBatch& batch, int layer);

// Exact reverse-mode gradients of the selected loss over the masked
// variables; complex parameters are reported as real/imaginary partials.
std::pair<double, GradientSet> loss_and_grad(const SensingSystem& sys, const UnfoldedNetwork& net,
                                             const MeasurementBatch& batch, LossSpec spec,
                                             const TrainMask& mask, const TrainConfig& cfg);

// raw-parameter views used by the optimizer and the gradient checks
RVec get_shrink_raw(const LayerParams& layer);
void set_shrink_raw(LayerParams& layer, const RVec& raw);
int shrink_raw_size(const LayerParams& layer);

struct AdamState {
  std::vector<RVec> m_b, v_b, m_shrink, v_shrink;
  std::int64_t step = 0;

  static AdamState init(const UnfoldedNetwork& net, const TrainMask& mask, int n, int m);
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_step(UnfoldedNetwork& net, const GradientSet& grads, AdamState& state, double lr,
               const TrainMask& mask, const AdamParams& ap = {});

struct TrainRow {
  std::int64_t step = 0;
  std::string phase;
  double train_loss = 0;
  double val_loss = 0;
};

struct PhaseSummary {
  std::string phase;
  int sub_procedure = 0;  // the layer index t of Algorithm-style growth
  double final_val = 0;
  std::int64_t steps = 0;
};

struct TrainReport {
  std::vector<TrainRow> rows;
  std::vector<PhaseSummary> phases;
  double wall_seconds = 0;
};

void save_train_report_csv(const std::string& path, const TrainReport& report);

class training_diverged : public std::runtime_error {
 public:
  training_diverged(const std::string& what, TrainReport r)
      : std::runtime_error(what), report(std::move(r)) {}
  TrainReport report;
};

// phase-start hook: (phase name, sub-procedure index, current network)
using TrainObserver = std::function<void(const std::string&, int, const UnfoldedNetwork&)>;
using TrainLogger = std::function<void(const std::string&)>;

// Greedy layer-by-layer schedule: per appended layer, individual linear
// training of B_t, joint linear refinement, individual shrinkage training,
// joint refinement; joint phases walk down the learning-rate ladder when the
// validation loss stalls.
std::pair<UnfoldedNetwork, TrainReport> train_layer_by_layer(
    const SensingSystem& sys, const MeasurementBatch& train, const MeasurementBatch& val,
    NetKind kind, int depth, const TrainConfig& cfg, int nc = 4, TrainObserver observer = {},
    TrainLogger logger = {});

struct DualNets {
  UnfoldedNetwork low;
  UnfoldedNetwork high;
  double boundary_db = 10.0;

  const UnfoldedNetwork& select(double snr_db) const { return snr_db < boundary_db ? low : high; }
};

struct DualReports {
  TrainReport low, high;
};

// Trains one network on measurements drawn uniformly over 0-10 dB and a
// second over 10-20 dB; evaluation dispatches on the test SNR with the
// boundary assigned to the high-range network.
DualNets dual_snr_training(const SensingSystem& sys, std::span<const ChannelSample> channels,
                           NetKind kind, int depth, const TrainConfig& cfg, int nc,
                           int train_count, int val_count, DualReports* reports = nullptr,
                           TrainLogger logger = {});

}  // namespace beamscope
