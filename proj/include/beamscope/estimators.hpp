#pragma once

#include <string>
#include <variant>
#include <vector>

#include "beamscope/measurement.hpp"
#include "beamscope/multiply_counter.hpp"
#include "beamscope/shrinkage.hpp"
#include "beamscope/types.hpp"

namespace beamscope {

struct AmpConfig {
  int iterations = 10;
  double lambda = 1.1402;  // shared threshold scale for every iteration
};

enum class NetKind { Lamp, GmLamp };

struct LayerParams {
  CMat b;  // N x M linear transform
  std::variant<SoftThresholdParams, GmParams> shrink;

  SoftThresholdParams& st() { return std::get<SoftThresholdParams>(shrink); }
  const SoftThresholdParams& st() const { return std::get<SoftThresholdParams>(shrink); }
  GmParams& gm() { return std::get<GmParams>(shrink); }
  const GmParams& gm() const { return std::get<GmParams>(shrink); }
};

struct UnfoldedNetwork {
  NetKind kind = NetKind::Lamp;
  std::vector<LayerParams> layers;

  int depth() const { return static_cast<int>(layers.size()); }
  void validate(const SensingSystem& sys) const;
};

// B_t = A^T for every layer; LAMP thresholds start at lambda0, GM-LAMP
// shrinkage parameters at the near-spike initial prior.
UnfoldedNetwork make_lamp(const SensingSystem& sys, int depth, double lambda0 = 1.0);
UnfoldedNetwork make_gmlamp(const SensingSystem& sys, int depth, int nc);

// Per-layer diagnostics. residual[t] is the v_t entering layer t, the vector
// whose energy gives sigma2[t]; estimate[t] is the layer output.
struct LayerTrace {
  std::vector<CVec> r;
  std::vector<CVec> estimate;
  std::vector<CVec> residual;
  RVec sigma2;
};

std::pair<CVec, LayerTrace> amp_estimate(const SensingSystem& sys, const CVec& y,
                                         const AmpConfig& cfg, MultiplyCounter* counter = nullptr);
std::pair<CVec, LayerTrace> lamp_forward(const SensingSystem& sys, const CVec& y,
                                         const UnfoldedNetwork& net,
                                         MultiplyCounter* counter = nullptr);
std::pair<CVec, LayerTrace> gmlamp_forward(const SensingSystem& sys, const CVec& y,
                                           const UnfoldedNetwork& net,
                                           MultiplyCounter* counter = nullptr);

CVec omp_estimate(const SensingSystem& sys, const CVec& y, int sparsity,
                  MultiplyCounter* counter = nullptr);

// ---------------------------------------------------------------------------
// Batched network execution over a column-per-sample matrix; this is the
// engine behind the per-sample wrappers, the losses and the gradients.

enum class ForwardStage { Linear, Shrink, Full };

struct BatchTrace {
  std::vector<CMat> h;       // states h_0..h_{L} (N x D)
  std::vector<CMat> v;       // residuals v_0..v_{L(-1)} (M x D)
  std::vector<CMat> r;       // r_t per executed layer
  std::vector<RRow> sigma2;  // per-sample noise estimates per layer
  std::vector<CRow> ons_b;   // Onsager coefficients b_{t+1} per sample
  std::vector<CRow> ons_c;
  int last_layer = -1;
  ForwardStage last_stage = ForwardStage::Full;
};

// Runs layers 0..last_layer-1 fully and layer last_layer up to `stage`.
BatchTrace forward_batch(const SensingSystem& sys, const UnfoldedNetwork& net, const CMat& y,
                         int last_layer, ForwardStage stage, MultiplyCounter* counter = nullptr);

// Final estimates for a batch (all layers, column per sample).
CMat estimate_batch(const SensingSystem& sys, const UnfoldedNetwork& net, const CMat& y,
                    MultiplyCounter* counter = nullptr);

// ---------------------------------------------------------------------------

enum class EstimatorKind { Omp, Amp, Lamp, GmLamp };

// Analytic complex-multiply count of one estimate. The formulas mirror the
// instrumented operation sites exactly, including the fixed-capacity
// least-squares workspace of the OMP path.
std::int64_t count_multiplies(EstimatorKind kind, int n, int m, int t_or_s, int nc = 4);

// Versioned checkpoint: "BSCKPT1\0", u32 kind, u32 T, u32 N, u32 M, u32 Nc,
// then per layer B_t row-major as re/im double pairs followed by the raw
// shrinkage parameters (lambda, or logits / means / log-variances).
void save_checkpoint(const std::string& path, const UnfoldedNetwork& net, int n, int m);
UnfoldedNetwork load_checkpoint(const std::string& path, int expect_n, int expect_m);

}  // namespace beamscope
