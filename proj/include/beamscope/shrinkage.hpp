#pragma once

#include "beamscope/rng.hpp"
#include "beamscope/types.hpp"

namespace beamscope {

struct SoftThresholdParams {
  double lambda = 0.0;
};

// Gaussian-mixture prior in its unconstrained training parameterization:
// component probabilities are softmax(weights_raw), variances exp(log_vars).
struct GmParams {
  RVec weights_raw;
  CVec means;
  RVec log_vars;

  int nc() const { return static_cast<int>(weights_raw.size()); }
  RVec log_probs() const;
  RVec probs() const;
  RVec variances() const { return log_vars.array().exp(); }

  void validate() const;

  // equal weights, zero means, variances floored at 1e-2 in place of the
  // degenerate all-spike start
  static GmParams initial(int nc);
};

struct ShrinkDerivs {
  cx value;
  cx d_r;      // d eta / d r
  cx d_rconj;  // d eta / d r*
};

// max(|r| - lambda*sqrt(sigma2), 0) * e^{j arg r}
cx soft_threshold(cx r, double lambda, double sigma2);

// Throws boundary_error when |r| sits within 1e-12 of the threshold circle
// (and the threshold is positive); callers perturb and retry.
ShrinkDerivs soft_threshold_derivs(cx r, double lambda, double sigma2);

// Posterior mean of the Gaussian-mixture prior given r = h + CN(0, sigma2),
// accumulated with log-domain component weights.
cx gm_shrinkage(cx r, const GmParams& theta, double sigma2);
ShrinkDerivs gm_shrinkage_derivs(cx r, const GmParams& theta, double sigma2);

// ---------------------------------------------------------------------------
// Full derivative records for reverse-mode training. Second-order entries are
// the derivatives of d_r and d_rconj, required because the Onsager
// coefficients are sums of first derivatives and are themselves part of the
// differentiated graph.

enum class GradOrder { Value, FirstR, Full };

struct SoftThresholdGrads {
  cx value{}, dr{}, drc{}, ds{}, dlambda{};
  cx dr_r{}, dr_rc{}, dr_s{}, dr_lambda{};
  cx drc_r{}, drc_rc{}, drc_s{}, drc_lambda{};
};

SoftThresholdGrads soft_threshold_full(cx r, double lambda, double sigma2);

inline bool soft_threshold_on_boundary(cx r, double lambda, double sigma2) {
  const double tau = lambda * std::sqrt(sigma2);
  return tau > 0.0 && std::abs(std::abs(r) - tau) < 1e-12;
}

// Effective (constrained) parameters, computed once per layer application.
struct GmPrecomp {
  RVec log_p;
  RVec var;
  CVec mean;
  int nc = 0;

  static GmPrecomp from(const GmParams& theta);
};

struct GmGrads {
  cx value{}, dr{}, drc{}, ds{};
  CVec dw, dmu, dmuc, dlv;            // d eta / d raw parameter
  cx dr_r{}, dr_rc{}, dr_s{};
  CVec dr_w, dr_mu, dr_muc, dr_lv;
  cx drc_r{}, drc_rc{}, drc_s{};
  CVec drc_w, drc_mu, drc_muc, drc_lv;

  void resize(int nc);
};

struct GmWorkspace {
  RVec gam, g, inv_v, lterm;
  CVec d, e, ec, mt;
  void resize(int nc);
};

void gm_eval(cx r, const GmPrecomp& p, double sigma2, GradOrder order, GmGrads& out,
             GmWorkspace& ws);

// complex multiplications attributed to one element-wise evaluation,
// mirrored by count_multiplies
std::int64_t gm_element_cost(int nc);
constexpr std::int64_t kSoftThresholdElementCost = 6;

}  // namespace beamscope
