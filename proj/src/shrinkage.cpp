#include "beamscope/shrinkage.hpp"

#include <cmath>

namespace beamscope {

RVec GmParams::log_probs() const {
  const double m = weights_raw.maxCoeff();
  const double lse = m + std::log((weights_raw.array() - m).exp().sum());
  return weights_raw.array() - lse;
}

RVec GmParams::probs() const { return log_probs().array().exp(); }

void GmParams::validate() const {
  if (weights_raw.size() < 1 || means.size() != weights_raw.size() ||
      log_vars.size() != weights_raw.size())
    throw std::invalid_argument("GmParams: inconsistent component counts");
}

GmParams GmParams::initial(int nc) {
  if (nc < 1) throw std::invalid_argument("GmParams::initial: nc must be >= 1");
  GmParams p;
  p.weights_raw = RVec::Zero(nc);
  p.means = CVec::Zero(nc);
  // Near-spike start standing in for the all-zero prior, staggered across
  // scales: components initialized identically receive identical gradients
  // and stay locked together, collapsing the mixture to one Gaussian. The
  // ladder keeps every gain small while giving each component its own basin.
  p.log_vars.resize(nc);
  for (int k = 0; k < nc; ++k) p.log_vars(k) = std::log(1e-2) - k * std::log(10.0);
  return p;
}

namespace {

void check_soft_args(double lambda, double sigma2) {
  if (lambda < 0) throw std::invalid_argument("soft threshold: lambda must be >= 0");
  if (sigma2 < 0) throw std::invalid_argument("soft threshold: sigma2 must be >= 0");
}

}  // namespace

cx soft_threshold(cx r, double lambda, double sigma2) {
  check_soft_args(lambda, sigma2);
  const double a = std::abs(r);
  const double tau = lambda * std::sqrt(sigma2);
  if (a <= tau || a == 0.0) return cx(0.0, 0.0);
  return r * ((a - tau) / a);
}

SoftThresholdGrads soft_threshold_full(cx r, double lambda, double sigma2) {
  check_soft_args(lambda, sigma2);
  SoftThresholdGrads out;
  const double a = std::abs(r);
  const double sigma = std::sqrt(sigma2);
  const double tau = lambda * sigma;
  if (tau == 0.0) {
    // identity map; radial derivatives still exist where r != 0
    out.value = r;
    out.dr = 1.0;
    if (a > 0.0) {
      const cx unit = r / a;
      const cx r2_a3 = r * r / (a * a * a);
      out.dlambda = -sigma * unit;
      out.dr_lambda = cx(-sigma / (2.0 * a), 0.0);
      out.drc_lambda = sigma * r2_a3 * 0.5;
      if (sigma > 0.0) {
        out.ds = -(lambda / (2.0 * sigma)) * unit;
        out.dr_s = cx(-lambda / (4.0 * a * sigma), 0.0);
        out.drc_s = (lambda / (4.0 * sigma)) * r2_a3;
      }
    }
    return out;
  }
  if (std::abs(a - tau) < 1e-12)
    throw boundary_error("soft threshold derivative evaluated on |r| = tau");
  if (a < tau) return out;  // dead zone, everything zero
  const cx unit = r / a;
  const cx r2_a3 = r * r / (a * a * a);
  const double dtau_ds = lambda / (2.0 * sigma);
  out.value = r * ((a - tau) / a);
  out.dr = 1.0 - tau / (2.0 * a);
  out.drc = 0.5 * tau * r2_a3;
  out.ds = -dtau_ds * unit;
  out.dlambda = -sigma * unit;
  out.dr_r = tau * std::conj(r) / (4.0 * a * a * a);
  out.dr_rc = tau * r / (4.0 * a * a * a);
  out.dr_s = cx(-dtau_ds / (2.0 * a), 0.0);
  out.dr_lambda = cx(-sigma / (2.0 * a), 0.0);
  out.drc_r = out.dr_rc;
  out.drc_rc = -0.75 * tau * r * r * r / (a * a * a * a * a);
  out.drc_s = 0.5 * dtau_ds * r2_a3;
  out.drc_lambda = 0.5 * sigma * r2_a3;
  return out;
}

ShrinkDerivs soft_threshold_derivs(cx r, double lambda, double sigma2) {
  const SoftThresholdGrads g = soft_threshold_full(r, lambda, sigma2);
  return {g.value, g.dr, g.drc};
}

GmPrecomp GmPrecomp::from(const GmParams& theta) {
  theta.validate();
  GmPrecomp p;
  p.log_p = theta.log_probs();
  p.var = theta.variances();
  p.mean = theta.means;
  p.nc = theta.nc();
  return p;
}

void GmGrads::resize(int nc) {
  for (CVec* v : {&dw, &dmu, &dmuc, &dlv, &dr_w, &dr_mu, &dr_muc, &dr_lv, &drc_w, &drc_mu,
                  &drc_muc, &drc_lv})
    if (v->size() != nc) v->resize(nc);
}

void GmWorkspace::resize(int nc) {
  if (gam.size() != nc) {
    gam.resize(nc);
    g.resize(nc);
    inv_v.resize(nc);
    lterm.resize(nc);
    d.resize(nc);
    e.resize(nc);
    ec.resize(nc);
    mt.resize(nc);
  }
}

namespace {

// Derivatives of the six responsibility-weighted averages that eta, d_r and
// d_rconj are built from. For any per-component quantity q,
//   d<q>/du = <l_u q> - <l_u><q> + <dq/du>
// where l_u is the per-component log-density derivative; parameters touching
// a single component reduce the covariance to one term.
struct AvgDerivs {
  cx dmt{}, dg{}, de{}, dec{}, dxq{}, dyq{};
};

struct GmAverages {
  cx e_avg{}, ec_avg{}, mt_avg{};
  double g_avg = 0.0;
  cx x_avg{}, y_avg{};  // <e* mt>, <e mt>
};

cx compose_dr(const AvgDerivs& a, const GmAverages& avg) {
  return a.dg + a.dec * avg.mt_avg + avg.ec_avg * a.dmt - a.dxq;
}

cx compose_drc(const AvgDerivs& a, const GmAverages& avg) {
  return a.de * avg.mt_avg + avg.e_avg * a.dmt - a.dyq;
}

}  // namespace

void gm_eval(cx r, const GmPrecomp& p, double sigma2, GradOrder order, GmGrads& out,
             GmWorkspace& ws) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("gm shrinkage: sigma2 must be > 0");
  const int nc = p.nc;
  ws.resize(nc);

  double lmax = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < nc; ++k) {
    const double vtot = sigma2 + p.var(k);
    ws.inv_v(k) = 1.0 / vtot;
    ws.d(k) = r - p.mean(k);
    ws.e(k) = ws.d(k) * ws.inv_v(k);
    ws.ec(k) = std::conj(ws.e(k));
    ws.g(k) = p.var(k) * ws.inv_v(k);
    ws.mt(k) = p.mean(k) + ws.g(k) * ws.d(k);
    ws.lterm(k) = p.log_p(k) - std::log(kPi * vtot) - std::norm(ws.d(k)) * ws.inv_v(k);
    lmax = std::max(lmax, ws.lterm(k));
  }
  double z = 0.0;
  for (int k = 0; k < nc; ++k) {
    ws.gam(k) = std::exp(ws.lterm(k) - lmax);
    z += ws.gam(k);
  }
  ws.gam /= z;

  GmAverages avg;
  for (int k = 0; k < nc; ++k) {
    avg.e_avg += ws.gam(k) * ws.e(k);
    avg.g_avg += ws.gam(k) * ws.g(k);
    avg.mt_avg += ws.gam(k) * ws.mt(k);
  }
  avg.ec_avg = std::conj(avg.e_avg);
  out.value = avg.mt_avg;
  if (order == GradOrder::Value) return;

  for (int k = 0; k < nc; ++k) {
    avg.x_avg += ws.gam(k) * ws.ec(k) * ws.mt(k);
    avg.y_avg += ws.gam(k) * ws.e(k) * ws.mt(k);
  }
  out.dr = avg.g_avg + avg.ec_avg * avg.mt_avg - avg.x_avg;
  out.drc = avg.e_avg * avg.mt_avg - avg.y_avg;
  if (order == GradOrder::FirstR) return;

  out.resize(nc);

  // global variables u in {r, r*, sigma2}: per-component tables
  //   lu      d(log density)/du
  //   dmt     d(posterior component mean)/du     dg  d(wiener gain)/du
  //   de/dec  d e / du and d e* / du
  const auto global_avg = [&](auto lu, auto dmt, auto de, auto dec, auto dg) {
    AvgDerivs a;
    cx lbar{};
    for (int k = 0; k < nc; ++k) {
      const double gk = ws.gam(k);
      const cx lk = lu(k);
      lbar += gk * lk;
      a.dmt += gk * (lk * ws.mt(k) + dmt(k));
      a.dg += gk * (lk * ws.g(k) + dg(k));
      a.de += gk * (lk * ws.e(k) + de(k));
      a.dec += gk * (lk * ws.ec(k) + dec(k));
      a.dxq += gk * (lk * ws.ec(k) * ws.mt(k) + dec(k) * ws.mt(k) + ws.ec(k) * dmt(k));
      a.dyq += gk * (lk * ws.e(k) * ws.mt(k) + de(k) * ws.mt(k) + ws.e(k) * dmt(k));
    }
    a.dmt -= lbar * avg.mt_avg;
    a.dg -= lbar * cx(avg.g_avg, 0.0);
    a.de -= lbar * avg.e_avg;
    a.dec -= lbar * avg.ec_avg;
    a.dxq -= lbar * avg.x_avg;
    a.dyq -= lbar * avg.y_avg;
    return a;
  };

  // parameters local to component m
  const auto local_avg = [&](int m, cx lu, cx dmt, cx de, cx dec, cx dg) {
    const double gm = ws.gam(m);
    AvgDerivs a;
    a.dmt = gm * (lu * (ws.mt(m) - avg.mt_avg) + dmt);
    a.dg = gm * (lu * (cx(ws.g(m), 0.0) - cx(avg.g_avg, 0.0)) + dg);
    a.de = gm * (lu * (ws.e(m) - avg.e_avg) + de);
    a.dec = gm * (lu * (ws.ec(m) - avg.ec_avg) + dec);
    a.dxq = gm * (lu * (ws.ec(m) * ws.mt(m) - avg.x_avg) + dec * ws.mt(m) + ws.ec(m) * dmt);
    a.dyq = gm * (lu * (ws.e(m) * ws.mt(m) - avg.y_avg) + de * ws.mt(m) + ws.e(m) * dmt);
    return a;
  };

  const cx zero{};
  const AvgDerivs ar = global_avg([&](int k) { return -ws.ec(k); },
                                  [&](int k) { return cx(ws.g(k), 0.0); },
                                  [&](int k) { return cx(ws.inv_v(k), 0.0); },
                                  [&](int) { return zero; }, [&](int) { return zero; });
  const AvgDerivs arc = global_avg([&](int k) { return -ws.e(k); }, [&](int) { return zero; },
                                   [&](int) { return zero; },
                                   [&](int k) { return cx(ws.inv_v(k), 0.0); },
                                   [&](int) { return zero; });
  const AvgDerivs as = global_avg(
      [&](int k) { return cx(std::norm(ws.e(k)) - ws.inv_v(k), 0.0); },
      [&](int k) { return cx(-ws.g(k)) * ws.e(k); }, [&](int k) { return -ws.e(k) * ws.inv_v(k); },
      [&](int k) { return -ws.ec(k) * ws.inv_v(k); },
      [&](int k) { return cx(-ws.g(k) * ws.inv_v(k), 0.0); });

  out.ds = as.dmt;
  out.dr_r = compose_dr(ar, avg);
  out.dr_rc = compose_dr(arc, avg);
  out.dr_s = compose_dr(as, avg);
  out.drc_r = compose_drc(ar, avg);
  out.drc_rc = compose_drc(arc, avg);
  out.drc_s = compose_drc(as, avg);

  for (int m = 0; m < nc; ++m) {
    const AvgDerivs aw = local_avg(m, cx(1.0, 0.0), zero, zero, zero, zero);
    const AvgDerivs amu =
        local_avg(m, ws.ec(m), cx(1.0 - ws.g(m), 0.0), cx(-ws.inv_v(m), 0.0), zero, zero);
    const AvgDerivs amuc = local_avg(m, ws.e(m), zero, zero, cx(-ws.inv_v(m), 0.0), zero);
    AvgDerivs alv = local_avg(m, cx(std::norm(ws.e(m)) - ws.inv_v(m), 0.0),
                              cx(1.0 - ws.g(m), 0.0) * ws.e(m), -ws.e(m) * ws.inv_v(m),
                              -ws.ec(m) * ws.inv_v(m), cx((1.0 - ws.g(m)) * ws.inv_v(m), 0.0));
    // chain from variance to its log
    const double vm = p.var(m);
    alv.dmt *= vm;
    alv.dg *= vm;
    alv.de *= vm;
    alv.dec *= vm;
    alv.dxq *= vm;
    alv.dyq *= vm;

    out.dw(m) = aw.dmt;
    out.dmu(m) = amu.dmt;
    out.dmuc(m) = amuc.dmt;
    out.dlv(m) = alv.dmt;
    out.dr_w(m) = compose_dr(aw, avg);
    out.dr_mu(m) = compose_dr(amu, avg);
    out.dr_muc(m) = compose_dr(amuc, avg);
    out.dr_lv(m) = compose_dr(alv, avg);
    out.drc_w(m) = compose_drc(aw, avg);
    out.drc_mu(m) = compose_drc(amu, avg);
    out.drc_muc(m) = compose_drc(amuc, avg);
    out.drc_lv(m) = compose_drc(alv, avg);
  }
}

cx gm_shrinkage(cx r, const GmParams& theta, double sigma2) {
  GmGrads g;
  GmWorkspace ws;
  gm_eval(r, GmPrecomp::from(theta), sigma2, GradOrder::Value, g, ws);
  return g.value;
}

ShrinkDerivs gm_shrinkage_derivs(cx r, const GmParams& theta, double sigma2) {
  GmGrads g;
  GmWorkspace ws;
  gm_eval(r, GmPrecomp::from(theta), sigma2, GradOrder::FirstR, g, ws);
  return {g.value, g.dr, g.drc};
}

std::int64_t gm_element_cost(int nc) {
  // per component: 1/V, e, g, mt, |d|^2 and its V-scaling, the
  // responsibility divide, and seven weighted accumulations feeding
  // eta, d_r, d_rconj; plus the two cross products closing the pair
  return 14 * static_cast<std::int64_t>(nc) + 2;
}

}  // namespace beamscope
