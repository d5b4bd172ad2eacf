#include "beamscope/estimators.hpp"

#include <cstring>
#include <fstream>
#include <iostream>

#include "beamscope/io.hpp"

namespace beamscope {

void UnfoldedNetwork::validate(const SensingSystem& sys) const {
  if (layers.empty()) throw std::invalid_argument("network: no layers");
  for (const LayerParams& l : layers) {
    if (l.b.rows() != sys.n || l.b.cols() != sys.m)
      throw std::invalid_argument("network: B_t must be N x M");
    const bool is_st = std::holds_alternative<SoftThresholdParams>(l.shrink);
    if (kind == NetKind::Lamp && !is_st)
      throw std::invalid_argument("network: LAMP layer carries non-soft-threshold parameters");
    if (kind == NetKind::GmLamp) {
      if (is_st) throw std::invalid_argument("network: GM-LAMP layer carries soft threshold");
      l.gm().validate();
    }
  }
}

UnfoldedNetwork make_lamp(const SensingSystem& sys, int depth, double lambda0) {
  if (depth < 1) throw std::invalid_argument("make_lamp: depth must be >= 1");
  UnfoldedNetwork net;
  net.kind = NetKind::Lamp;
  net.layers.resize(depth);
  for (LayerParams& l : net.layers) {
    l.b = sys.a.transpose().cast<cx>();
    l.shrink = SoftThresholdParams{lambda0};
  }
  return net;
}

UnfoldedNetwork make_gmlamp(const SensingSystem& sys, int depth, int nc) {
  if (depth < 1) throw std::invalid_argument("make_gmlamp: depth must be >= 1");
  UnfoldedNetwork net;
  net.kind = NetKind::GmLamp;
  net.layers.resize(depth);
  for (LayerParams& l : net.layers) {
    l.b = sys.a.transpose().cast<cx>();
    l.shrink = GmParams::initial(nc);
  }
  return net;
}

namespace {

// Push |r| off the non-differentiable circle; the shrinkage derivative sums
// reject points within 1e-12 of the threshold.
cx nudge_off_threshold(cx r, double tau) {
  if (tau <= 0.0) return r;
  const double a = std::abs(r);
  if (std::abs(a - tau) >= 1e-12) return r;
  if (a == 0.0) return cx(tau + 1e-12, 0.0);
  return r * ((tau + 1e-12) / a);
}

struct StSlim {
  cx value, dr, drc;
};

// value and first Wirtinger derivatives, 6 multiplies per element
StSlim st_forward(cx r, double tau) {
  StSlim out{cx(0, 0), cx(0, 0), cx(0, 0)};
  if (tau == 0.0) {
    out.value = r;
    out.dr = 1.0;
    return out;
  }
  const double a2 = std::norm(r);
  const double a = std::sqrt(a2);
  if (a <= tau) return out;
  const double k = tau / a;
  out.value = r * (1.0 - k);
  out.dr = 1.0 - 0.5 * k;
  out.drc = (0.5 * k / a2) * (r * r);
  return out;
}

}  // namespace

std::pair<CVec, LayerTrace> amp_estimate(const SensingSystem& sys, const CVec& y,
                                         const AmpConfig& cfg, MultiplyCounter* counter) {
  if (y.size() != sys.m) throw std::invalid_argument("amp_estimate: y length != M");
  if (cfg.iterations < 1 || cfg.lambda < 0) throw std::invalid_argument("amp_estimate: bad config");
  const int n = sys.n, m = sys.m, iters = cfg.iterations;
  LayerTrace trace;
  trace.sigma2.resize(iters);
  CVec h = CVec::Zero(n);
  CVec v_prev = CVec::Zero(m);
  cx ons_b = 0.0, ons_c = 0.0;
  for (int t = 0; t < iters; ++t) {
    CVec v = y - sys.a * h + ons_b * v_prev + ons_c * v_prev.conjugate();
    count_ops(counter, static_cast<std::int64_t>(m) * n + 2 * m);
    const double sigma2 = v.squaredNorm() / m;
    count_ops(counter, m);
    CVec r = h + sys.a.transpose() * v;
    count_ops(counter, static_cast<std::int64_t>(m) * n);
    const double tau = cfg.lambda * std::sqrt(sigma2);
    cx sum_dr = 0.0, sum_drc = 0.0;
    for (int i = 0; i < n; ++i) {
      r(i) = nudge_off_threshold(r(i), tau);
      const StSlim f = st_forward(r(i), tau);
      h(i) = f.value;
      sum_dr += f.dr;
      sum_drc += f.drc;
    }
    count_ops(counter, static_cast<std::int64_t>(kSoftThresholdElementCost) * n);
    ons_b = sum_dr / static_cast<double>(m);
    ons_c = sum_drc / static_cast<double>(m);
    trace.residual.push_back(v);
    trace.r.push_back(r);
    trace.estimate.push_back(h);
    trace.sigma2(t) = sigma2;
    v_prev = std::move(v);
  }
  return {h, std::move(trace)};
}

BatchTrace forward_batch(const SensingSystem& sys, const UnfoldedNetwork& net, const CMat& y,
                         int last_layer, ForwardStage stage, MultiplyCounter* counter) {
  net.validate(sys);
  if (y.rows() != sys.m) throw std::invalid_argument("forward_batch: y rows != M");
  if (last_layer < 0 || last_layer >= net.depth())
    throw std::invalid_argument("forward_batch: layer index out of range");
  const int n = sys.n, m = sys.m;
  const Eigen::Index d = y.cols();

  BatchTrace trace;
  trace.last_layer = last_layer;
  trace.last_stage = stage;
  trace.h.push_back(CMat::Zero(n, d));
  trace.v.push_back(y);

  GmWorkspace ws;
  GmGrads gg;

  for (int t = 0; t <= last_layer; ++t) {
    const LayerParams& layer = net.layers[t];
    const ForwardStage st = (t < last_layer) ? ForwardStage::Full : stage;

    CMat r = trace.h[t] + layer.b * trace.v[t];
    count_ops(counter, static_cast<std::int64_t>(n) * m * d);
    if (st == ForwardStage::Linear) {
      trace.r.push_back(std::move(r));
      break;
    }

    RRow sigma2 = trace.v[t].colwise().squaredNorm() / static_cast<double>(m);
    count_ops(counter, static_cast<std::int64_t>(m) * d);

    CMat h_next(n, d);
    CRow sum_dr = CRow::Zero(d), sum_drc = CRow::Zero(d);
    const bool want_onsager = (st == ForwardStage::Full);
    if (net.kind == NetKind::Lamp) {
      const double lambda = layer.st().lambda;
      for (Eigen::Index col = 0; col < d; ++col) {
        const double tau = lambda * std::sqrt(sigma2(col));
        for (int i = 0; i < n; ++i) {
          r(i, col) = nudge_off_threshold(r(i, col), tau);
          const StSlim f = st_forward(r(i, col), tau);
          h_next(i, col) = f.value;
          sum_dr(col) += f.dr;
          sum_drc(col) += f.drc;
        }
      }
      count_ops(counter, static_cast<std::int64_t>(kSoftThresholdElementCost) * n * d);
    } else {
      const GmPrecomp pre = GmPrecomp::from(layer.gm());
      const GradOrder order = want_onsager ? GradOrder::FirstR : GradOrder::Value;
      for (Eigen::Index col = 0; col < d; ++col) {
        const double s_eff = std::max(sigma2(col), 1e-30);
        for (int i = 0; i < n; ++i) {
          gm_eval(r(i, col), pre, s_eff, order, gg, ws);
          h_next(i, col) = gg.value;
          sum_dr(col) += gg.dr;
          sum_drc(col) += gg.drc;
        }
      }
      count_ops(counter, gm_element_cost(pre.nc) * n * d);
    }
    trace.r.push_back(std::move(r));
    trace.sigma2.push_back(std::move(sigma2));
    trace.h.push_back(std::move(h_next));
    if (!want_onsager) break;

    trace.ons_b.push_back(sum_dr / static_cast<double>(m));
    trace.ons_c.push_back(sum_drc / static_cast<double>(m));

    CMat v_next = y - sys.a * trace.h.back();
    count_ops(counter, static_cast<std::int64_t>(n) * m * d);
    for (Eigen::Index col = 0; col < d; ++col)
      v_next.col(col) += trace.ons_b.back()(col) * trace.v[t].col(col) +
                         trace.ons_c.back()(col) * trace.v[t].col(col).conjugate();
    count_ops(counter, 2 * static_cast<std::int64_t>(m) * d);
    trace.v.push_back(std::move(v_next));
  }
  return trace;
}

CMat estimate_batch(const SensingSystem& sys, const UnfoldedNetwork& net, const CMat& y,
                    MultiplyCounter* counter) {
  // rolling version of forward_batch so large evaluation batches do not hold
  // the whole per-layer history
  net.validate(sys);
  if (y.rows() != sys.m) throw std::invalid_argument("estimate_batch: y rows != M");
  const int n = sys.n, m = sys.m;
  const Eigen::Index d = y.cols();
  CMat h = CMat::Zero(n, d);
  CMat v = y;
  GmWorkspace ws;
  GmGrads gg;
  for (int t = 0; t < net.depth(); ++t) {
    const LayerParams& layer = net.layers[t];
    CMat r = h + layer.b * v;
    count_ops(counter, static_cast<std::int64_t>(n) * m * d);
    const RRow sigma2 = v.colwise().squaredNorm() / static_cast<double>(m);
    count_ops(counter, static_cast<std::int64_t>(m) * d);
    CRow sum_dr = CRow::Zero(d), sum_drc = CRow::Zero(d);
    if (net.kind == NetKind::Lamp) {
      const double lambda = layer.st().lambda;
      for (Eigen::Index col = 0; col < d; ++col) {
        const double tau = lambda * std::sqrt(sigma2(col));
        for (int i = 0; i < n; ++i) {
          const StSlim f = st_forward(nudge_off_threshold(r(i, col), tau), tau);
          h(i, col) = f.value;
          sum_dr(col) += f.dr;
          sum_drc(col) += f.drc;
        }
      }
      count_ops(counter, static_cast<std::int64_t>(kSoftThresholdElementCost) * n * d);
    } else {
      const GmPrecomp pre = GmPrecomp::from(layer.gm());
      for (Eigen::Index col = 0; col < d; ++col) {
        const double s_eff = std::max(sigma2(col), 1e-30);
        for (int i = 0; i < n; ++i) {
          gm_eval(r(i, col), pre, s_eff, GradOrder::FirstR, gg, ws);
          h(i, col) = gg.value;
          sum_dr(col) += gg.dr;
          sum_drc(col) += gg.drc;
        }
      }
      count_ops(counter, gm_element_cost(pre.nc) * n * d);
    }
    CMat v_next = y - sys.a * h;
    count_ops(counter, static_cast<std::int64_t>(n) * m * d);
    for (Eigen::Index col = 0; col < d; ++col)
      v_next.col(col) += (sum_dr(col) / static_cast<double>(m)) * v.col(col) +
                         (sum_drc(col) / static_cast<double>(m)) * v.col(col).conjugate();
    count_ops(counter, 2 * static_cast<std::int64_t>(m) * d);
    v = std::move(v_next);
  }
  return h;
}

namespace {

std::pair<CVec, LayerTrace> unfolded_forward(const SensingSystem& sys, const CVec& y,
                                             const UnfoldedNetwork& net, NetKind expect,
                                             const char* name, MultiplyCounter* counter) {
  if (net.kind != expect) throw std::invalid_argument(std::string(name) + ": wrong network kind");
  if (y.size() != sys.m) throw std::invalid_argument(std::string(name) + ": y length != M");
  const BatchTrace bt =
      forward_batch(sys, net, y, net.depth() - 1, ForwardStage::Full, counter);
  LayerTrace trace;
  const int depth = net.depth();
  trace.sigma2.resize(depth);
  for (int t = 0; t < depth; ++t) {
    trace.r.push_back(bt.r[t].col(0));
    trace.estimate.push_back(bt.h[t + 1].col(0));
    trace.residual.push_back(bt.v[t].col(0));
    trace.sigma2(t) = bt.sigma2[t](0);
  }
  return {bt.h.back().col(0), std::move(trace)};
}

}  // namespace

std::pair<CVec, LayerTrace> lamp_forward(const SensingSystem& sys, const CVec& y,
                                         const UnfoldedNetwork& net, MultiplyCounter* counter) {
  return unfolded_forward(sys, y, net, NetKind::Lamp, "lamp_forward", counter);
}

std::pair<CVec, LayerTrace> gmlamp_forward(const SensingSystem& sys, const CVec& y,
                                           const UnfoldedNetwork& net, MultiplyCounter* counter) {
  return unfolded_forward(sys, y, net, NetKind::GmLamp, "gmlamp_forward", counter);
}

namespace {

// Gauss-Jordan elimination on the augmented [G | rhs] with partial pivoting.
// Returns false on a vanishing pivot. The inner loops run over the fixed
// workspace unconditionally; the returned tally is S + (S^3 + S^2)/2.
bool gauss_jordan_solve(RMat& g, CVec& rhs, std::int64_t& tally) {
  const int s = static_cast<int>(g.rows());
  for (int p = 0; p < s; ++p) {
    int best = p;
    for (int q = p + 1; q < s; ++q)
      if (std::abs(g(q, p)) > std::abs(g(best, p))) best = q;
    if (best != p) {
      g.row(p).swap(g.row(best));
      std::swap(rhs(p), rhs(best));
    }
    const double piv = g(p, p);
    if (std::abs(piv) < 1e-12) return false;
    const double inv = 1.0 / piv;
    ++tally;
    for (int c = p + 1; c < s; ++c) {
      g(p, c) *= inv;
      ++tally;
    }
    rhs(p) *= inv;
    ++tally;
    g(p, p) = 1.0;
    for (int q = 0; q < s; ++q) {
      if (q == p) continue;
      const double f = g(q, p);
      for (int c = p + 1; c < s; ++c) {
        g(q, c) -= f * g(p, c);
        ++tally;
      }
      rhs(q) -= f * rhs(p);
      ++tally;
      g(q, p) = 0.0;
    }
  }
  return true;
}

}  // namespace

CVec omp_estimate(const SensingSystem& sys, const CVec& y, int sparsity,
                  MultiplyCounter* counter) {
  if (y.size() != sys.m) throw std::invalid_argument("omp_estimate: y length != M");
  if (sparsity < 1 || sparsity > sys.m)
    throw std::invalid_argument("omp_estimate: need 1 <= sparsity <= M");
  const int n = sys.n, m = sys.m, s = sparsity;

  // Fixed-capacity workspace: the dictionary slice, Gram matrix and solve all
  // run at the full support size S on every iteration, with identity padding
  // for the slots not selected yet.
  RMat apad = RMat::Zero(m, s);
  std::vector<int> selected;
  selected.reserve(s);
  std::vector<char> used(n, 0);
  CVec residual = y;
  CVec x = CVec::Zero(s);

  for (int it = 0; it < s; ++it) {
    CVec corr = sys.a.transpose() * residual;
    count_ops(counter, static_cast<std::int64_t>(m) * n);
    int best = -1;
    double best_val = -1.0;
    for (int j = 0; j < n; ++j) {
      const double val = std::norm(corr(j));
      if (!used[j] && val > best_val) {
        best_val = val;
        best = j;
      }
    }
    count_ops(counter, n);
    used[best] = 1;
    selected.push_back(best);
    apad.col(it) = sys.a.col(best);

    RMat gram = apad.transpose() * apad;
    count_ops(counter, static_cast<std::int64_t>(s) * s * m);
    for (int k = it + 1; k < s; ++k) gram(k, k) = 1.0;  // identity padding
    CVec rhs = apad.transpose() * y;
    count_ops(counter, static_cast<std::int64_t>(s) * m);

    std::int64_t tally = 0;
    RMat gwork = gram;
    CVec sol = rhs;
    if (gauss_jordan_solve(gwork, sol, tally)) {
      x = sol;
    } else {
      std::cerr << "omp_estimate: rank-deficient support, falling back to pseudo-inverse\n";
      const RMat live = apad.leftCols(it + 1);
      x.setZero();
      x.head(it + 1) =
          live.cast<cx>().completeOrthogonalDecomposition().solve(y);
      tally = s + (static_cast<std::int64_t>(s) * s * s + static_cast<std::int64_t>(s) * s) / 2;
    }
    count_ops(counter, tally);

    residual = y - apad * x;
    count_ops(counter, static_cast<std::int64_t>(s) * m);
  }

  CVec estimate = CVec::Zero(n);
  for (int it = 0; it < s; ++it) estimate(selected[it]) = x(it);
  return estimate;
}

std::int64_t count_multiplies(EstimatorKind kind, int n, int m, int t_or_s, int nc) {
  const auto nn = static_cast<std::int64_t>(n);
  const auto mm = static_cast<std::int64_t>(m);
  const auto k = static_cast<std::int64_t>(t_or_s);
  switch (kind) {
    case EstimatorKind::Amp:
    case EstimatorKind::Lamp:
      return k * (2 * mm * nn + 3 * mm + kSoftThresholdElementCost * nn);
    case EstimatorKind::GmLamp:
      return k * (2 * mm * nn + 3 * mm + gm_element_cost(nc) * nn);
    case EstimatorKind::Omp:
      return k * (mm * nn + nn + k * k * mm + 2 * k * mm + k + (k * k * k + k * k) / 2);
  }
  throw std::invalid_argument("count_multiplies: unknown estimator");
}

namespace {
constexpr char kCheckpointMagic[8] = {'B', 'S', 'C', 'K', 'P', 'T', '1', '\0'};
}

void save_checkpoint(const std::string& path, const UnfoldedNetwork& net, int n, int m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("save_checkpoint: cannot open " + path);
  f.write(kCheckpointMagic, 8);
  io::write_u32(f, net.kind == NetKind::Lamp ? 0u : 1u);
  io::write_u32(f, static_cast<std::uint32_t>(net.depth()));
  io::write_u32(f, static_cast<std::uint32_t>(n));
  io::write_u32(f, static_cast<std::uint32_t>(m));
  const std::uint32_t nc =
      net.kind == NetKind::GmLamp ? static_cast<std::uint32_t>(net.layers[0].gm().nc()) : 0u;
  io::write_u32(f, nc);
  for (const LayerParams& l : net.layers) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        io::write_f64(f, l.b(i, j).real());
        io::write_f64(f, l.b(i, j).imag());
      }
    if (net.kind == NetKind::Lamp) {
      io::write_f64(f, l.st().lambda);
    } else {
      const GmParams& gm = l.gm();
      for (int k = 0; k < gm.nc(); ++k) io::write_f64(f, gm.weights_raw(k));
      for (int k = 0; k < gm.nc(); ++k) {
        io::write_f64(f, gm.means(k).real());
        io::write_f64(f, gm.means(k).imag());
      }
      for (int k = 0; k < gm.nc(); ++k) io::write_f64(f, gm.log_vars(k));
    }
  }
  if (!f) throw io_error("save_checkpoint: write failed for " + path);
}

UnfoldedNetwork load_checkpoint(const std::string& path, int expect_n, int expect_m) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("load_checkpoint: cannot open " + path);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw io_error("load_checkpoint: bad magic in " + path);
  const std::uint32_t kind = io::read_u32(f);
  const std::uint32_t depth = io::read_u32(f);
  const std::uint32_t n = io::read_u32(f);
  const std::uint32_t m = io::read_u32(f);
  const std::uint32_t nc = io::read_u32(f);
  if (!f) throw io_error("load_checkpoint: truncated header in " + path);
  if (kind > 1 || depth < 1) throw io_error("load_checkpoint: corrupt header in " + path);
  if (static_cast<int>(n) != expect_n || static_cast<int>(m) != expect_m)
    throw std::invalid_argument("load_checkpoint: " + path + " has N=" + std::to_string(n) +
                                ", M=" + std::to_string(m) + " but the experiment expects N=" +
                                std::to_string(expect_n) + ", M=" + std::to_string(expect_m));
  UnfoldedNetwork net;
  net.kind = kind == 0 ? NetKind::Lamp : NetKind::GmLamp;
  net.layers.resize(depth);
  for (LayerParams& l : net.layers) {
    l.b.resize(n, m);
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = 0; j < m; ++j) {
        const double re = io::read_f64(f);
        const double im = io::read_f64(f);
        l.b(i, j) = cx(re, im);
      }
    if (net.kind == NetKind::Lamp) {
      l.shrink = SoftThresholdParams{io::read_f64(f)};
    } else {
      GmParams gm;
      gm.weights_raw.resize(nc);
      gm.means.resize(nc);
      gm.log_vars.resize(nc);
      for (std::uint32_t k = 0; k < nc; ++k) gm.weights_raw(k) = io::read_f64(f);
      for (std::uint32_t k = 0; k < nc; ++k) {
        const double re = io::read_f64(f);
        const double im = io::read_f64(f);
        gm.means(k) = cx(re, im);
      }
      for (std::uint32_t k = 0; k < nc; ++k) gm.log_vars(k) = io::read_f64(f);
      l.shrink = std::move(gm);
    }
    if (!f) throw io_error("load_checkpoint: truncated payload in " + path);
  }
  return net;
}

}  // namespace beamscope
