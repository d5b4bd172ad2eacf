#include "beamscope/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <tuple>

namespace beamscope {

bool TrainMask::any() const {
  for (char c : b)
    if (c) return true;
  for (char c : shrink)
    if (c) return true;
  return false;
}

namespace {

ForwardStage stage_for(LossKind kind) {
  return kind == LossKind::Linear ? ForwardStage::Linear : ForwardStage::Shrink;
}

void check_loss_args(const UnfoldedNetwork& net, const MeasurementBatch& batch, LossSpec spec) {
  if (batch.size() < 1) throw std::invalid_argument("loss: empty batch");
  if (spec.layer < 0 || spec.layer >= net.depth())
    throw std::invalid_argument("loss: layer index out of range");
}

Eigen::Map<RVec> real_view(CMat& m) {
  return Eigen::Map<RVec>(reinterpret_cast<double*>(m.data()), 2 * m.size());
}

Eigen::Map<const RVec> real_view(const CMat& m) {
  return Eigen::Map<const RVec>(reinterpret_cast<const double*>(m.data()), 2 * m.size());
}

}  // namespace

double loss_value(const SensingSystem& sys, const UnfoldedNetwork& net,
                  const MeasurementBatch& batch, LossSpec spec) {
  check_loss_args(net, batch, spec);
  const BatchTrace trace = forward_batch(sys, net, batch.y, spec.layer, stage_for(spec.kind));
  const CMat& x = spec.kind == LossKind::Linear ? trace.r[spec.layer] : trace.h[spec.layer + 1];
  return (x - batch.truth).squaredNorm() / static_cast<double>(batch.size());
}

double loss_linear(const SensingSystem& sys, const UnfoldedNetwork& net,
                   const MeasurementBatch& batch, int layer) {
  return loss_value(sys, net, batch, {LossKind::Linear, layer});
}

double loss_nonlinear(const SensingSystem& sys, const UnfoldedNetwork& net,
                      const MeasurementBatch& batch, int layer) {
  return loss_value(sys, net, batch, {LossKind::Nonlinear, layer});
}

int shrink_raw_size(const LayerParams& layer) {
  if (std::holds_alternative<SoftThresholdParams>(layer.shrink)) return 1;
  return 4 * std::get<GmParams>(layer.shrink).nc();
}

RVec get_shrink_raw(const LayerParams& layer) {
  if (const auto* st = std::get_if<SoftThresholdParams>(&layer.shrink)) {
    RVec raw(1);
    raw(0) = st->lambda;
    return raw;
  }
  const GmParams& gm = std::get<GmParams>(layer.shrink);
  const int nc = gm.nc();
  RVec raw(4 * nc);
  raw.head(nc) = gm.weights_raw;
  for (int k = 0; k < nc; ++k) {
    raw(nc + 2 * k) = gm.means(k).real();
    raw(nc + 2 * k + 1) = gm.means(k).imag();
  }
  raw.tail(nc) = gm.log_vars;
  return raw;
}

void set_shrink_raw(LayerParams& layer, const RVec& raw) {
  if (auto* st = std::get_if<SoftThresholdParams>(&layer.shrink)) {
    st->lambda = raw(0);
    return;
  }
  GmParams& gm = std::get<GmParams>(layer.shrink);
  const int nc = gm.nc();
  if (raw.size() != 4 * nc) throw std::invalid_argument("set_shrink_raw: size mismatch");
  gm.weights_raw = raw.head(nc);
  for (int k = 0; k < nc; ++k) gm.means(k) = cx(raw(nc + 2 * k), raw(nc + 2 * k + 1));
  gm.log_vars = raw.tail(nc);
}

std::pair<double, GradientSet> loss_and_grad(const SensingSystem& sys, const UnfoldedNetwork& net,
                                             const MeasurementBatch& batch, LossSpec spec,
                                             const TrainMask& mask, const TrainConfig& cfg) {
  check_loss_args(net, batch, spec);
  if (static_cast<int>(mask.b.size()) != net.depth() ||
      static_cast<int>(mask.shrink.size()) != net.depth())
    throw std::invalid_argument("loss_and_grad: mask size != network depth");
  const int tl = spec.layer;
  const int n = sys.n, m = sys.m;
  const Eigen::Index d = batch.size();
  const double inv_d = 1.0 / static_cast<double>(d);
  const double inv_m = 1.0 / static_cast<double>(m);
  const bool nonlinear = spec.kind == LossKind::Nonlinear;

  const BatchTrace trace = forward_batch(sys, net, batch.y, tl, stage_for(spec.kind));
  const CMat& head = nonlinear ? trace.h[tl + 1] : trace.r[tl];
  const double loss = (head - batch.truth).squaredNorm() * inv_d;

  GradientSet grads;
  grads.b.resize(net.depth());
  grads.shrink.resize(net.depth());

  const CMat a_cx = sys.a.cast<cx>();

  // adjoints are cogradients dL/d(conj .); real parameters carry plain dL/du
  CMat g_h = CMat::Zero(n, d);  // for h_{t+1}
  CMat g_v = CMat::Zero(m, d);  // for v_{t+1}
  if (nonlinear) g_h = (head - batch.truth) * inv_d;

  GmWorkspace ws;
  GmGrads gg;

  for (int t = tl; t >= 0; --t) {
    const LayerParams& layer = net.layers[t];
    const bool has_next = t < tl;  // v_{t+1} exists and fed layer t+1
    const bool shrink_ran = has_next || nonlinear;
    const bool onsager_flow = has_next && !cfg.detach_onsager;

    CRow g_b_coef = CRow::Zero(d), g_c_coef = CRow::Zero(d);
    if (has_next) {
      g_h.noalias() -= a_cx.transpose() * g_v;
      g_b_coef = (trace.v[t].conjugate().cwiseProduct(g_v)).colwise().sum();
      g_c_coef = (trace.v[t].cwiseProduct(g_v)).colwise().sum();
    }

    CMat g_r(n, d);
    RRow g_s = RRow::Zero(d);

    if (shrink_ran) {
      const bool is_lamp = net.kind == NetKind::Lamp;
      const double lambda = is_lamp ? layer.st().lambda : 0.0;
      const GmPrecomp pre = is_lamp ? GmPrecomp{} : GmPrecomp::from(layer.gm());
      const int nc = is_lamp ? 0 : pre.nc;

      double g_lambda = 0.0;
      RVec g_w = RVec::Zero(nc), g_lv = RVec::Zero(nc);
      CVec g_mu = CVec::Zero(nc);
      const bool want_params = mask.shrink[t] != 0;

      for (Eigen::Index col = 0; col < d; ++col) {
        const cx gb = g_b_coef(col), gc = g_c_coef(col);
        const cx gb_c = std::conj(gb), gc_c = std::conj(gc);
        const double s_eff = std::max(trace.sigma2[t](col), is_lamp ? 0.0 : 1e-30);
        for (int i = 0; i < n; ++i) {
          const cx r = trace.r[t](i, col);
          const cx gh = g_h(i, col);
          const cx gh_c = std::conj(gh);
          if (is_lamp) {
            const SoftThresholdGrads f = soft_threshold_full(r, lambda, s_eff);
            cx gr = gh * std::conj(f.dr) + gh_c * f.drc;
            double gs = 2.0 * std::real(gh_c * f.ds);
            if (onsager_flow) {
              gr += inv_m * (gb * std::conj(f.dr_r) + gb_c * f.dr_rc + gc * std::conj(f.drc_r) +
                             gc_c * f.drc_rc);
              gs += inv_m * 2.0 * std::real(gb_c * f.dr_s + gc_c * f.drc_s);
            }
            g_r(i, col) = gr;
            g_s(col) += gs;
            if (want_params) {
              g_lambda += 2.0 * std::real(gh_c * f.dlambda);
              if (onsager_flow)
                g_lambda += inv_m * 2.0 * std::real(gb_c * f.dr_lambda + gc_c * f.drc_lambda);
            }
          } else {
            gm_eval(r, pre, s_eff, GradOrder::Full, gg, ws);
            cx gr = gh * std::conj(gg.dr) + gh_c * gg.drc;
            double gs = 2.0 * std::real(gh_c * gg.ds);
            if (onsager_flow) {
              gr += inv_m * (gb * std::conj(gg.dr_r) + gb_c * gg.dr_rc + gc * std::conj(gg.drc_r) +
                             gc_c * gg.drc_rc);
              gs += inv_m * 2.0 * std::real(gb_c * gg.dr_s + gc_c * gg.drc_s);
            }
            g_r(i, col) = gr;
            g_s(col) += gs;
            if (want_params) {
              for (int k = 0; k < nc; ++k) {
                double dw = 2.0 * std::real(gh_c * gg.dw(k));
                double dlv = 2.0 * std::real(gh_c * gg.dlv(k));
                cx dmu = gh * std::conj(gg.dmu(k)) + gh_c * gg.dmuc(k);
                if (onsager_flow) {
                  dw += inv_m * 2.0 * std::real(gb_c * gg.dr_w(k) + gc_c * gg.drc_w(k));
                  dlv += inv_m * 2.0 * std::real(gb_c * gg.dr_lv(k) + gc_c * gg.drc_lv(k));
                  dmu += inv_m * (gb * std::conj(gg.dr_mu(k)) + gb_c * gg.dr_muc(k) +
                                  gc * std::conj(gg.drc_mu(k)) + gc_c * gg.drc_muc(k));
                }
                g_w(k) += dw;
                g_lv(k) += dlv;
                g_mu(k) += dmu;
              }
            }
          }
        }
      }
      if (want_params) {
        RVec raw(shrink_raw_size(layer));
        if (is_lamp) {
          raw(0) = g_lambda;
        } else {
          raw.head(nc) = g_w;
          for (int k = 0; k < nc; ++k) {
            raw(nc + 2 * k) = 2.0 * g_mu(k).real();
            raw(nc + 2 * k + 1) = 2.0 * g_mu(k).imag();
          }
          raw.tail(nc) = g_lv;
        }
        grads.shrink[t] = std::move(raw);
      }
    } else {
      g_r = (head - batch.truth) * inv_d;  // linear loss sits directly on r_t
    }

    if (mask.b[t]) {
      CMat g_bmat = g_r * trace.v[t].adjoint();
      grads.b[t] = 2.0 * real_view(g_bmat);
    }

    // flow into the layer inputs
    CMat g_v_prev = layer.b.adjoint() * g_r;
    if (has_next) {
      for (Eigen::Index col = 0; col < d; ++col)
        g_v_prev.col(col) += std::conj(trace.ons_b[t](col)) * g_v.col(col) +
                             trace.ons_c[t](col) * g_v.col(col).conjugate();
    }
    if (shrink_ran && !cfg.detach_sigma2) {
      for (Eigen::Index col = 0; col < d; ++col)
        g_v_prev.col(col) += (g_s(col) * inv_m) * trace.v[t].col(col);
    }
    g_h = std::move(g_r);
    g_v = std::move(g_v_prev);
  }

  // masked variables that sit outside the differentiated graph (the last
  // layer's shrinkage under a linear head) report explicit zeros
  for (int t = 0; t <= tl; ++t)
    if (mask.shrink[t] && grads.shrink[t].size() == 0)
      grads.shrink[t] = RVec::Zero(shrink_raw_size(net.layers[t]));

  for (int t = 0; t <= tl; ++t) {
    if (grads.b[t].size() || grads.shrink[t].size()) {
      const bool bad_b = grads.b[t].size() && !grads.b[t].allFinite();
      const bool bad_s = grads.shrink[t].size() && !grads.shrink[t].allFinite();
      if (bad_b || bad_s)
        throw std::runtime_error("loss_and_grad: non-finite gradient at layer " +
                                 std::to_string(t) + (bad_b ? " (linear transform)" : " (shrinkage)"));
    }
  }
  return {loss, std::move(grads)};
}

AdamState AdamState::init(const UnfoldedNetwork& net, const TrainMask& mask, int n, int m) {
  AdamState st;
  const int depth = net.depth();
  st.m_b.resize(depth);
  st.v_b.resize(depth);
  st.m_shrink.resize(depth);
  st.v_shrink.resize(depth);
  for (int t = 0; t < depth; ++t) {
    if (mask.b[t]) {
      st.m_b[t] = RVec::Zero(2 * n * m);
      st.v_b[t] = RVec::Zero(2 * n * m);
    }
    if (mask.shrink[t]) {
      const int sz = shrink_raw_size(net.layers[t]);
      st.m_shrink[t] = RVec::Zero(sz);
      st.v_shrink[t] = RVec::Zero(sz);
    }
  }
  return st;
}

namespace {

void adam_update(RVec& param, const RVec& grad, RVec& m, RVec& v, double lr, std::int64_t step,
                 const AdamParams& ap) {
  m = ap.beta1 * m + (1.0 - ap.beta1) * grad;
  v = ap.beta2 * v + (1.0 - ap.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(ap.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(ap.beta2, static_cast<double>(step));
  param -= lr * (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + ap.epsilon).matrix());
}

}  // namespace

void adam_step(UnfoldedNetwork& net, const GradientSet& grads, AdamState& state, double lr,
               const TrainMask& mask, const AdamParams& ap) {
  ++state.step;
  for (int t = 0; t < net.depth(); ++t) {
    if (mask.b[t]) {
      if (!grads.b[t].size()) throw std::invalid_argument("adam_step: missing B gradient");
      Eigen::Map<RVec> param(reinterpret_cast<double*>(net.layers[t].b.data()),
                             2 * net.layers[t].b.size());
      RVec p = param;
      adam_update(p, grads.b[t], state.m_b[t], state.v_b[t], lr, state.step, ap);
      param = p;
    }
    if (mask.shrink[t]) {
      if (!grads.shrink[t].size()) throw std::invalid_argument("adam_step: missing shrink gradient");
      RVec raw = get_shrink_raw(net.layers[t]);
      adam_update(raw, grads.shrink[t], state.m_shrink[t], state.v_shrink[t], lr, state.step, ap);
      if (net.kind == NetKind::Lamp) raw(0) = std::max(raw(0), 0.0);  // keep lambda admissible
      set_shrink_raw(net.layers[t], raw);
    }
  }
}

namespace {

MeasurementBatch take_columns(const MeasurementBatch& b, const std::vector<int>& idx, int lo,
                              int hi) {
  MeasurementBatch out;
  const int count = hi - lo;
  out.y.resize(b.y.rows(), count);
  out.truth.resize(b.truth.rows(), count);
  out.snr_db.resize(count);
  for (int j = 0; j < count; ++j) {
    const int src = idx[lo + j];
    out.y.col(j) = b.y.col(src);
    out.truth.col(j) = b.truth.col(src);
    out.snr_db(j) = b.snr_db(src);
  }
  return out;
}

struct PhaseContext {
  const SensingSystem& sys;
  const MeasurementBatch& train;
  const MeasurementBatch& val;
  const TrainConfig& cfg;
  TrainReport& report;
  std::int64_t& global_step;
  TrainLogger& logger;
};

void log_line(const TrainLogger& logger, const std::string& msg) {
  if (logger) logger(msg);
}

void run_phase(UnfoldedNetwork& net, PhaseContext& ctx, const std::string& phase, int sub_t,
               LossSpec spec, const TrainMask& mask, const std::vector<double>& lrs,
               SplitRng rng) {
  AdamState state = AdamState::init(net, mask, ctx.sys.n, ctx.sys.m);
  UnfoldedNetwork best = net;
  double best_val = std::numeric_limits<double>::infinity();
  int bad = 0;
  std::size_t lr_idx = 0;
  std::int64_t steps = 0;

  std::vector<int> order(ctx.train.size());
  std::iota(order.begin(), order.end(), 0);

  bool done = false;
  for (int epoch = 0; !done; ++epoch) {
    // deterministic Fisher-Yates reshuffle per epoch
    SplitRng erng = rng.split(static_cast<std::uint64_t>(epoch));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(erng.next_u64() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    double train_sum = 0.0;
    int nb = 0;
    for (int lo = 0; lo < ctx.train.size(); lo += ctx.cfg.batch_size) {
      const int hi = std::min(lo + ctx.cfg.batch_size, ctx.train.size());
      const MeasurementBatch mb = take_columns(ctx.train, order, lo, hi);
      double l = 0;
      GradientSet g;
      try {
        std::tie(l, g) = loss_and_grad(ctx.sys, net, mb, spec, mask, ctx.cfg);
      } catch (const std::runtime_error& e) {
        ctx.report.phases.push_back({phase, sub_t, std::numeric_limits<double>::quiet_NaN(), steps});
        throw training_diverged(std::string("training aborted in phase ") + phase + ": " + e.what(),
                                ctx.report);
      }
      if (!std::isfinite(l)) {
        ctx.report.phases.push_back({phase, sub_t, l, steps});
        throw training_diverged("training loss diverged in phase " + phase, ctx.report);
      }
      adam_step(net, g, state, lrs[lr_idx], mask);
      train_sum += l;
      ++nb;
      ++steps;
      ++ctx.global_step;
      if (steps >= ctx.cfg.max_steps) {
        done = true;
        break;
      }
    }
    const double vloss = loss_value(ctx.sys, net, ctx.val, spec);
    if (!std::isfinite(vloss)) {
      ctx.report.phases.push_back({phase, sub_t, vloss, steps});
      throw training_diverged("validation loss diverged in phase " + phase, ctx.report);
    }
    ctx.report.rows.push_back({ctx.global_step, phase, train_sum / std::max(nb, 1), vloss});
    if (vloss < best_val * (1.0 - ctx.cfg.improve_rel)) {
      best_val = vloss;
      best = net;
      bad = 0;
    } else if (++bad >= ctx.cfg.patience) {
      bad = 0;
      if (++lr_idx >= lrs.size()) done = true;
    }
  }
  net = best;
  ctx.report.phases.push_back({phase, sub_t, best_val, steps});
  char buf[160];
  std::snprintf(buf, sizeof buf, "phase %-22s steps=%-6lld best val=%.6g", phase.c_str(),
                static_cast<long long>(steps), best_val);
  log_line(ctx.logger, buf);
}

TrainMask prefix_mask(int depth, int b_upto, int shrink_upto) {
  TrainMask m = TrainMask::none(depth);
  for (int t = 0; t <= b_upto; ++t) m.b[t] = 1;
  for (int t = 0; t <= shrink_upto; ++t) m.shrink[t] = 1;
  return m;
}

TrainMask single_mask(int depth, int t, bool b, bool shrink) {
  TrainMask m = TrainMask::none(depth);
  if (b) m.b[t] = 1;
  if (shrink) m.shrink[t] = 1;
  return m;
}

}  // namespace

std::pair<UnfoldedNetwork, TrainReport> train_layer_by_layer(
    const SensingSystem& sys, const MeasurementBatch& train, const MeasurementBatch& val,
    NetKind kind, int depth, const TrainConfig& cfg, int nc, TrainObserver observer,
    TrainLogger logger) {
  if (train.size() < 1 || val.size() < 1)
    throw std::invalid_argument("train_layer_by_layer: empty dataset");
  if (depth < 1) throw std::invalid_argument("train_layer_by_layer: depth must be >= 1");
  const auto t_start = std::chrono::steady_clock::now();

  UnfoldedNetwork net =
      kind == NetKind::Lamp ? make_lamp(sys, depth, 1.0) : make_gmlamp(sys, depth, nc);
  TrainReport report;
  std::int64_t global_step = 0;
  PhaseContext ctx{sys, train, val, cfg, report, global_step, logger};
  SplitRng rng = SplitRng(cfg.seed).split("layer-by-layer");
  const std::vector<double> ind = {cfg.lr_individual};
  int phase_no = 0;
  const auto notify = [&](const std::string& name, int t) {
    if (observer) observer(name, t, net);
  };

  notify("t0:start", 0);
  run_phase(net, ctx, "t0:linear:B", 0, {LossKind::Linear, 0}, single_mask(depth, 0, true, false),
            ind, rng.split(phase_no++));
  run_phase(net, ctx, "t0:nonlinear:shrink", 0, {LossKind::Nonlinear, 0},
            single_mask(depth, 0, false, true), ind, rng.split(phase_no++));
  run_phase(net, ctx, "t0:nonlinear:joint", 0, {LossKind::Nonlinear, 0}, prefix_mask(depth, 0, 0),
            cfg.lr_joint, rng.split(phase_no++));

  for (int t = 1; t < depth; ++t) {
    net.layers[t].b = net.layers[t - 1].b;
    net.layers[t].shrink = net.layers[t - 1].shrink;
    notify("t" + std::to_string(t) + ":init", t);
    const std::string pt = "t" + std::to_string(t);
    run_phase(net, ctx, pt + ":linear:B", t, {LossKind::Linear, t},
              single_mask(depth, t, true, false), ind, rng.split(phase_no++));
    run_phase(net, ctx, pt + ":linear:joint", t, {LossKind::Linear, t},
              prefix_mask(depth, t, t - 1), cfg.lr_joint, rng.split(phase_no++));
    run_phase(net, ctx, pt + ":nonlinear:shrink", t, {LossKind::Nonlinear, t},
              single_mask(depth, t, false, true), ind, rng.split(phase_no++));
    run_phase(net, ctx, pt + ":nonlinear:joint", t, {LossKind::Nonlinear, t},
              prefix_mask(depth, t, t), cfg.lr_joint, rng.split(phase_no++));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {std::move(net), std::move(report)};
}

DualNets dual_snr_training(const SensingSystem& sys, std::span<const ChannelSample> channels,
                           NetKind kind, int depth, const TrainConfig& cfg, int nc,
                           int train_count, int val_count, DualReports* reports,
                           TrainLogger logger) {
  if (channels.empty()) throw std::invalid_argument("dual_snr_training: empty channel source");
  DualNets nets;
  SplitRng base(cfg.seed);
  const struct {
    const char* tag;
    double lo, hi;
  } ranges[2] = {{"low", 0.0, 10.0}, {"high", 10.0, 20.0}};
  for (int which = 0; which < 2; ++which) {
    SplitRng rng = base.split(ranges[which].tag);
    // disjoint halves of the pool for train and validation channels
    const std::size_t split_at = channels.size() - std::min<std::size_t>(channels.size() / 10 + 1,
                                                                         channels.size() - 1);
    const auto train_ch = channels.subspan(0, split_at);
    const auto val_ch = channels.subspan(split_at);
    SplitRng train_rng = rng.split("train");
    SplitRng val_rng = rng.split("val");
    const MeasurementBatch train =
        build_dataset(train_ch, sys, SnrPolicy::range(ranges[which].lo, ranges[which].hi),
                      train_count, train_rng);
    const MeasurementBatch val = build_dataset(
        val_ch, sys, SnrPolicy::range(ranges[which].lo, ranges[which].hi), val_count, val_rng);
    TrainConfig sub = cfg;
    sub.seed = rng.split("order").next_u64();
    auto [net, rep] = train_layer_by_layer(sys, train, val, kind, depth, sub, nc, {}, logger);
    if (which == 0) {
      nets.low = std::move(net);
      if (reports) reports->low = std::move(rep);
    } else {
      nets.high = std::move(net);
      if (reports) reports->high = std::move(rep);
    }
  }
  return nets;
}

void save_train_report_csv(const std::string& path, const TrainReport& report) {
  std::ofstream f(path);
  if (!f) throw io_error("save_train_report_csv: cannot open " + path);
  f << "step,phase,train_loss,val_loss\n";
  char buf[128];
  for (const TrainRow& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%lld,%s,%.9g,%.9g\n", static_cast<long long>(row.step),
                  row.phase.c_str(), row.train_loss, row.val_loss);
    f << buf;
  }
  if (!f) throw io_error("save_train_report_csv: write failed for " + path);
}

}  // namespace beamscope
