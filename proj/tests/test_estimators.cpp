#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "beamscope/channel.hpp"
#include "beamscope/estimators.hpp"

using namespace beamscope;

namespace {

// k-sparse complex vector with unit-ish coefficients
CVec sparse_signal(int n, int k, SplitRng& rng) {
  CVec h = CVec::Zero(n);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.next_u64() % (n - i));
    std::swap(idx[i], idx[j]);
    h(idx[i]) = rng.cnormal() + cx(0.5, 0.0);
  }
  return h;
}

double nmse_of(const CVec& est, const CVec& truth) {
  return (est - truth).squaredNorm() / truth.squaredNorm();
}

}  // namespace

TEST_CASE("amp fixed point at the origin") {
  SplitRng rng(1);
  const SensingSystem sys = gen_sensing(32, 16, rng);
  const CVec y = CVec::Zero(16);
  const auto [est, trace] = amp_estimate(sys, y, {8, 1.1402});
  CHECK(est.norm() == 0.0);
  CHECK(trace.estimate.size() == 8);
  for (const CVec& h : trace.estimate) CHECK(h.norm() == 0.0);
}

TEST_CASE("amp recovers a sparse vector in the benign regime") {
  // spikes kept clear of the initial threshold so the iteration cannot stall
  // on the all-zero fixed point
  SplitRng rng(2);
  const SensingSystem sys = gen_sensing(64, 32, rng);
  double worst = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 10; ++trial) {
    CVec h = sparse_signal(64, 4, rng);
    for (int j = 0; j < 64; ++j)
      if (h(j) != cx(0, 0) && std::abs(h(j)) < 1.0) h(j) *= 1.0 / std::abs(h(j));
    const CVec y = sys.a * h;  // noiseless
    const auto [est, trace] = amp_estimate(sys, y, {30, 1.1402});
    worst = std::max(worst, 10.0 * std::log10(nmse_of(est, h)));
  }
  CHECK(worst <= -30.0);
}

TEST_CASE("amp phase equivariance holds when the conjugate coefficient vanishes") {
  // lambda = 0 keeps the shrinkage linear, so c_t = 0 throughout
  SplitRng rng(3);
  const SensingSystem sys = gen_sensing(24, 12, rng);
  CVec y(12);
  for (int i = 0; i < 12; ++i) y(i) = rng.cnormal();
  const cx rot = std::polar(1.0, 1.1);
  const CVec a = amp_estimate(sys, rot * y, {6, 0.0}).first;
  const CVec b = rot * amp_estimate(sys, y, {6, 0.0}).first;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("large threshold shrinks everything to zero") {
  SplitRng rng(4);
  const SensingSystem sys = gen_sensing(24, 12, rng);
  CVec y(12);
  for (int i = 0; i < 12; ++i) y(i) = rng.cnormal();
  const auto [est, trace] = amp_estimate(sys, y, {4, 1e6});
  CHECK(est.norm() == 0.0);
}

TEST_CASE("lamp with transposed sensing equals amp") {
  SplitRng rng(5);
  double worst = 0;
  for (int inst = 0; inst < 100; ++inst) {
    SplitRng sub = rng.split(inst);
    const SensingSystem sys = gen_sensing(64, 32, sub);
    const CVec h = sparse_signal(64, 5, sub);
    CVec y = sys.a * h;
    for (int i = 0; i < 32; ++i) y(i) += 0.05 * sub.cnormal();
    const UnfoldedNetwork net = make_lamp(sys, 10, 1.1402);
    const CVec via_lamp = lamp_forward(sys, y, net).first;
    const CVec via_amp = amp_estimate(sys, y, {10, 1.1402}).first;
    worst = std::max(worst, (via_lamp - via_amp).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("lamp trace shapes and zero input") {
  SplitRng rng(6);
  const SensingSystem sys = gen_sensing(16, 8, rng);
  const UnfoldedNetwork net = make_lamp(sys, 3, 1.0);
  const auto [est, trace] = lamp_forward(sys, CVec::Zero(8), net);
  CHECK(est.norm() == 0.0);
  CHECK(trace.r.size() == 3);
  CHECK(trace.residual.size() == 3);
  CHECK(trace.sigma2.size() == 3);
  CHECK_THROWS_AS(gmlamp_forward(sys, CVec::Zero(8), net), std::invalid_argument);
}

TEST_CASE("gm-lamp with a near-spike prior pins the estimate at zero") {
  SplitRng rng(7);
  const SensingSystem sys = gen_sensing(16, 8, rng);
  UnfoldedNetwork net = make_gmlamp(sys, 3, 4);
  for (LayerParams& l : net.layers) l.gm().log_vars.setConstant(std::log(1e-8));
  CVec y(8);
  for (int i = 0; i < 8; ++i) y(i) = rng.cnormal();
  const auto [est, trace] = gmlamp_forward(sys, y, net);
  CHECK(est.cwiseAbs().maxCoeff() < 1e-4);
  CHECK_THROWS_AS(lamp_forward(sys, y, net), std::invalid_argument);
}

TEST_CASE("gm-lamp with single zero-mean components composes an explicit linear map") {
  // Wiener shrinkage is linear, so the whole network is an affine map of y
  // that can be composed symbolically layer by layer.
  SplitRng rng(8);
  const SensingSystem sys = gen_sensing(12, 6, rng);
  const int depth = 3;
  UnfoldedNetwork net = make_gmlamp(sys, depth, 1);
  for (LayerParams& l : net.layers) {
    l.gm().means(0) = cx(0, 0);
    l.gm().log_vars(0) = std::log(0.8);
  }
  CVec y(6);
  for (int i = 0; i < 6; ++i) y(i) = rng.cnormal();

  // explicit composition: h_{t+1} = g_t (h_t + B v_t); with a real constant
  // gain the conjugate Onsager coefficient stays zero
  const RMat& a = sys.a;
  const CMat b = sys.a.transpose().cast<cx>();
  CVec h = CVec::Zero(12);
  CVec v = y;
  for (int t = 0; t < depth; ++t) {
    const double sigma2 = std::max(v.squaredNorm() / 6.0, 1e-30);
    const double gain = 0.8 / (0.8 + sigma2);
    const CVec r = h + b * v;
    const CVec h_next = gain * r;
    const double bcoef = 12.0 * gain / 6.0;  // (1/M) * N * d_r
    v = y - a * h_next + bcoef * v;
    h = h_next;
  }
  const CVec est = gmlamp_forward(sys, y, net).first;
  CHECK((est - h).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("omp recovers a one-sparse vector exactly") {
  SplitRng rng(9);
  const SensingSystem sys = gen_sensing(32, 16, rng);
  CVec h = CVec::Zero(32);
  h(13) = cx(1.2, -0.7);
  const CVec y = sys.a * h;
  const CVec est = omp_estimate(sys, y, 1);
  CHECK((est - h).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("omp support size and least-squares optimality") {
  SplitRng rng(10);
  const SensingSystem sys = gen_sensing(64, 32, rng);
  const CVec h = sparse_signal(64, 6, rng);
  CVec y = sys.a * h;
  for (int i = 0; i < 32; ++i) y(i) += 0.02 * rng.cnormal();

  const int s = 8;
  const CVec est = omp_estimate(sys, y, s);
  int support = 0;
  std::vector<int> idx;
  for (int j = 0; j < 64; ++j)
    if (est(j) != cx(0, 0)) {
      ++support;
      idx.push_back(j);
    }
  CHECK(support == s);

  // normal equations on the selected support: A_S^T (y - A_S x) = 0
  RMat live(32, s);
  CVec x(s);
  for (int k = 0; k < s; ++k) {
    live.col(k) = sys.a.col(idx[k]);
    x(k) = est(idx[k]);
  }
  const CVec resid = y - live * x;
  const CVec normal = live.transpose() * resid;
  CHECK(normal.norm() <= 1e-8 * std::max(1.0, y.norm()));
}

TEST_CASE("omp with full support makes the residual orthogonal to every selected column") {
  SplitRng rng(11);
  const SensingSystem sys = gen_sensing(12, 6, rng);
  CVec y(6);
  for (int i = 0; i < 6; ++i) y(i) = rng.cnormal();
  const CVec est = omp_estimate(sys, y, 6);
  const CVec resid = y - sys.a * est;
  for (int j = 0; j < 12; ++j)
    if (est(j) != cx(0, 0))
      CHECK(std::abs(sys.a.col(j).cast<cx>().dot(resid)) <= 1e-8 * std::max(1.0, y.norm()));
  CHECK_THROWS_AS(omp_estimate(sys, y, 7), std::invalid_argument);
}

TEST_CASE("paper-configuration sizes run end to end") {
  SplitRng rng(12);
  const SensingSystem sys = gen_sensing(256, 128, rng);
  const CVec h = sparse_signal(256, 24, rng);
  CVec y = sys.a * h;
  for (int i = 0; i < 128; ++i) y(i) += 0.1 * rng.cnormal();
  const CVec est = omp_estimate(sys, y, 24);
  int support = 0;
  for (int j = 0; j < 256; ++j) support += est(j) != cx(0, 0);
  CHECK(support == 24);
  const auto [amp_est, trace] = amp_estimate(sys, y, {10, 1.1402});
  CHECK(amp_est.allFinite());
}

TEST_CASE("analytic multiply counts reproduce the reported complexity") {
  // N=256, M=128 reference point: OMP(S=24) about 2.9e6, AMP(T=10) about
  // 6.6e5, LAMP(T=8) about 5.3e5, GM-LAMP(T=8, Nc=4) about 6.1e5
  const auto within = [](std::int64_t got, double want) {
    return std::abs(static_cast<double>(got) - want) <= 0.10 * want;
  };
  CHECK(within(count_multiplies(EstimatorKind::Omp, 256, 128, 24), 2.9e6));
  CHECK(within(count_multiplies(EstimatorKind::Amp, 256, 128, 10), 6.6e5));
  CHECK(within(count_multiplies(EstimatorKind::Lamp, 256, 128, 8), 5.3e5));
  CHECK(within(count_multiplies(EstimatorKind::GmLamp, 256, 128, 8, 4), 6.1e5));
}

TEST_CASE("instrumented counters match the analytic counts") {
  for (int n : {64, 128, 256}) {
    const int m = n / 2;
    const int s = n / 8;
    SplitRng rng(1000 + n);
    const SensingSystem sys = gen_sensing(n, m, rng);
    const CVec h = sparse_signal(n, 4, rng);
    CVec y = sys.a * h;
    for (int i = 0; i < m; ++i) y(i) += 0.05 * rng.cnormal();

    MultiplyCounter c_omp;
    omp_estimate(sys, y, s, &c_omp);
    CHECK(c_omp.count == count_multiplies(EstimatorKind::Omp, n, m, s));

    MultiplyCounter c_amp;
    amp_estimate(sys, y, {10, 1.1402}, &c_amp);
    CHECK(c_amp.count == count_multiplies(EstimatorKind::Amp, n, m, 10));

    MultiplyCounter c_lamp;
    lamp_forward(sys, y, make_lamp(sys, 8, 1.1402), &c_lamp);
    CHECK(c_lamp.count == count_multiplies(EstimatorKind::Lamp, n, m, 8));

    MultiplyCounter c_gm;
    gmlamp_forward(sys, y, make_gmlamp(sys, 8, 4), &c_gm);
    CHECK(c_gm.count == count_multiplies(EstimatorKind::GmLamp, n, m, 8, 4));
  }
}

TEST_CASE("checkpoint round trip") {
  SplitRng rng(13);
  const SensingSystem sys = gen_sensing(16, 8, rng);
  const auto dir = std::filesystem::temp_directory_path() / "beamscope_ckpt_test";
  std::filesystem::create_directories(dir);

  SUBCASE("lamp") {
    UnfoldedNetwork net = make_lamp(sys, 3, 1.25);
    net.layers[1].b(2, 3) = cx(0.5, -0.25);
    net.layers[2].st().lambda = 0.75;
    const std::string path = (dir / "lamp.bsnet").string();
    save_checkpoint(path, net, 16, 8);
    const UnfoldedNetwork back = load_checkpoint(path, 16, 8);
    CHECK(back.kind == NetKind::Lamp);
    REQUIRE(back.depth() == 3);
    for (int t = 0; t < 3; ++t) {
      CHECK(back.layers[t].b == net.layers[t].b);
      CHECK(back.layers[t].st().lambda == net.layers[t].st().lambda);
    }
    CHECK_THROWS_AS(load_checkpoint(path, 32, 8), std::invalid_argument);
  }

  SUBCASE("gm-lamp") {
    UnfoldedNetwork net = make_gmlamp(sys, 2, 4);
    net.layers[0].gm().means(2) = cx(0.1, 0.9);
    net.layers[1].gm().weights_raw(0) = -0.4;
    net.layers[1].gm().log_vars(3) = -2.5;
    const std::string path = (dir / "gm.bsnet").string();
    save_checkpoint(path, net, 16, 8);
    const UnfoldedNetwork back = load_checkpoint(path, 16, 8);
    CHECK(back.kind == NetKind::GmLamp);
    REQUIRE(back.depth() == 2);
    for (int t = 0; t < 2; ++t) {
      CHECK(back.layers[t].b == net.layers[t].b);
      CHECK(back.layers[t].gm().weights_raw == net.layers[t].gm().weights_raw);
      CHECK(back.layers[t].gm().means == net.layers[t].gm().means);
      CHECK(back.layers[t].gm().log_vars == net.layers[t].gm().log_vars);
    }
  }
}
