#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "beamscope/channel.hpp"

using namespace beamscope;

namespace {

double max_abs(const CMat& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("ULA steering at broadside is constant") {
  const auto g = ArrayGeometry::ula(4);
  const CVec a = steering_ula(g, 0.0);
  for (int i = 0; i < 4; ++i) {
    CHECK(a(i).real() == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(a(i).imag() == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("ULA steering is unit norm") {
  const auto g = ArrayGeometry::ula(256);
  SplitRng rng(9);
  for (int i = 0; i < 20; ++i) {
    const CVec a = steering_ula(g, rng.uniform(-1.5, 1.5));
    CHECK(std::abs(a.norm() - 1.0) < 1e-14);
  }
}

TEST_CASE("ULA steering phase ramp") {
  // theta = pi/6, d/lambda = 1/2: element 1 carries phase -2*pi*(1/4)
  const auto g = ArrayGeometry::ula(8);
  const CVec a = steering_ula(g, kPi / 6.0);
  CHECK(std::arg(a(1)) == doctest::Approx(-kPi / 2.0).epsilon(1e-12));
}

TEST_CASE("steering rejects wrong geometry kind") {
  CHECK_THROWS_AS(steering_ula(ArrayGeometry::upa(2, 2), 0.1), std::invalid_argument);
  CHECK_THROWS_AS(steering_upa(ArrayGeometry::ula(4), 0.1, 0.1), std::invalid_argument);
}

TEST_CASE("UPA steering collapses to constant when both spatial angles vanish") {
  const auto g = ArrayGeometry::upa(2, 2);
  const CVec a = steering_upa(g, 0.0, kPi / 2.0);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(a(i) - cx(0.5, 0.0)) < 1e-10);
}

TEST_CASE("UPA steering equals the explicit double-loop expansion") {
  const auto g = ArrayGeometry::upa(3, 5);
  SplitRng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const double azi = rng.uniform_open(-kPi / 2, kPi / 2);
    const double ele = rng.uniform_open(-kPi / 2, kPi / 2);
    const CVec a = steering_upa(g, azi, ele);
    CHECK(std::abs(a.norm() - 1.0) < 1e-14);
    const double psi_a = 0.5 * std::sin(azi) * std::sin(ele);
    const double psi_e = 0.5 * std::cos(ele);
    const double norm = 1.0 / std::sqrt(15.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) {
        const double ph = -2.0 * kPi * (psi_a * i + psi_e * j);
        const cx want = norm * cx(std::cos(ph), std::sin(ph));
        CHECK(std::abs(a(i * 5 + j) - want) < 1e-12);
      }
  }
}

TEST_CASE("lens matrices are unitary") {
  for (int n : {4, 16, 64, 256}) {
    const CMat u = lens_matrix(ArrayGeometry::ula(n));
    const CMat eye = CMat::Identity(n, n);
    CHECK(max_abs(u * u.adjoint() - eye) < 1e-12);
  }
  const CMat u = lens_matrix(ArrayGeometry::upa(4, 4));
  CHECK(max_abs(u * u.adjoint() - CMat::Identity(16, 16)) < 1e-12);
}

TEST_CASE("lens grid for N=4") {
  // directions (n - (N+1)/2)/N for n = 1..4
  const CMat u = lens_matrix(ArrayGeometry::ula(4));
  const double want[4] = {-3.0 / 8.0, -1.0 / 8.0, 1.0 / 8.0, 3.0 / 8.0};
  for (int row = 0; row < 4; ++row) {
    // recover psi from the phase of the second column, e^{+j*2*pi*psi}
    const double psi = std::arg(u(row, 1)) / (2.0 * kPi);
    CHECK(psi == doctest::Approx(want[row]).epsilon(1e-12));
  }
}

TEST_CASE("sampled channel energy matches antenna count") {
  const auto g = ArrayGeometry::ula(256);
  SplitRng rng(123);
  const int draws = 10000;
  double acc = 0;
  const CMat lens = lens_matrix(g);
  for (int i = 0; i < draws; ++i) acc += sample_sv_channel(g, 3, rng, lens).spatial.squaredNorm();
  CHECK(acc / draws == doctest::Approx(256.0).epsilon(0.05));
}

TEST_CASE("single fixed path gives a scaled steering vector") {
  const auto g = ArrayGeometry::ula(16);
  // L = 1 so the channel is sqrt(N) * beta * a(theta)
  SplitRng rng(5);
  const ChannelSample s = sample_sv_channel(g, 1, rng);
  const CVec a = steering_ula(g, s.paths[0].azimuth_rad);
  const CVec want = std::sqrt(16.0) * s.paths[0].gain * a;
  CHECK((s.spatial - want).norm() < 1e-12);
}

TEST_CASE("beamspace transform preserves the norm") {
  SplitRng rng(17);
  for (const ArrayGeometry& g : {ArrayGeometry::ula(64), ArrayGeometry::upa(8, 8)}) {
    const CMat lens = lens_matrix(g);
    for (int i = 0; i < 50; ++i) {
      const ChannelSample s = sample_sv_channel(g, 3, rng, lens);
      CHECK(std::abs(s.spatial.norm() - s.beamspace.norm()) < 1e-10);
    }
  }
}

TEST_CASE("closed-form beamspace element") {
  const auto g = ArrayGeometry::ula(16);
  const CMat lens = lens_matrix(g);

  SUBCASE("single path exactly on a grid direction") {
    // psi_bar for n = 10 (one-based 11): (11 - 8.5)/16
    const double psi_bar = (11.0 - 8.5) / 16.0;
    PathParams p;
    p.gain = cx(0.7, -0.3);
    p.azimuth_rad = std::asin(2.0 * psi_bar);
    const std::vector<PathParams> paths = {p};
    const cx elem = beamspace_element_closed_form(g, paths, 10);
    CHECK(std::abs(elem - std::sqrt(16.0) * p.gain) < 1e-12);
    // off-grid rows see exact zeros
    const cx other = beamspace_element_closed_form(g, paths, 3);
    CHECK(std::abs(other) < 1e-12);
  }

  SUBCASE("random three-path channels match the lens multiply") {
    SplitRng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const ChannelSample s = sample_sv_channel(g, 3, rng, lens);
      for (int nidx = 0; nidx < 16; ++nidx) {
        const cx closed = beamspace_element_closed_form(g, s.paths, nidx);
        CHECK(std::abs(closed - s.beamspace(nidx)) < 1e-9);
      }
    }
  }

  SUBCASE("rejects non-ULA geometry") {
    CHECK_THROWS_AS(beamspace_element_closed_form(ArrayGeometry::upa(4, 4), {}, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("dirichlet kernel basics") {
  CHECK(dirichlet_sinc(0.0, 16) == 1.0);
  CHECK(std::abs(dirichlet_sinc(3.0 / 16.0, 16)) < 1e-15);
  CHECK(std::abs(dirichlet_sinc(1e-18, 16) - 1.0) < 1e-12);
}

TEST_CASE("channel file round trip and error paths") {
  const auto g = ArrayGeometry::ula(16);
  const auto dir = std::filesystem::temp_directory_path() / "beamscope_chan_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "pool.bsch").string();

  SplitRng rng(77);
  const auto pool = sample_sv_channels(g, 3, 3, rng);
  export_channels(path, pool);
  const auto loaded = import_external_channels(path, g);
  REQUIRE(loaded.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK((loaded[i].spatial - pool[i].spatial).norm() == 0.0);
    CHECK(std::abs(loaded[i].beamspace.norm() - loaded[i].spatial.norm()) < 1e-10);
    CHECK(loaded[i].paths.empty());
  }

  SUBCASE("zero-byte file gives an empty pool") {
    const std::string empty = (dir / "empty.bsch").string();
    std::ofstream(empty).close();
    CHECK(import_external_channels(empty, g).empty());
  }

  SUBCASE("truncated record names its index") {
    const std::string cut = (dir / "cut.bsch").string();
    std::filesystem::copy_file(path, cut, std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(cut, 24 + 16 * 16 - 8);  // header + most of record 0
    try {
      import_external_channels(cut, g);
      FAIL("expected io_error");
    } catch (const io_error& e) {
      CHECK(std::string(e.what()).find("record 0") != std::string::npos);
    }
  }

  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(import_external_channels(path, ArrayGeometry::ula(8)), std::invalid_argument);
  }
}
