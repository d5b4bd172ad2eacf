#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "beamscope/channel.hpp"
#include "beamscope/eval.hpp"

using namespace beamscope;

TEST_CASE("nmse definition") {
  SUBCASE("perfect recovery floors at -150 dB") {
    CMat t(2, 2);
    t << cx(1, 0), cx(0, 1), cx(2, 0), cx(0, -1);
    CHECK(nmse(t, t) == 0.0);
    CHECK(nmse_db(nmse(t, t)) == kNmseFloorDb);
  }
  SUBCASE("zero estimate scores exactly one") {
    CMat t(3, 2);
    t.setConstant(cx(1, 1));
    CHECK(nmse(CMat::Zero(3, 2), t) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(nmse_db(1.0) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("two-sample batch equals the hand-computed ratio of sums") {
    CMat t(2, 2), e(2, 2);
    t << cx(1, 0), cx(0, 2), cx(0, 1), cx(1, 1);
    e << cx(1, 1), cx(0, 2), cx(0, 1), cx(0, 1);
    // errors: |j|^2 = 1 on sample 0, |1|^2 = 1 on sample 1; energy 1+4+1+2
    CHECK(nmse(e, t) == doctest::Approx(2.0 / 8.0).epsilon(1e-15));
  }
  SUBCASE("ratio of sums is the energy-weighted mix of per-sample ratios") {
    SplitRng rng(1);
    CMat t(4, 6), e(4, 6);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j) {
        t(i, j) = rng.cnormal();
        e(i, j) = t(i, j) + 0.3 * rng.cnormal();
      }
    double num = 0, den = 0;
    for (int j = 0; j < 6; ++j) {
      num += (e.col(j) - t.col(j)).squaredNorm();
      den += t.col(j).squaredNorm();
    }
    CHECK(nmse(e, t) == doctest::Approx(num / den).epsilon(1e-13));
  }
  SUBCASE("invariant under a global unitary") {
    SplitRng rng(2);
    CMat t(16, 4), e(16, 4);
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 4; ++j) {
        t(i, j) = rng.cnormal();
        e(i, j) = t(i, j) + 0.2 * rng.cnormal();
      }
    const CMat u = lens_matrix(ArrayGeometry::ula(16));  // any unitary works
    CHECK(nmse(u * e, u * t) == doctest::Approx(nmse(e, t)).epsilon(1e-12));
  }
  SUBCASE("zero truth energy is rejected") {
    CHECK_THROWS_AS(nmse(CMat::Zero(2, 2), CMat::Zero(2, 2)), std::invalid_argument);
  }
}

TEST_CASE("config parser") {
  const std::string text = R"(
# experiment
schema_version = 1

[geometry]
kind = "ula"
n = 64

[system]
m = 32
num_paths = 3

[data]
train_size = 100
val_size = 50
test_size = 25

[eval]
snr_grid_db = [0, 5, 10]

[estimators.amp]
iterations = 9
lambda = 1.25

[estimators.omp]
sparsity = 8

[seeds]
master = 42

[output]
dir = "outdir"   # trailing comment
)";
  const ConfigTree tree = ConfigTree::parse_string(text, "test.toml");
  CHECK(tree.require_int("schema_version") == 1);
  CHECK(tree.get_string("geometry.kind", "") == "ula");
  CHECK(tree.get_double("estimators.amp.lambda", 0) == 1.25);
  CHECK(tree.get_double_array("eval.snr_grid_db", {}) == std::vector<double>{0, 5, 10});
  CHECK(tree.has_section("estimators.omp"));
  CHECK(!tree.has_section("estimators.lamp"));
  CHECK(tree.get_string("output.dir", "") == "outdir");

  const ExperimentConfig cfg = ExperimentConfig::from_tree(tree);
  CHECK(cfg.geometry.size() == 64);
  CHECK(cfg.m == 32);
  CHECK(cfg.seed == 42);
  REQUIRE(cfg.estimators.size() == 2);
  CHECK(cfg.estimators[0].name == "omp");
  CHECK(cfg.estimators[1].name == "amp");
  CHECK(cfg.estimators[1].iterations == 9);

  SUBCASE("parse errors carry the line number") {
    try {
      ConfigTree::parse_string("a = 1\nbad line\n", "x.toml");
      FAIL("expected error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("x.toml:2") != std::string::npos);
    }
  }
  SUBCASE("duplicate keys are rejected") {
    CHECK_THROWS(ConfigTree::parse_string("a = 1\na = 2\n"));
  }
  SUBCASE("schema version is enforced") {
    CHECK_THROWS(ExperimentConfig::from_tree(ConfigTree::parse_string("schema_version = 9\n")));
  }
  SUBCASE("unsorted snr grid is rejected") {
    std::string bad = text;
    const auto pos = bad.find("[0, 5, 10]");
    bad.replace(pos, 10, "[5, 0, 10]");
    CHECK_THROWS(ExperimentConfig::from_tree(ConfigTree::parse_string(bad)));
  }
}

TEST_CASE("csv export") {
  const auto dir = std::filesystem::temp_directory_path() / "beamscope_csv_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "r.csv").string();

  SUBCASE("empty result writes only the header") {
    export_csv(ExperimentResult{}, path);
    std::ifstream f(path);
    std::string line;
    CHECK(std::getline(f, line));
    CHECK(line == "estimator,snr_db,nmse_db,n_test,multiplies,wall_ms");
    CHECK(!std::getline(f, line));
  }

  SUBCASE("rows round-trip through a parse") {
    ExperimentResult result;
    result.rows.push_back({"amp", 5.0, -12.3456789, 2000, 672000, 0.0});
    result.rows.push_back({"omp", 10.0, -8.25, 2000, 39744, 0.0});
    export_csv(result, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);  // header
    std::vector<ResultRow> parsed;
    while (std::getline(f, line)) {
      std::stringstream ss(line);
      ResultRow row;
      std::string tok;
      std::getline(ss, row.estimator, ',');
      std::getline(ss, tok, ',');
      row.snr_db = std::stod(tok);
      std::getline(ss, tok, ',');
      row.nmse_db = std::stod(tok);
      std::getline(ss, tok, ',');
      row.n_test = std::stoll(tok);
      std::getline(ss, tok, ',');
      row.multiplies = std::stoll(tok);
      std::getline(ss, tok, ',');
      row.wall_ms = std::stod(tok);
      parsed.push_back(row);
    }
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].estimator == "amp");
    CHECK(parsed[0].snr_db == 5.0);
    // six significant digits survive the round trip
    CHECK(parsed[0].nmse_db == doctest::Approx(-12.3456789).epsilon(1e-5));
    CHECK(parsed[0].multiplies == 672000);
    CHECK(parsed[1].estimator == "omp");
    CHECK(parsed[1].n_test == 2000);
  }

  SUBCASE("twenty rows make a twenty-one line file") {
    ExperimentResult result;
    for (int e = 0; e < 4; ++e)
      for (int s = 0; s < 5; ++s)
        result.rows.push_back({"est" + std::to_string(e), 5.0 * s, -3.0, 10, 100, 0.0});
    export_csv(result, path);
    std::ifstream f(path);
    int lines = 0;
    std::string line;
    while (std::getline(f, line)) ++lines;
    CHECK(lines == 21);
  }
}

TEST_CASE("run_sweep produces a full estimator-by-snr grid") {
  // small configuration with the two classical estimators only, so no
  // checkpoints are required
  const std::string text = R"(
schema_version = 1
[geometry]
kind = "ula"
n = 32
[system]
m = 16
[data]
test_size = 64
[eval]
snr_grid_db = [0, 10]
[estimators.omp]
sparsity = 4
[estimators.amp]
iterations = 6
[seeds]
master = 7
)";
  ExperimentConfig cfg = ExperimentConfig::from_tree(ConfigTree::parse_string(text));
  const ExperimentResult result = run_sweep(cfg);
  REQUIRE(result.rows.size() == 4);  // 2 estimators x 2 SNRs, sorted
  CHECK(result.rows[0].estimator == "amp");
  CHECK(result.rows[0].snr_db == 0.0);
  CHECK(result.rows[3].estimator == "omp");
  CHECK(result.rows[3].snr_db == 10.0);
  for (const ResultRow& row : result.rows) {
    CHECK(std::isfinite(row.nmse_db));
    CHECK(row.n_test == 64);
    CHECK(row.wall_ms == 0.0);
    CHECK(row.multiplies ==
          count_multiplies(row.estimator == "amp" ? EstimatorKind::Amp : EstimatorKind::Omp, 32,
                           16, row.estimator == "amp" ? 6 : 4));
  }

  SUBCASE("higher snr helps both estimators") {
    CHECK(result.rows[1].nmse_db < result.rows[0].nmse_db);  // amp at 10 vs 0 dB
    CHECK(result.rows[3].nmse_db < result.rows[2].nmse_db);  // omp at 10 vs 0 dB
  }

  SUBCASE("missing checkpoints name the estimator") {
    ExperimentConfig bad = cfg;
    EstimatorSpec est;
    est.kind = EstimatorKind::Lamp;
    est.name = "lamp";
    est.checkpoint = "nonexistent";
    bad.estimators.push_back(est);
    bad.output_dir = (std::filesystem::temp_directory_path() / "beamscope_missing").string();
    try {
      run_sweep(bad);
      FAIL("expected error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("lamp") != std::string::npos);
    }
  }

  SUBCASE("identical seeds give identical sweeps, threads do not change results") {
    const ExperimentResult again = run_sweep(cfg);
    SweepOptions threaded;
    threaded.threads = 4;
    const ExperimentResult par = run_sweep(cfg, threaded);
    REQUIRE(again.rows.size() == result.rows.size());
    REQUIRE(par.rows.size() == result.rows.size());
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
      CHECK(again.rows[i].nmse_db == result.rows[i].nmse_db);
      CHECK(par.rows[i].nmse_db == result.rows[i].nmse_db);
    }
  }

  SUBCASE("single estimator and single snr give one row") {
    ExperimentConfig tiny = cfg;
    tiny.estimators.resize(1);
    tiny.snr_grid_db = {5.0};
    tiny.test_size = 1;
    const ExperimentResult one = run_sweep(tiny);
    CHECK(one.rows.size() == 1);
    CHECK(one.rows[0].n_test == 1);
  }
}
