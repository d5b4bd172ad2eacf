#include <doctest.h>

#include "beamscope/rng.hpp"

using namespace beamscope;

TEST_CASE("identical seeds give identical streams") {
  SplitRng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("split streams are independent of parent draw position") {
  SplitRng a(7);
  SplitRng child_before = a.split(3);
  a.next_u64();
  a.next_u64();
  SplitRng child_after = a.split(3);
  for (int i = 0; i < 16; ++i) CHECK(child_before.next_u64() == child_after.next_u64());
  SplitRng other = a.split(4);
  CHECK(a.split(3).next_u64() != other.next_u64());
}

TEST_CASE("labelled splits differ") {
  SplitRng a(7);
  CHECK(a.split("train").next_u64() != a.split("val").next_u64());
}

TEST_CASE("uniform stays in [0,1) and open variant excludes endpoints") {
  SplitRng a(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    const double v = a.uniform_open(-1.0, 1.0);
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("complex normal has unit power") {
  SplitRng a(3);
  double acc = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) acc += std::norm(a.cnormal());
  CHECK(acc / n == doctest::Approx(1.0).epsilon(0.02));
}
