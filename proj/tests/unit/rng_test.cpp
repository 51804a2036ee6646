#include "doctest.h"

#include <cmath>
#include <set>

#include <vector>
#include "tmlp/rng.hpp"

using tmlp::Rng;

TEST_CASE("same seed reproduces the same sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds and streams decorrelate") {
  Rng a(42), b(43);
  int equal = 0;
  for (int i = 0; i < 64; ++i) equal += a.next_u64() == b.next_u64();
  CHECK(equal == 0);

  Rng s0 = Rng::derive(42, 0), s1 = Rng::derive(42, 1), sub = Rng::derive(42, 0, 1);
  CHECK(s0.next_u64() != s1.next_u64());
  CHECK(Rng::derive(42, 0).next_u64() != sub.next_u64());
  // deriving is itself deterministic
  CHECK(Rng::derive(9, 3, 7).next_u64() == Rng::derive(9, 3, 7).next_u64());
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Rng rng(1);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform(lo,hi) respects bounds") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-0.25, 0.75);
    CHECK(u >= -0.25);
    CHECK(u < 0.75);
  }
}

TEST_CASE("uniform_index covers [0,n) uniformly enough") {
  Rng rng(3);
  const std::uint64_t n = 7;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.uniform_index(n);
    REQUIRE(v < n);
    ++counts[v];
  }
  for (auto c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}

TEST_CASE("normal has roughly standard moments") {
  Rng rng(4);
  const int n = 200000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}
