#include <catch2/catch_amalgamated.hpp>

#include "flare/rng.hpp"
#include "flare/vec.hpp"

using namespace flare;

TEST_CASE("axpy basic forms") {
  CHECK(axpy(1.0, {1, 2}, {0, 0}) == ParamVector{1, 2});
  CHECK(axpy(0.0, {5, 5}, {1, 2}) == ParamVector{1, 2});
  CHECK(axpy(-1.0, {1, 1}, {3, 0}) == ParamVector{2, -1});
  CHECK_THROWS_AS(axpy(1.0, {1, 2}, {1}), DimensionError);
}

TEST_CASE("axpy_inplace matches axpy") {
  ParamVector y = {3, 0};
  axpy_inplace(-1.0, {1, 1}, y);
  CHECK(y == ParamVector{2, -1});
}

TEST_CASE("norms") {
  CHECK(norm({3, -4}, Norm::L2sq) == 25.0);
  CHECK(norm({3, -4}, Norm::L1) == 7.0);
  CHECK(norm(ParamVector(5, 0.0), Norm::L1) == 0.0);
  CHECK(norm(ParamVector(5, 0.0), Norm::L2sq) == 0.0);
}

TEST_CASE("L1 squared dominates L2sq") {
  SeededRng rng(1, 0);
  for (int trial = 0; trial < 100; ++trial) {
    ParamVector x = gaussian_vector(rng, 1 + rng.next_u64() % 20, 2.0);
    double l1 = norm(x, Norm::L1);
    CHECK(l1 * l1 >= norm(x, Norm::L2sq) - 1e-12);
  }
}

TEST_CASE("sub/add/dot") {
  CHECK(sub({3, 1}, {1, 2}) == ParamVector{2, -1});
  CHECK(add({3, 1}, {1, 2}) == ParamVector{4, 3});
  CHECK(dot({1, 2, 3}, {4, 5, 6}) == 32.0);
}

TEST_CASE("gaussian_vector determinism and edge cases") {
  CHECK(gaussian_vector(*std::make_unique<SeededRng>(7, 3), 4, 0.0) ==
        ParamVector(4, 0.0));
  SeededRng a(7, 3), b(7, 3);
  CHECK(gaussian_vector(a, 3, 1.0) == gaussian_vector(b, 3, 1.0));
  SeededRng c(7, 4);
  CHECK(gaussian_vector(a, 3, 1.0) != gaussian_vector(c, 3, 1.0));
  SeededRng d(7, 3);
  CHECK_THROWS_AS(gaussian_vector(d, 3, -0.1), ParameterError);
}

TEST_CASE("gaussian_vector second moment matches d sigma^2") {
  const std::size_t d = 3;
  const double sigma = 1.5;
  const int n = 100000;
  SeededRng rng(11, 0);
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += norm(gaussian_vector(rng, d, sigma), Norm::L2sq);
  double expect = double(d) * sigma * sigma;
  CHECK(std::fabs(acc / n - expect) < 0.03 * expect);
}

TEST_CASE("streams are order independent") {
  // Drawing from two streams interleaved must not change either sequence.
  SeededRng s0(42, substream(9, 1)), s1(42, substream(9, 2));
  std::vector<uint64_t> a0, a1;
  for (int i = 0; i < 8; ++i) {
    a0.push_back(s0.next_u64());
    a1.push_back(s1.next_u64());
  }
  SeededRng t0(42, substream(9, 1)), t1(42, substream(9, 2));
  std::vector<uint64_t> b1, b0;
  for (int i = 0; i < 8; ++i) b1.push_back(t1.next_u64());
  for (int i = 0; i < 8; ++i) b0.push_back(t0.next_u64());
  CHECK(a0 == b0);
  CHECK(a1 == b1);
}

TEST_CASE("substream separates ids") {
  CHECK(substream(1, 2, 3) != substream(1, 3, 2));
  CHECK(substream(1) != substream(2));
  CHECK(substream(1, 2, 3) == substream(1, 2, 3));
}

TEST_CASE("uniform doubles stay in [0,1)") {
  SeededRng rng(5, 5);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("all_finite") {
  CHECK(all_finite({1, 2, 3}));
  CHECK_FALSE(all_finite({1, std::nan(""), 3}));
  CHECK_FALSE(all_finite({1, INFINITY}));
}
