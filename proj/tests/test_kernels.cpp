#include <doctest.h>

#include <cmath>
#include <vector>

#include "chartab/kernels.hpp"
#include "oracles.hpp"

using namespace chartab;

namespace {

struct Sizes {
  std::size_t m, k, n;
};

const Sizes kSizes[] = {{1, 1, 1}, {3, 5, 2}, {17, 31, 9}, {64, 96, 48}, {128, 200, 33}};

}  // namespace

TEST_CASE("serial and parallel matmul are bit-identical") {
  Rng rng(21);
  for (const auto& [m, k, n] : kSizes) {
    const auto a = oracle::random_values(rng, m * k);
    const auto b = oracle::random_values(rng, k * n);
    const auto seed = oracle::random_values(rng, m * n);
    std::vector<double> cs = seed, cp = seed;
    kernels::serial::matmul(a, b, cs, m, k, n);
    kernels::parallel::matmul(a, b, cp, m, k, n);
    CHECK(cs == cp);
    std::vector<double> cd = seed;
    kernels::matmul(a, b, cd, m, k, n);
    CHECK(cd == cs);
  }
}

TEST_CASE("serial and parallel transposed products are bit-identical") {
  Rng rng(22);
  for (const auto& [m, k, n] : kSizes) {
    const auto a = oracle::random_values(rng, m * k);
    const auto g = oracle::random_values(rng, m * n);
    std::vector<double> s1(k * n, 0.0), p1(k * n, 0.0);
    kernels::serial::matmul_at_b(a, g, s1, m, k, n);
    kernels::parallel::matmul_at_b(a, g, p1, m, k, n);
    CHECK(s1 == p1);

    const auto b = oracle::random_values(rng, k * n);
    std::vector<double> s2(m * k, 0.0), p2(m * k, 0.0);
    kernels::serial::matmul_a_bt(g, b, s2, m, n, k);
    kernels::parallel::matmul_a_bt(g, b, p2, m, n, k);
    CHECK(s2 == p2);
  }
}

TEST_CASE("kernels match a long-double reference product") {
  Rng rng(23);
  for (const auto& [m, k, n] : kSizes) {
    const auto a = oracle::random_values(rng, m * k);
    const auto b = oracle::random_values(rng, k * n);
    const auto A = oracle::to_matrix(a, m, k);
    const auto B = oracle::to_matrix(b, k, n);
    const auto C = oracle::matmul(A, B);
    std::vector<double> c(m * n, 0.0);
    kernels::serial::matmul(a, b, c, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(std::abs(c[i] - C[i / n][i % n]) <= 1e-12 * static_cast<double>(k));
    }

    // A^T G against the explicit transpose.
    const auto g = oracle::random_values(rng, m * n);
    const auto G = oracle::to_matrix(g, m, n);
    const auto AtG = oracle::matmul(oracle::transpose(A), G);
    std::vector<double> atg(k * n, 0.0);
    kernels::parallel::matmul_at_b(a, g, atg, m, k, n);
    for (std::size_t i = 0; i < atg.size(); ++i) {
      CHECK(std::abs(atg[i] - AtG[i / n][i % n]) <= 1e-12 * static_cast<double>(m));
    }

    const auto GBt = oracle::matmul(G, oracle::transpose(B));
    std::vector<double> gbt(m * k, 0.0);
    kernels::parallel::matmul_a_bt(g, b, gbt, m, n, k);
    for (std::size_t i = 0; i < gbt.size(); ++i) {
      CHECK(std::abs(gbt[i] - GBt[i / k][i % k]) <= 1e-12 * static_cast<double>(n));
    }
  }
}

TEST_CASE("kernels accumulate into the output") {
  const std::vector<double> a = {1, 2}, b = {3, 4};
  std::vector<double> c = {10};
  kernels::matmul(a, b, c, 1, 2, 1);
  CHECK(c[0] == 21.0);
}
