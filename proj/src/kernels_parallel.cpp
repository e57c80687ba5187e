#include <cstdint>

#include "chartab/kernels.hpp"

namespace chartab::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

}  // namespace

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < rows; ++p) {
    double* crow = c.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t n, std::size_t k) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* arow = a.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

}  // namespace parallel

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  if (m * k * n >= kParallelWork && m > 1) {
    parallel::matmul(a, b, c, m, k, n);
  } else {
    serial::matmul(a, b, c, m, k, n);
  }
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t n) {
  if (m * k * n >= kParallelWork && k > 1) {
    parallel::matmul_at_b(a, b, c, m, k, n);
  } else {
    serial::matmul_at_b(a, b, c, m, k, n);
  }
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t n, std::size_t k) {
  if (m * k * n >= kParallelWork && m > 1) {
    parallel::matmul_a_bt(a, b, c, m, n, k);
  } else {
    serial::matmul_a_bt(a, b, c, m, n, k);
  }
}

}  // namespace chartab::kernels
