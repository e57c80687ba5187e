// Serial vs OpenMP matmul kernels: best-of-N wall time and a bit-equality check.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "chartab/kernels.hpp"
#include "chartab/rng.hpp"

namespace {

using Kernel = std::function<void(std::span<const double>, std::span<const double>, std::span<double>,
                                  std::size_t, std::size_t, std::size_t)>;

double best_seconds(const Kernel& kernel, const std::vector<double>& a, const std::vector<double>& b,
                    std::vector<double>& c, std::size_t m, std::size_t k, std::size_t n, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    std::fill(c.begin(), c.end(), 0.0);
    const auto t0 = std::chrono::steady_clock::now();
    kernel(a, b, c, m, k, n);
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads=%d reps=%d\n", omp_get_max_threads(), reps);
  std::printf("%-12s %6s %6s %6s %12s %12s %8s %s\n", "kernel", "m", "k", "n", "serial_s", "parallel_s",
              "speedup", "identical");

  struct Case {
    std::size_t m, k, n;
  };
  // Training-shaped products: a 64-row batch through the first MLP layer,
  // attention-sized blocks, and a larger square product.
  const Case cases[] = {{64, 1000, 512}, {64, 512, 128}, {48, 16, 48}, {256, 256, 256}, {512, 512, 512}};
  chartab::Rng rng(1);
  bool all_identical = true;
  for (const auto& [m, k, n] : cases) {
    std::vector<double> a(m * k), b(k * n), g(m * n);
    for (double& x : a) x = rng.uniform(-1, 1);
    for (double& x : b) x = rng.uniform(-1, 1);
    for (double& x : g) x = rng.uniform(-1, 1);

    struct Named {
      const char* name;
      Kernel serial, parallel;
      const std::vector<double>& lhs;
      const std::vector<double>& rhs;
      std::size_t out_size, d0, d1, d2;
    };
    const Named kernels[] = {
        {"a*b", chartab::kernels::serial::matmul, chartab::kernels::parallel::matmul, a, b, m * n, m, k, n},
        {"a^T*g", chartab::kernels::serial::matmul_at_b, chartab::kernels::parallel::matmul_at_b, a, g,
         k * n, m, k, n},
        {"g*b^T", chartab::kernels::serial::matmul_a_bt, chartab::kernels::parallel::matmul_a_bt, g, b,
         m * k, m, n, k},
    };
    for (const auto& kn : kernels) {
      std::vector<double> cs(kn.out_size), cp(kn.out_size);
      const double ts = best_seconds(kn.serial, kn.lhs, kn.rhs, cs, kn.d0, kn.d1, kn.d2, reps);
      const double tp = best_seconds(kn.parallel, kn.lhs, kn.rhs, cp, kn.d0, kn.d1, kn.d2, reps);
      const bool same = cs == cp;
      all_identical = all_identical && same;
      std::printf("%-12s %6zu %6zu %6zu %12.6f %12.6f %8.2f %s\n", kn.name, m, k, n, ts, tp, ts / tp,
                  same ? "yes" : "NO");
    }
  }
  return all_identical ? 0 : 1;
}
