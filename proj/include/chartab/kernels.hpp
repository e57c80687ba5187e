#pragma once

// Dense row-major matrix kernels behind the autodiff engine.
//
// `serial` is the reference implementation; `parallel` splits the same loops
// across OpenMP threads. Each output element is summed in the same order in
// both, so results are bit-identical regardless of thread count.

#include <cstddef>
#include <span>

namespace chartab::kernels {

namespace serial {

// c[m x n] += a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// c[k x n] += a[m x k]^T * b[m x n]
void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t n);
// c[m x k] += a[m x n] * b[k x n]^T
void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t n, std::size_t k);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t n, std::size_t k);

}  // namespace parallel

// Dispatch used by the engine: parallel above a work threshold, serial below.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t n, std::size_t k);

}  // namespace chartab::kernels
