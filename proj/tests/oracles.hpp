#pragma once

// Reference computations written independently of the library, used as test
// oracles. Everything here works on plain vectors with straightforward loops.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "chartab/engine.hpp"
#include "chartab/rng.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const chartab::engine::Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline Matrix to_matrix(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
  Matrix m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = flat[r * cols + c];
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < b.size(); ++k) s += static_cast<long double>(a[i][k]) * b[k][j];
      c[i][j] = static_cast<double>(s);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Matrix add_bias(Matrix a, const Matrix& bias) {
  for (auto& row : a)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[0][j];
  return a;
}

inline Matrix relu(Matrix a) {
  for (auto& row : a)
    for (double& v : row) v = v > 0.0 ? v : 0.0;
  return a;
}

inline Matrix softmax_rows(Matrix a) {
  for (auto& row : a) {
    const double top = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& v : row) s += (v = std::exp(v - top));
    for (double& v : row) v /= s;
  }
  return a;
}

inline Matrix layer_norm_rows(Matrix a, const Matrix& gamma, const Matrix& beta, double eps) {
  for (auto& row : a) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = gamma[0][j] * (row[j] - mean) / std::sqrt(var + eps) + beta[0][j];
  }
  return a;
}

inline Matrix add(Matrix a, const Matrix& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

// Mean over rows of -log softmax(logits)[label], computed with long double.
inline double cross_entropy(const Matrix& logits, const std::vector<std::size_t>& labels) {
  long double total = 0.0L;
  for (std::size_t r = 0; r < logits.size(); ++r) {
    long double z = 0.0L;
    for (double v : logits[r]) z += std::exp(static_cast<long double>(v));
    total += std::log(z) - logits[r][labels[r]];
  }
  return static_cast<double>(total / logits.size());
}

// Two-pass in long double.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Central difference of f with respect to value[i], restoring the value.
inline double central_difference(const std::function<double()>& f, double& value, double h) {
  const double saved = value;
  value = saved + h;
  const double up = f();
  value = saved - h;
  const double down = f();
  value = saved;
  return (up - down) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, floor), the usual gradient-check error.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::vector<double> random_values(chartab::Rng& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace oracle
