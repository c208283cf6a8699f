#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "bootret/common.hpp"

namespace bootret {

using Vec = std::vector<double>;

// Dense row-major matrix. Sized once, then treated as a plain value.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const Vec& x, const Vec& y) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double norm(const Vec& x) { return std::sqrt(dot(x, x)); }

inline void axpy(Vec& y, double a, const Vec& x) {
  for (size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// y = A^T x  (A: n x m, x: n, y: m). Inner loop runs along contiguous rows.
inline void matvec_t(const Mat& A, const double* x, double* y) {
  std::fill(y, y + A.cols, 0.0);
  for (int r = 0; r < A.rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* arow = A.row(r);
    for (int c = 0; c < A.cols; ++c) y[c] += xr * arow[c];
  }
}

// y = A x  (A: n x m, x: m, y: n)
inline void matvec(const Mat& A, const double* x, double* y) {
  for (int r = 0; r < A.rows; ++r) {
    const double* arow = A.row(r);
    double s = 0.0;
    for (int c = 0; c < A.cols; ++c) s += arow[c] * x[c];
    y[r] = s;
  }
}

// A += x y^T  (x: rows, y: cols)
inline void add_outer(Mat& A, const double* x, const double* y) {
  for (int r = 0; r < A.rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    double* arow = A.row(r);
    for (int c = 0; c < A.cols; ++c) arow[c] += xr * y[c];
  }
}

inline double log_sum_exp(const double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

inline double log_sum_exp(const Vec& x) { return log_sum_exp(x.data(), static_cast<int>(x.size())); }

inline bool all_finite(const Vec& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

} // namespace bootret
