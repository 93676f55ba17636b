#ifndef PSERANK_LINALG_HPP_
#define PSERANK_LINALG_HPP_

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace pserank {

#ifdef PSERANK_FLOAT32
using Real = float;
#else
using Real = double;
#endif

// Dense row-major matrix; vectors are n x 1. Rank <= 2 everywhere.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<Real> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, Real(0)) {}

  static Mat vec(int n) { return Mat(n, 1); }
  static Mat vec(std::span<const Real> xs) {
    Mat m(static_cast<int>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) m.v[i] = xs[i];
    return m;
  }

  Real& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  Real operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  Real& operator[](std::size_t i) { return v[i]; }
  Real operator[](std::size_t i) const { return v[i]; }

  int size() const { return rows * cols; }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  bool is_vector() const { return cols == 1; }
  bool is_scalar() const { return rows == 1 && cols == 1; }

  void fill(Real x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(Real(0)); }
};

inline Real dot(const Mat& a, const Mat& b) {
  assert(a.size() == b.size());
  Real s = 0;
  for (int i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

inline Real norm(const Mat& a) { return std::sqrt(dot(a, a)); }

// Cosine similarity with the degenerate rule: either norm below 1e-12 gives 0.
// Zero interest vectors occur by construction and must score neutrally.
inline Real cosine_value(const Mat& a, const Mat& b) {
  Real na = norm(a);
  Real nb = norm(b);
  if (na < Real(1e-12) || nb < Real(1e-12)) return Real(0);
  return dot(a, b) / (na * nb);
}

// Numerically stable softmax (max subtraction). n >= 1.
inline std::vector<Real> softmax_values(std::span<const Real> scores) {
  assert(!scores.empty());
  Real mx = scores[0];
  for (Real s : scores) mx = std::max(mx, s);
  std::vector<Real> out(scores.size());
  Real sum = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    sum += out[i];
  }
  for (Real& x : out) x /= sum;
  return out;
}

// y += A * x
inline void matvec_acc(const Mat& A, const Mat& x, Mat& y) {
  assert(A.cols == x.rows && x.cols == 1 && y.rows == A.rows && y.cols == 1);
  for (int r = 0; r < A.rows; ++r) {
    const Real* row = &A.v[static_cast<std::size_t>(r) * A.cols];
    Real s = 0;
    for (int c = 0; c < A.cols; ++c) s += row[c] * x.v[c];
    y.v[r] += s;
  }
}

// y += A^T * x
inline void matvec_t_acc(const Mat& A, const Mat& x, Mat& y) {
  assert(A.rows == x.rows && x.cols == 1 && y.rows == A.cols && y.cols == 1);
  for (int r = 0; r < A.rows; ++r) {
    const Real* row = &A.v[static_cast<std::size_t>(r) * A.cols];
    Real xr = x.v[r];
    if (xr == Real(0)) continue;
    for (int c = 0; c < A.cols; ++c) y.v[c] += row[c] * xr;
  }
}

// A += g * x^T (outer product accumulate)
inline void outer_acc(const Mat& g, const Mat& x, Mat& A) {
  assert(g.cols == 1 && x.cols == 1 && A.rows == g.rows && A.cols == x.rows);
  for (int r = 0; r < A.rows; ++r) {
    Real gr = g.v[r];
    if (gr == Real(0)) continue;
    Real* row = &A.v[static_cast<std::size_t>(r) * A.cols];
    for (int c = 0; c < A.cols; ++c) row[c] += gr * x.v[c];
  }
}

}  // namespace pserank

#endif  // PSERANK_LINALG_HPP_
