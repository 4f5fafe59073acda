// SPDX-License-Identifier: Apache-2.0
#include "compnet/matrix.hpp"

#include <cmath>

#include "compnet/errors.hpp"

namespace compnet {

double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double dot(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  return dot(a.data(), b.data(), static_cast<int>(a.size()));
}

Vec matvec(const Matrix& w, const Vec& x) {
  if (static_cast<int>(x.size()) != w.cols()) {
    throw DimensionError("matvec: vector length " + std::to_string(x.size()) +
                         " != matrix cols " + std::to_string(w.cols()));
  }
  Vec y(w.rows());
  for (int r = 0; r < w.rows(); ++r) y[r] = dot(w.row(r), x.data(), w.cols());
  return y;
}

Vec matvec_t(const Matrix& w, const Vec& x) {
  if (static_cast<int>(x.size()) != w.rows()) {
    throw DimensionError("matvec_t: vector length " + std::to_string(x.size()) +
                         " != matrix rows " + std::to_string(w.rows()));
  }
  Vec y(w.cols(), 0.0);
  for (int r = 0; r < w.rows(); ++r) {
    const double xr = x[r];
    const double* wr = w.row(r);
    for (int c = 0; c < w.cols(); ++c) y[c] += xr * wr[c];
  }
  return y;
}

void add_outer(Matrix& acc, const Vec& a, const Vec& b) {
  assert(acc.rows() == static_cast<int>(a.size()) && acc.cols() == static_cast<int>(b.size()));
  for (int r = 0; r < acc.rows(); ++r) {
    double* out = acc.row(r);
    const double ar = a[r];
    for (int c = 0; c < acc.cols(); ++c) out[c] += ar * b[c];
  }
}

void linear_forward_into(const Matrix& x, const Matrix& w, const Vec& b, Matrix& z) {
  assert(x.cols() == w.cols());
  assert(static_cast<int>(b.size()) == w.rows());
  z = Matrix(x.rows(), w.rows());
  for (int i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i);
    double* zi = z.row(i);
    for (int j = 0; j < w.rows(); ++j) zi[j] = dot(xi, w.row(j), x.cols()) + b[j];
  }
}

void gemm_nn_into(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols() == b.rows());
  out = Matrix(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i);
    double* oi = out.row(i);
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols(); ++j) oi[j] += aik * bk[j];
    }
  }
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& acc) {
  assert(a.rows() == b.rows());
  assert(acc.rows() == a.cols() && acc.cols() == b.cols());
  for (int m = 0; m < a.rows(); ++m) {
    const double* am = a.row(m);
    const double* bm = b.row(m);
    for (int k = 0; k < a.cols(); ++k) {
      const double amk = am[k];
      double* ak = acc.row(k);
      for (int j = 0; j < b.cols(); ++j) ak[j] += amk * bm[j];
    }
  }
}

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(const Matrix& m) {
  const double* p = m.data();
  for (size_t i = 0; i < m.size(); ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

void he_uniform_init(Matrix& w, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in > 0 ? fan_in : 1));
  std::uniform_real_distribution<double> dist(-bound, bound);
  double* p = w.data();
  for (size_t i = 0; i < w.size(); ++i) p[i] = dist(rng);
}

}  // namespace compnet
