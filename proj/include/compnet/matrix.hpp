// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cstddef>
#include <random>
#include <vector>

namespace compnet {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Dimensions are fixed at construction.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), d_(static_cast<size_t>(rows) * cols, fill) {
    assert(rows >= 0 && cols >= 0);
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return d_.size(); }

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return d_[static_cast<size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return d_[static_cast<size_t>(r) * cols_ + c];
  }

  double* row(int r) { return d_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const { return d_.data() + static_cast<size_t>(r) * cols_; }

  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }

  void fill(double v) { std::fill(d_.begin(), d_.end(), v); }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && d_ == o.d_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> d_;
};

double dot(const double* a, const double* b, int n);
double dot(const Vec& a, const Vec& b);

// y = W x, W is (out x in).
Vec matvec(const Matrix& w, const Vec& x);
// y = W^T x, W is (out x in), x has length out.
Vec matvec_t(const Matrix& w, const Vec& x);
// acc += a * b^T
void add_outer(Matrix& acc, const Vec& a, const Vec& b);

// Z = X W^T + 1 b^T. X is (n x in), W is (out x in), Z is (n x out).
void linear_forward_into(const Matrix& x, const Matrix& w, const Vec& b, Matrix& z);
// out = A B with A (m x k), B (k x n).
void gemm_nn_into(const Matrix& a, const Matrix& b, Matrix& out);
// acc += A^T B with A (m x k), B (m x n), acc (k x n).
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& acc);

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

// He-style uniform init on [-sqrt(6/fan_in), +sqrt(6/fan_in)].
void he_uniform_init(Matrix& w, int fan_in, std::mt19937_64& rng);

}  // namespace compnet
