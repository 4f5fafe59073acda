// SPDX-License-Identifier: Apache-2.0
#include "compnet/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace compnet {

namespace {
void check_slope(double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
  }
}
}  // namespace

double leaky_relu(double x, double slope) {
  check_slope(slope);
  return x >= 0.0 ? x : slope * x;
}

Vec leaky_relu(const Vec& x, double slope) {
  check_slope(slope);
  Vec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
  return y;
}

double leaky_relu_grad(double x, double slope) {
  check_slope(slope);
  return x >= 0.0 ? 1.0 : slope;
}

Vec softmax(const Vec& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

Vec log_softmax(const Vec& logits) {
  if (logits.empty()) throw std::invalid_argument("log_softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double lz = std::log(z) + m;
  Vec out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

double grad_check(const DiffOp& op, const Vec& point, double eps, std::mt19937_64& rng) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  const Vec f0 = op.forward(point);
  if (!all_finite(f0)) throw std::invalid_argument("grad_check: non-finite forward value");

  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vec upstream(f0.size());
  for (double& u : upstream) u = dist(rng);

  const Vec analytic = op.backward(point, upstream);
  if (analytic.size() != point.size()) {
    throw std::invalid_argument("grad_check: backward size mismatch");
  }

  double worst = 0.0;
  Vec x = point;
  for (size_t k = 0; k < point.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + eps;
    const Vec fp = op.forward(x);
    x[k] = orig - eps;
    const Vec fm = op.forward(x);
    x[k] = orig;
    double sp = 0.0, sm = 0.0;
    for (size_t i = 0; i < upstream.size(); ++i) {
      sp += upstream[i] * fp[i];
      sm += upstream[i] * fm[i];
    }
    const double numeric = (sp - sm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
  }
  return worst;
}

}  // namespace compnet
