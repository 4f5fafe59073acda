// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <random>

#include "compnet/matrix.hpp"

namespace compnet {

// y = x for x >= 0, a*x otherwise. Slope must lie in (0,1).
double leaky_relu(double x, double slope);
Vec leaky_relu(const Vec& x, double slope);

// Derivative; at x == 0 the positive branch (1.0) is used, so gradient
// checks must avoid the kink.
double leaky_relu_grad(double x, double slope);

// Stabilized by subtracting the max logit. Throws on empty input.
Vec softmax(const Vec& logits);
Vec log_softmax(const Vec& logits);

// A differentiable operation for gradient checking: forward maps a point to
// an output vector; backward maps (point, upstream) to the gradient of
// dot(upstream, forward(point)) with respect to the point.
struct DiffOp {
  std::function<Vec(const Vec&)> forward;
  std::function<Vec(const Vec&, const Vec&)> backward;
};

// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// with the numeric side from central differences. The upstream probe is drawn
// from rng so vector-valued ops are contracted to a scalar.
double grad_check(const DiffOp& op, const Vec& point, double eps, std::mt19937_64& rng);

}  // namespace compnet
