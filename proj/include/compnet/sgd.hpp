// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "compnet/matrix.hpp"

namespace compnet {

// One SGD update with classical momentum over a flat parameter array:
//   v <- momentum * v + g;  p <- p - rate * v
// Velocity must match the parameter length; momentum 0 reduces to plain SGD.
void sgd_step(double* params, const double* grads, double* velocity, size_t n, double rate,
              double momentum);

void sgd_step(Vec& params, const Vec& grads, Vec& velocity, double rate, double momentum);

}  // namespace compnet
