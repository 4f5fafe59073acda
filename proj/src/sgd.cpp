// SPDX-License-Identifier: Apache-2.0
#include "compnet/sgd.hpp"

#include "compnet/errors.hpp"

namespace compnet {

void sgd_step(double* params, const double* grads, double* velocity, size_t n, double rate,
              double momentum) {
  for (size_t i = 0; i < n; ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= rate * velocity[i];
  }
}

void sgd_step(Vec& params, const Vec& grads, Vec& velocity, double rate, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw DimensionError("sgd_step: parameter/gradient/velocity size mismatch");
  }
  sgd_step(params.data(), grads.data(), velocity.data(), params.size(), rate, momentum);
}

}  // namespace compnet
