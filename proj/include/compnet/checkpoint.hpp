// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "compnet/model.hpp"

namespace compnet {

// Binary checkpoint: magic, version, model shape, then every tensor raw in
// declaration order. Doubles are written verbatim, so save/load round-trips
// bit-exactly.
void save_checkpoint(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace compnet
