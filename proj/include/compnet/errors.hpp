// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace compnet {

// Error taxonomy maps to distinct CLI exit codes (see tools/main.cpp).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace compnet
