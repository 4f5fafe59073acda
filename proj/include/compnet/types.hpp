// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace compnet {

// An (attribute, object) composition.
struct Pair {
  int attr = -1;
  int obj = -1;

  bool operator==(const Pair& o) const { return attr == o.attr && obj == o.obj; }
  bool operator<(const Pair& o) const {
    return attr != o.attr ? attr < o.attr : obj < o.obj;
  }
};

inline uint64_t pair_key(Pair p) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(p.attr)) << 32) |
         static_cast<uint32_t>(p.obj);
}

struct PairHash {
  size_t operator()(const Pair& p) const { return std::hash<uint64_t>{}(pair_key(p)); }
};

}  // namespace compnet
