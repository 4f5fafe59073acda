// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "compnet/matrix.hpp"
#include "compnet/types.hpp"

namespace compnet {

// Knobs for the synthetic weakly-supervised world: features are prototype
// sums plus Gaussian noise, labels are corrupted by drop/add rates.
struct SyntheticWorldConfig {
  int num_attrs = 12;
  int num_objs = 24;
  int raw_dim = 32;
  double attr_proto_scale = 1.0;
  double noise_sigma = 0.5;
  double drop_prob = 0.1;
  double add_prob = 0.0;
  // Fraction of the attribute-object grid that is realizable.
  double sparsity = 0.6;
  // Probability of adding one extra co-occurring attribute to an image.
  double multi_attr_prob = 0.5;
  int train_images = 20000;
  int test_images = 4000;
  int min_occurrence = 20;
  double unseen_ratio = 0.2;
  // Oversampling factor for the generation pool; partition filtering
  // discards the surplus.
  double pool_margin = 1.5;
  uint64_t seed = 1;

  void validate() const;
};

struct ImageSample {
  int id = -1;
  Vec feature;
  std::vector<int> attrs;  // sorted, unique, non-empty
  std::vector<int> objs;   // sorted, unique, non-empty
  std::string partition;   // train | test_seen | test_unseen

  bool operator==(const ImageSample&) const = default;
};

struct CompositionSpace {
  std::vector<Pair> seen;    // sorted
  std::vector<Pair> unseen;  // sorted
  // Corpus occurrence counts for qualifying pairs.
  std::unordered_map<uint64_t, int> counts;

  bool is_seen(Pair p) const;
  bool is_unseen(Pair p) const;

  bool operator==(const CompositionSpace&) const = default;
};

struct Dataset {
  int num_attrs = 0;
  int num_objs = 0;
  int raw_dim = 0;
  std::vector<ImageSample> samples;
  CompositionSpace space;

  std::vector<const ImageSample*> partition(const std::string& tag) const;

  bool operator==(const Dataset&) const = default;
};

// Independent per-label drops followed by a possible uniform addition per
// axis. Does not enforce non-emptiness (generate() re-adds). Returns the
// number of dropped labels.
int corrupt_axis(std::vector<int>& labels, int vocab, double drop_prob, double add_prob,
                 std::mt19937_64& rng);

// Splits qualifying pairs into (seen, unseen) with |unseen| =
// round(ratio * total). Throws when the split would be degenerate.
std::pair<std::vector<Pair>, std::vector<Pair>> split_compositions(const std::vector<Pair>& pairs,
                                                                   double unseen_ratio,
                                                                   uint64_t seed);

// True iff any pair in the label Cartesian product is an unseen composition.
bool has_unseen_pair(const std::vector<int>& attrs, const std::vector<int>& objs,
                     const CompositionSpace& space);

// Full synthetic pipeline: pool generation, occurrence counting,
// min-occurrence qualification, seen/unseen split, partition assignment.
// Bit-reproducible from config (which carries the seed).
Dataset generate(const SyntheticWorldConfig& config);

// JSON-lines round trip: one header line with vocabulary sizes and the
// composition split, then one line per sample.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace compnet
