// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "compnet/matrix.hpp"
#include "compnet/model.hpp"
#include "compnet/types.hpp"

namespace compnet {

// Top-k constituents by head probability, ties broken by ascending id.
struct Shortlist {
  std::vector<int> attrs;
  std::vector<int> objs;
  Vec attr_probs;  // aligned with attrs
  Vec obj_probs;   // aligned with objs
};

// Sparse pair scores; querying a pair outside the scored set yields 0.
struct CompositionScores {
  std::vector<Pair> pairs;
  Vec probs;  // aligned with pairs

  double query(Pair p) const;
  // Index into pairs/probs, or -1.
  int find(Pair p) const;

 private:
  friend CompositionScores make_scores(std::vector<Pair> pairs, Vec probs);
  std::unordered_map<uint64_t, int> index_;
};

CompositionScores make_scores(std::vector<Pair> pairs, Vec probs);

// feature is the encoded D-vector (callers run encode once).
Shortlist predict_shortlist(const ModelParams& model, const Vec& feature, int k_a, int k_o);

// Softmax over the composed-classifier logits of the shortlist grid.
// For the direct-FC variant only covered pairs enter the softmax.
CompositionScores score_compositions(const ModelParams& model, const Vec& feature,
                                     const Shortlist& shortlist);

// Late-fusion product p_a * p_o over the grid; a ranking score, not a
// normalized distribution.
CompositionScores score_product(const Shortlist& shortlist);

// Variant dispatch: product scoring for the softmax-product baseline,
// composed-classifier softmax otherwise.
CompositionScores score_grid(const ModelParams& model, const Vec& feature,
                             const Shortlist& shortlist);

// Keeps the m highest-probability pairs (ties by ascending pair); the rest
// become absent, i.e. query() -> 0.
CompositionScores top_scores_truncate(const CompositionScores& scores, int m);

// Composed linear classifiers for an allow-list of pairs, flattened for
// deployment-style dot-product scoring.
struct ClassifierBank {
  int feature_dim = 0;
  std::vector<Pair> pairs;  // sorted
  Matrix rows;              // (num_pairs x feature_dim+1)

  int find(Pair p) const;  // binary search; -1 when absent
  double score(int index, const Vec& feature) const;
};

ClassifierBank build_bank(const ModelParams& model, const std::vector<Pair>& allow_list);
void save_bank(const ClassifierBank& bank, const std::string& path);
ClassifierBank load_bank(const std::string& path);

// Shortlist grid scoring through bank rows instead of the live composer;
// pairs absent from the bank are dropped from the softmax.
CompositionScores score_compositions_banked(const ClassifierBank& bank, const Vec& feature,
                                            const Shortlist& shortlist);

}  // namespace compnet
