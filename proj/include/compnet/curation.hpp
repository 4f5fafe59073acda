// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "compnet/matrix.hpp"

namespace compnet {

// raw label -> canonical label; canonical labels are fixed points.
using SynonymMap = std::unordered_map<std::string, std::string>;

std::string canonicalize(const std::string& label, const SynonymMap& map);
std::vector<std::string> canonicalize(const std::vector<std::string>& labels,
                                      const SynonymMap& map);

// Two-column TSV: raw<TAB>canonical. Validates the fixed-point invariant.
SynonymMap load_synonyms_tsv(const std::string& path);

// Pair counts n(a,o) with marginals and corpus size.
struct CooccurrenceTable {
  std::vector<std::string> attrs;
  std::vector<std::string> objs;
  std::vector<std::vector<long>> counts;  // [attr][obj]
  long corpus_size = 0;                   // N; defaults to the count total

  long n_attr(int a) const;
  int attr_index(const std::string& label) const;
};

// CSV rows: attribute,object,count. Header row optional.
CooccurrenceTable load_cooccurrence_csv(const std::string& path);

// raw(a) = |{o : n(a,o) > threshold}| * log(N / n(a)); n(a)=0 scores 0.
double sharedness_raw(const CooccurrenceTable& table, int attr, long threshold);

// Min-max normalized raw scores; when all raw scores are equal the
// degenerate normalization maps everything to 1.
Vec sharedness_scores(const CooccurrenceTable& table, long threshold);

// Binary logistic probe trained with plain SGD on frozen features.
Vec train_probe(const std::vector<Vec>& features, const std::vector<char>& labels, int epochs,
                double rate, uint64_t seed);

// Probe score w.x + b (bias is the trailing weight coordinate).
double probe_score(const Vec& probe, const Vec& feature);

// Precision@5 of the probe over held-out images: the fraction of the five
// top-scoring images (ties by ascending index) whose labels contain the
// attribute. Requires at least 5 images.
double visualness(const Vec& probe, const std::vector<Vec>& heldout_features,
                  const std::vector<char>& heldout_has_attr);

struct AttributeScore {
  std::string label;
  double visualness = 0.0;
  double sharedness = 0.0;

  double rank_score() const { return visualness * sharedness; }
};

// Descending by visualness * sharedness; ties keep input order.
std::vector<AttributeScore> rank_attributes(std::vector<AttributeScore> scores);

}  // namespace compnet
