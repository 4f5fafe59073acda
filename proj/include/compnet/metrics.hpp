// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "compnet/dataset.hpp"
#include "compnet/inference.hpp"
#include "compnet/model.hpp"

namespace compnet {

// Fraction of images whose top-scoring class is in the label set. Images
// with empty label sets are skipped and counted in *skipped. Argmax ties go
// to the lowest class id.
double precision_at_1(const std::vector<Vec>& scores, const std::vector<std::vector<int>>& labels,
                      int* skipped = nullptr);

// Average precision for one query: mean of precision at each relevant hit,
// ranking by score descending with ties broken by ascending image id.
// Throws when nothing is relevant.
double average_precision(const Vec& scores, const std::vector<char>& relevant,
                         const std::vector<int>& image_ids);

struct ApEntry {
  Pair pair;
  double ap = 0.0;
  bool unseen = false;
  int num_relevant = 0;
};

// Unweighted means of AP within each split; empty split -> absent.
std::pair<std::optional<double>, std::optional<double>> map_by_split(
    const std::vector<ApEntry>& table);

struct EvalReport {
  double attr_p1 = 0.0;
  double obj_p1 = 0.0;
  std::optional<double> seen_map;
  std::optional<double> unseen_map;
  std::vector<ApEntry> ap_table;
  // Compositions with no relevant test image, excluded from the means.
  int compositions_skipped = 0;
  int images_evaluated = 0;

  std::string to_json() const;
  std::string to_table() const;
};

// Full evaluation over a dataset's test partitions: head precision@1 plus
// per-composition AP aggregated by seen/unseen split. Grid scoring follows
// the model variant; the direct-FC baseline is only evaluated on seen pairs.
// Worker count is capped by the ENGINE_THREADS environment variable; results
// are independent of the worker count.
EvalReport evaluate(const ModelParams& model, const Dataset& ds, int k_a, int k_o);

// Worker-count resolution for parallel scans (>=1).
int engine_threads();

}  // namespace compnet
