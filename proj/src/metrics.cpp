// SPDX-License-Identifier: Apache-2.0
#include "compnet/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "compnet/errors.hpp"

namespace compnet {

double precision_at_1(const std::vector<Vec>& scores, const std::vector<std::vector<int>>& labels,
                      int* skipped) {
  if (scores.size() != labels.size()) throw DimensionError("precision_at_1: size mismatch");
  int hits = 0, counted = 0, skip = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i].empty()) {
      ++skip;
      continue;
    }
    if (scores[i].empty()) throw DimensionError("precision_at_1: empty score vector");
    int best = 0;
    for (size_t c = 1; c < scores[i].size(); ++c)
      if (scores[i][c] > scores[i][best]) best = static_cast<int>(c);
    if (std::find(labels[i].begin(), labels[i].end(), best) != labels[i].end()) ++hits;
    ++counted;
  }
  if (skipped) *skipped = skip;
  if (counted == 0) throw DataFormatError("precision_at_1: no labeled images");
  return static_cast<double>(hits) / counted;
}

double average_precision(const Vec& scores, const std::vector<char>& relevant,
                         const std::vector<int>& image_ids) {
  if (scores.size() != relevant.size() || scores.size() != image_ids.size())
    throw DimensionError("average_precision: size mismatch");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return image_ids[x] < image_ids[y];
  });
  int num_rel = 0;
  double sum_prec = 0.0;
  for (size_t r = 0; r < order.size(); ++r) {
    if (!relevant[order[r]]) continue;
    ++num_rel;
    sum_prec += static_cast<double>(num_rel) / static_cast<double>(r + 1);
  }
  if (num_rel == 0) throw DataFormatError("average_precision: no relevant image");
  return sum_prec / num_rel;
}

std::pair<std::optional<double>, std::optional<double>> map_by_split(
    const std::vector<ApEntry>& table) {
  double seen_sum = 0.0, unseen_sum = 0.0;
  int seen_n = 0, unseen_n = 0;
  for (const ApEntry& e : table) {
    if (e.unseen) {
      unseen_sum += e.ap;
      ++unseen_n;
    } else {
      seen_sum += e.ap;
      ++seen_n;
    }
  }
  std::optional<double> seen_map, unseen_map;
  if (seen_n > 0) seen_map = seen_sum / seen_n;
  if (unseen_n > 0) unseen_map = unseen_sum / unseen_n;
  return {seen_map, unseen_map};
}

int engine_threads() {
  if (const char* env = std::getenv("ENGINE_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return std::min(v, 64);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return std::max(1, std::min<int>(static_cast<int>(hw), 8));
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["attr_p1"] = attr_p1;
  j["obj_p1"] = obj_p1;
  if (seen_map) j["seen_map"] = *seen_map;
  if (unseen_map) j["unseen_map"] = *unseen_map;
  j["compositions_skipped"] = compositions_skipped;
  j["images_evaluated"] = images_evaluated;
  nlohmann::json table = nlohmann::json::array();
  for (const ApEntry& e : ap_table)
    table.push_back({{"attr", e.pair.attr},
                     {"obj", e.pair.obj},
                     {"ap", e.ap},
                     {"unseen", e.unseen},
                     {"num_relevant", e.num_relevant}});
  j["ap_table"] = table;
  return j.dump();
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "metric            value\n";
  os << "attr P@1          " << attr_p1 << "\n";
  os << "obj P@1           " << obj_p1 << "\n";
  os << "seen mAP          " << (seen_map ? std::to_string(*seen_map) : "n/a") << "\n";
  os << "unseen mAP        " << (unseen_map ? std::to_string(*unseen_map) : "n/a") << "\n";
  os << "comps skipped     " << compositions_skipped << "\n";
  os << "images            " << images_evaluated << "\n";
  return os.str();
}

EvalReport evaluate(const ModelParams& model, const Dataset& ds, int k_a, int k_o) {
  std::vector<const ImageSample*> test;
  for (const ImageSample& s : ds.samples)
    if (s.partition != "train") test.push_back(&s);
  if (test.empty()) throw DataFormatError("evaluate: dataset has no test images");

  const int n = static_cast<int>(test.size());
  std::vector<Vec> attr_scores(n), obj_scores(n);
  std::vector<CompositionScores> grids(n);

  // Fixed slice per worker; slot-indexed writes keep results independent of
  // the worker count.
  const int workers = std::min(engine_threads(), n);
  auto scan = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      const Vec phi = model.encode(test[i]->feature);
      attr_scores[i] = model.attr_head.scores(phi);
      obj_scores[i] = model.obj_head.scores(phi);
      grids[i] = score_grid(model, phi, predict_shortlist(model, phi, k_a, k_o));
    }
  };
  if (workers <= 1) {
    scan(0, n);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int lo = w * chunk;
      const int hi = std::min(n, lo + chunk);
      if (lo < hi) pool.emplace_back(scan, lo, hi);
    }
    for (auto& t : pool) t.join();
  }

  EvalReport report;
  report.images_evaluated = n;
  std::vector<std::vector<int>> attr_labels(n), obj_labels(n);
  for (int i = 0; i < n; ++i) {
    attr_labels[i] = test[i]->attrs;
    obj_labels[i] = test[i]->objs;
  }
  report.attr_p1 = precision_at_1(attr_scores, attr_labels);
  report.obj_p1 = precision_at_1(obj_scores, obj_labels);

  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = test[i]->id;

  auto eval_comp = [&](Pair p, bool unseen) {
    std::vector<char> relevant(n, 0);
    int num_rel = 0;
    for (int i = 0; i < n; ++i) {
      const bool has_a =
          std::binary_search(test[i]->attrs.begin(), test[i]->attrs.end(), p.attr);
      const bool has_o = std::binary_search(test[i]->objs.begin(), test[i]->objs.end(), p.obj);
      if (has_a && has_o) {
        relevant[i] = 1;
        ++num_rel;
      }
    }
    if (num_rel == 0) {
      ++report.compositions_skipped;
      return;
    }
    Vec scores(n);
    for (int i = 0; i < n; ++i) scores[i] = grids[i].query(p);
    ApEntry e;
    e.pair = p;
    e.unseen = unseen;
    e.num_relevant = num_rel;
    e.ap = average_precision(scores, relevant, ids);
    report.ap_table.push_back(e);
  };

  for (const Pair& p : ds.space.seen) eval_comp(p, false);
  // The direct-FC baseline has no classifiers for unseen pairs.
  if (model.variant != ModelVariant::kCompositionFc)
    for (const Pair& p : ds.space.unseen) eval_comp(p, true);

  std::tie(report.seen_map, report.unseen_map) = map_by_split(report.ap_table);
  return report;
}

}  // namespace compnet
