// SPDX-License-Identifier: Apache-2.0
#include "compnet/inference.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>

#include "compnet/errors.hpp"
#include "compnet/numerics.hpp"

namespace compnet {

double CompositionScores::query(Pair p) const {
  const int i = find(p);
  return i < 0 ? 0.0 : probs[i];
}

int CompositionScores::find(Pair p) const {
  auto it = index_.find(pair_key(p));
  return it == index_.end() ? -1 : it->second;
}

CompositionScores make_scores(std::vector<Pair> pairs, Vec probs) {
  if (pairs.size() != probs.size()) throw DimensionError("make_scores: size mismatch");
  CompositionScores s;
  s.pairs = std::move(pairs);
  s.probs = std::move(probs);
  s.index_.reserve(s.pairs.size());
  for (size_t i = 0; i < s.pairs.size(); ++i) s.index_[pair_key(s.pairs[i])] = static_cast<int>(i);
  return s;
}

namespace {

// Indices of the k largest values, ties by ascending index.
std::vector<int> top_k_ids(const Vec& v, int k) {
  std::vector<int> ids(v.size());
  std::iota(ids.begin(), ids.end(), 0);
  const size_t take = std::min<size_t>(static_cast<size_t>(k), ids.size());
  std::partial_sort(ids.begin(), ids.begin() + take, ids.end(), [&](int x, int y) {
    if (v[x] != v[y]) return v[x] > v[y];
    return x < y;
  });
  ids.resize(take);
  return ids;
}

}  // namespace

Shortlist predict_shortlist(const ModelParams& model, const Vec& feature, int k_a, int k_o) {
  if (k_a < 1 || k_o < 1) throw ConfigError("shortlist sizes must be >= 1");
  const Vec p_a = softmax(model.attr_head.scores(feature));
  const Vec p_o = softmax(model.obj_head.scores(feature));
  Shortlist sl;
  sl.attrs = top_k_ids(p_a, k_a);
  sl.objs = top_k_ids(p_o, k_o);
  sl.attr_probs.reserve(sl.attrs.size());
  for (int a : sl.attrs) sl.attr_probs.push_back(p_a[a]);
  sl.obj_probs.reserve(sl.objs.size());
  for (int o : sl.objs) sl.obj_probs.push_back(p_o[o]);
  return sl;
}

CompositionScores score_compositions(const ModelParams& model, const Vec& feature,
                                     const Shortlist& shortlist) {
  if (shortlist.attrs.empty() || shortlist.objs.empty())
    throw ConfigError("score_compositions: empty shortlist");
  std::unique_ptr<PairScorer> scorer;
  if (model.variant == ModelVariant::kCompositionFc)
    scorer = std::make_unique<FcPairScorer>(model);
  else
    scorer = std::make_unique<MlpPairScorer>(model);

  std::vector<Pair> pairs;
  std::vector<int> slots;
  pairs.reserve(shortlist.attrs.size() * shortlist.objs.size());
  for (int a : shortlist.attrs)
    for (int o : shortlist.objs) {
      const Pair p{a, o};
      if (!scorer->scorable(p)) continue;
      pairs.push_back(p);
      slots.push_back(scorer->add(p));
    }
  if (pairs.empty()) return make_scores({}, {});

  scorer->forward(augment_feature(feature), Mode::kEval, nullptr);
  Vec logits(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) logits[i] = scorer->logit(slots[i]);
  return make_scores(std::move(pairs), softmax(logits));
}

CompositionScores score_product(const Shortlist& shortlist) {
  std::vector<Pair> pairs;
  Vec probs;
  pairs.reserve(shortlist.attrs.size() * shortlist.objs.size());
  for (size_t i = 0; i < shortlist.attrs.size(); ++i)
    for (size_t j = 0; j < shortlist.objs.size(); ++j) {
      pairs.push_back({shortlist.attrs[i], shortlist.objs[j]});
      probs.push_back(shortlist.attr_probs[i] * shortlist.obj_probs[j]);
    }
  return make_scores(std::move(pairs), std::move(probs));
}

CompositionScores score_grid(const ModelParams& model, const Vec& feature,
                             const Shortlist& shortlist) {
  if (model.variant == ModelVariant::kSoftmaxProduct) return score_product(shortlist);
  return score_compositions(model, feature, shortlist);
}

CompositionScores top_scores_truncate(const CompositionScores& scores, int m) {
  if (m < 1) throw ConfigError("top_scores_truncate: m must be >= 1");
  if (static_cast<size_t>(m) >= scores.pairs.size()) return scores;
  std::vector<int> ids(scores.pairs.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + m, ids.end(), [&](int x, int y) {
    if (scores.probs[x] != scores.probs[y]) return scores.probs[x] > scores.probs[y];
    return scores.pairs[x] < scores.pairs[y];
  });
  std::vector<Pair> pairs;
  Vec probs;
  pairs.reserve(m);
  for (int i = 0; i < m; ++i) {
    pairs.push_back(scores.pairs[ids[i]]);
    probs.push_back(scores.probs[ids[i]]);
  }
  return make_scores(std::move(pairs), std::move(probs));
}

// ------------------------------------------------------------------- bank

int ClassifierBank::find(Pair p) const {
  auto it = std::lower_bound(pairs.begin(), pairs.end(), p);
  if (it == pairs.end() || !(*it == p)) return -1;
  return static_cast<int>(it - pairs.begin());
}

double ClassifierBank::score(int index, const Vec& feature) const {
  if (index < 0 || index >= rows.rows()) throw DimensionError("bank index out of range");
  if (static_cast<int>(feature.size()) != feature_dim)
    throw DimensionError("bank feature size mismatch");
  const double* r = rows.row(index);
  return dot(r, feature.data(), feature_dim) + r[feature_dim];
}

ClassifierBank build_bank(const ModelParams& model, const std::vector<Pair>& allow_list) {
  if (allow_list.empty()) throw ConfigError("build_bank: empty allow-list");
  std::vector<Pair> pairs = allow_list;
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  ClassifierBank bank;
  bank.feature_dim = model.feature_dim;
  bank.pairs = std::move(pairs);
  bank.rows = Matrix(static_cast<int>(bank.pairs.size()), model.feature_dim + 1);

  if (model.variant == ModelVariant::kCompositionFc) {
    for (size_t i = 0; i < bank.pairs.size(); ++i) {
      const int row = model.fc.row_of(bank.pairs[i]);
      if (row < 0) throw ConfigError("build_bank: pair not covered by the fc head");
      std::memcpy(bank.rows.row(static_cast<int>(i)), model.fc.w.row(row),
                  sizeof(double) * (model.feature_dim + 1));
    }
    return bank;
  }

  // Batched eval-mode composition; one MLP pass over all allow-listed pairs.
  MlpPairScorer scorer(model);
  std::vector<int> slots;
  slots.reserve(bank.pairs.size());
  for (const Pair& p : bank.pairs) slots.push_back(scorer.add(p));
  Vec zero(model.feature_dim, 0.0);
  scorer.forward(augment_feature(zero), Mode::kEval, nullptr);
  for (size_t i = 0; i < bank.pairs.size(); ++i)
    std::memcpy(bank.rows.row(static_cast<int>(i)), scorer.classifier(slots[i]),
                sizeof(double) * (model.feature_dim + 1));
  return bank;
}

namespace {
constexpr char kBankMagic[4] = {'C', 'B', 'N', 'K'};
constexpr uint32_t kBankVersion = 1;
}  // namespace

void save_bank(const ClassifierBank& bank, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open bank for writing: " + path);
  os.write(kBankMagic, 4);
  const uint32_t ver = kBankVersion;
  os.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const int32_t d = bank.feature_dim;
  const uint64_t n = bank.pairs.size();
  os.write(reinterpret_cast<const char*>(&d), sizeof(d));
  os.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const Pair& p : bank.pairs) {
    const int32_t a = p.attr, o = p.obj;
    os.write(reinterpret_cast<const char*>(&a), sizeof(a));
    os.write(reinterpret_cast<const char*>(&o), sizeof(o));
  }
  os.write(reinterpret_cast<const char*>(bank.rows.data()),
           static_cast<std::streamsize>(bank.rows.size() * sizeof(double)));
  if (!os) throw IoError("bank write failed: " + path);
}

ClassifierBank load_bank(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open bank: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kBankMagic, 4) != 0)
    throw DataFormatError("not a classifier bank: " + path);
  uint32_t ver = 0;
  is.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (!is || ver != kBankVersion) throw DataFormatError("unsupported bank version");
  int32_t d = 0;
  uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&d), sizeof(d));
  is.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!is || d < 1 || n < 1) throw DataFormatError("bad bank header");
  ClassifierBank bank;
  bank.feature_dim = d;
  bank.pairs.resize(n);
  for (uint64_t i = 0; i < n; ++i) {
    int32_t a = 0, o = 0;
    is.read(reinterpret_cast<char*>(&a), sizeof(a));
    is.read(reinterpret_cast<char*>(&o), sizeof(o));
    bank.pairs[i] = {a, o};
  }
  bank.rows = Matrix(static_cast<int>(n), d + 1);
  is.read(reinterpret_cast<char*>(bank.rows.data()),
          static_cast<std::streamsize>(bank.rows.size() * sizeof(double)));
  if (!is) throw DataFormatError("bank truncated: " + path);
  return bank;
}

CompositionScores score_compositions_banked(const ClassifierBank& bank, const Vec& feature,
                                            const Shortlist& shortlist) {
  std::vector<Pair> pairs;
  Vec logits;
  for (int a : shortlist.attrs)
    for (int o : shortlist.objs) {
      const Pair p{a, o};
      const int idx = bank.find(p);
      if (idx < 0) continue;
      pairs.push_back(p);
      logits.push_back(bank.score(idx, feature));
    }
  if (pairs.empty()) return make_scores({}, {});
  return make_scores(std::move(pairs), softmax(logits));
}

}  // namespace compnet
