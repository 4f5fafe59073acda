// SPDX-License-Identifier: Apache-2.0
#include "compnet/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "compnet/errors.hpp"

namespace compnet {

std::string canonicalize(const std::string& label, const SynonymMap& map) {
  auto it = map.find(label);
  return it == map.end() ? label : it->second;
}

std::vector<std::string> canonicalize(const std::vector<std::string>& labels,
                                      const SynonymMap& map) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const std::string& l : labels) out.push_back(canonicalize(l, map));
  return out;
}

SynonymMap load_synonyms_tsv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open synonym map: " + path);
  SynonymMap map;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw DataFormatError(path + ":" + std::to_string(line_no) +
                            ": expected raw<TAB>canonical");
    map[line.substr(0, tab)] = line.substr(tab + 1);
  }
  // Canonical labels must map to themselves if they appear as keys.
  for (const auto& [raw, canon] : map) {
    auto it = map.find(canon);
    if (it != map.end() && it->second != canon)
      throw DataFormatError(path + ": canonical label '" + canon + "' is not a fixed point");
  }
  return map;
}

long CooccurrenceTable::n_attr(int a) const {
  return std::accumulate(counts[a].begin(), counts[a].end(), 0L);
}

int CooccurrenceTable::attr_index(const std::string& label) const {
  for (size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i] == label) return static_cast<int>(i);
  return -1;
}

CooccurrenceTable load_cooccurrence_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open co-occurrence table: " + path);

  struct Row {
    std::string a, o;
    long c;
  };
  std::vector<Row> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string a, o, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, o, ',') || !std::getline(ss, c))
      throw DataFormatError(path + ":" + std::to_string(line_no) +
                            ": expected attribute,object,count");
    if (line_no == 1 && (c == "count" || c == "n")) continue;  // header row
    try {
      rows.push_back({a, o, std::stol(c)});
    } catch (const std::exception&) {
      throw DataFormatError(path + ":" + std::to_string(line_no) + ": bad count '" + c + "'");
    }
    if (rows.back().c < 0)
      throw DataFormatError(path + ":" + std::to_string(line_no) + ": negative count");
  }

  CooccurrenceTable t;
  std::unordered_map<std::string, int> ai, oi;
  for (const Row& r : rows) {
    if (!ai.count(r.a)) {
      ai[r.a] = static_cast<int>(t.attrs.size());
      t.attrs.push_back(r.a);
    }
    if (!oi.count(r.o)) {
      oi[r.o] = static_cast<int>(t.objs.size());
      t.objs.push_back(r.o);
    }
  }
  t.counts.assign(t.attrs.size(), std::vector<long>(t.objs.size(), 0));
  for (const Row& r : rows) t.counts[ai[r.a]][oi[r.o]] += r.c;
  for (const auto& row : t.counts)
    for (long c : row) t.corpus_size += c;
  return t;
}

double sharedness_raw(const CooccurrenceTable& table, int attr, long threshold) {
  if (attr < 0 || attr >= static_cast<int>(table.attrs.size()))
    throw DimensionError("sharedness_raw: attribute index out of range");
  const long n_a = table.n_attr(attr);
  if (n_a == 0) return 0.0;
  long breadth = 0;
  for (long c : table.counts[attr])
    if (c > threshold) ++breadth;
  const double n = static_cast<double>(std::max(table.corpus_size, n_a));
  return static_cast<double>(breadth) * std::log(n / static_cast<double>(n_a));
}

Vec sharedness_scores(const CooccurrenceTable& table, long threshold) {
  Vec raw(table.attrs.size());
  for (size_t a = 0; a < table.attrs.size(); ++a)
    raw[a] = sharedness_raw(table, static_cast<int>(a), threshold);
  const auto [mn, mx] = std::minmax_element(raw.begin(), raw.end());
  if (*mx == *mn) return Vec(raw.size(), 1.0);  // degenerate min-max
  Vec out(raw.size());
  for (size_t a = 0; a < raw.size(); ++a) out[a] = (raw[a] - *mn) / (*mx - *mn);
  return out;
}

Vec train_probe(const std::vector<Vec>& features, const std::vector<char>& labels, int epochs,
                double rate, uint64_t seed) {
  if (features.empty() || features.size() != labels.size())
    throw DimensionError("train_probe: bad inputs");
  const int d = static_cast<int>(features[0].size());
  Vec w(d + 1, 0.0);  // trailing coordinate is the bias
  std::mt19937_64 rng(seed);
  std::vector<int> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int i : order) {
      double s = w[d];
      for (int j = 0; j < d; ++j) s += w[j] * features[i][j];
      const double sigma = 1.0 / (1.0 + std::exp(-s));
      const double g = sigma - (labels[i] ? 1.0 : 0.0);
      for (int j = 0; j < d; ++j) w[j] -= rate * g * features[i][j];
      w[d] -= rate * g;
    }
  }
  return w;
}

double probe_score(const Vec& probe, const Vec& feature) {
  if (probe.size() != feature.size() + 1) throw DimensionError("probe_score: size mismatch");
  double s = probe.back();
  for (size_t j = 0; j < feature.size(); ++j) s += probe[j] * feature[j];
  return s;
}

double visualness(const Vec& probe, const std::vector<Vec>& heldout_features,
                  const std::vector<char>& heldout_has_attr) {
  if (heldout_features.size() != heldout_has_attr.size())
    throw DimensionError("visualness: size mismatch");
  if (heldout_features.size() < 5)
    throw DataFormatError("visualness: need at least 5 held-out images");
  std::vector<int> order(heldout_features.size());
  std::iota(order.begin(), order.end(), 0);
  Vec scores(heldout_features.size());
  for (size_t i = 0; i < heldout_features.size(); ++i)
    scores[i] = probe_score(probe, heldout_features[i]);
  std::partial_sort(order.begin(), order.begin() + 5, order.end(), [&](int x, int y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return x < y;
  });
  int hits = 0;
  for (int r = 0; r < 5; ++r)
    if (heldout_has_attr[order[r]]) ++hits;
  return static_cast<double>(hits) / 5.0;
}

std::vector<AttributeScore> rank_attributes(std::vector<AttributeScore> scores) {
  std::stable_sort(scores.begin(), scores.end(), [](const AttributeScore& x, const AttributeScore& y) {
    return x.rank_score() > y.rank_score();
  });
  return scores;
}

}  // namespace compnet
