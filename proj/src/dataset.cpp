// SPDX-License-Identifier: Apache-2.0
#include "compnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "compnet/errors.hpp"

namespace compnet {

using nlohmann::json;

void SyntheticWorldConfig::validate() const {
  if (num_attrs < 2 || num_objs < 2) throw ConfigError("world needs at least 2 attrs and 2 objs");
  if (raw_dim < 1) throw ConfigError("raw_dim must be positive");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(drop_prob) || !prob(add_prob) || !prob(sparsity) || !prob(multi_attr_prob))
    throw ConfigError("probabilities must lie in [0,1]");
  if (!(unseen_ratio > 0.0 && unseen_ratio < 1.0)) throw ConfigError("unseen_ratio must be in (0,1)");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");
  if (train_images < 1 || test_images < 1) throw ConfigError("image counts must be positive");
  if (min_occurrence < 1) throw ConfigError("min_occurrence must be >= 1");
  if (pool_margin < 1.0) throw ConfigError("pool_margin must be >= 1");
  if (std::lround(sparsity * num_attrs * num_objs) < 2)
    throw ConfigError("sparsity yields fewer than 2 realizable pairs");
}

bool CompositionSpace::is_seen(Pair p) const {
  return std::binary_search(seen.begin(), seen.end(), p);
}

bool CompositionSpace::is_unseen(Pair p) const {
  return std::binary_search(unseen.begin(), unseen.end(), p);
}

std::vector<const ImageSample*> Dataset::partition(const std::string& tag) const {
  std::vector<const ImageSample*> out;
  for (const ImageSample& s : samples)
    if (s.partition == tag) out.push_back(&s);
  return out;
}

int corrupt_axis(std::vector<int>& labels, int vocab, double drop_prob, double add_prob,
                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int dropped = 0;
  std::vector<int> kept;
  kept.reserve(labels.size());
  for (int l : labels) {
    if (unit(rng) < drop_prob)
      ++dropped;
    else
      kept.push_back(l);
  }
  labels = std::move(kept);
  if (add_prob > 0.0 && unit(rng) < add_prob) {
    std::uniform_int_distribution<int> pick(0, vocab - 1);
    const int extra = pick(rng);
    if (std::find(labels.begin(), labels.end(), extra) == labels.end()) labels.push_back(extra);
  }
  return dropped;
}

std::pair<std::vector<Pair>, std::vector<Pair>> split_compositions(const std::vector<Pair>& pairs,
                                                                   double unseen_ratio,
                                                                   uint64_t seed) {
  if (pairs.size() < 2) throw DataFormatError("split_compositions: fewer than 2 qualifying pairs");
  const long n_unseen = std::lround(unseen_ratio * static_cast<double>(pairs.size()));
  if (n_unseen < 1 || n_unseen >= static_cast<long>(pairs.size()))
    throw ConfigError("split_compositions: degenerate split (unseen count " +
                      std::to_string(n_unseen) + " of " + std::to_string(pairs.size()) + ")");
  std::vector<Pair> shuffled = pairs;
  std::sort(shuffled.begin(), shuffled.end());  // seed-stable regardless of input order
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<Pair> unseen(shuffled.begin(), shuffled.begin() + n_unseen);
  std::vector<Pair> seen(shuffled.begin() + n_unseen, shuffled.end());
  std::sort(unseen.begin(), unseen.end());
  std::sort(seen.begin(), seen.end());
  return {seen, unseen};
}

bool has_unseen_pair(const std::vector<int>& attrs, const std::vector<int>& objs,
                     const CompositionSpace& space) {
  for (int a : attrs)
    for (int o : objs)
      if (space.is_unseen({a, o})) return true;
  return false;
}

Dataset generate(const SyntheticWorldConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Prototypes: one per object, one per attribute.
  std::vector<Vec> obj_proto(cfg.num_objs, Vec(cfg.raw_dim));
  for (auto& p : obj_proto)
    for (double& x : p) x = normal(rng);
  std::vector<Vec> attr_proto(cfg.num_attrs, Vec(cfg.raw_dim));
  for (auto& p : attr_proto)
    for (double& x : p) x = cfg.attr_proto_scale * normal(rng);

  // Realizable co-occurrence grid.
  std::vector<Pair> all_pairs;
  all_pairs.reserve(static_cast<size_t>(cfg.num_attrs) * cfg.num_objs);
  for (int a = 0; a < cfg.num_attrs; ++a)
    for (int o = 0; o < cfg.num_objs; ++o) all_pairs.push_back({a, o});
  const long n_realizable = std::lround(cfg.sparsity * static_cast<double>(all_pairs.size()));
  if (n_realizable < 2) throw ConfigError("generate: sparsity yields fewer than 2 realizable pairs");
  std::shuffle(all_pairs.begin(), all_pairs.end(), rng);
  std::vector<Pair> realizable(all_pairs.begin(), all_pairs.begin() + n_realizable);
  std::sort(realizable.begin(), realizable.end());
  // Attributes co-occurring with each object, for multi-attribute images.
  std::vector<std::vector<int>> attrs_of_obj(cfg.num_objs);
  for (const Pair& p : realizable) attrs_of_obj[p.obj].push_back(p.attr);

  // Oversampled image pool; partition filtering below discards the surplus.
  const int pool_size = static_cast<int>(
      std::ceil(cfg.pool_margin * static_cast<double>(cfg.train_images + cfg.test_images)));
  std::vector<ImageSample> pool;
  pool.reserve(pool_size);
  std::uniform_int_distribution<int> pick_pair(0, static_cast<int>(realizable.size()) - 1);
  for (int i = 0; i < pool_size; ++i) {
    const Pair seedp = realizable[pick_pair(rng)];
    std::vector<int> attrs = {seedp.attr};
    std::vector<int> objs = {seedp.obj};
    if (unit(rng) < cfg.multi_attr_prob) {
      const std::vector<int>& co = attrs_of_obj[seedp.obj];
      if (co.size() > 1) {
        std::uniform_int_distribution<int> pick_a(0, static_cast<int>(co.size()) - 1);
        int extra = co[pick_a(rng)];
        while (extra == seedp.attr) extra = co[pick_a(rng)];
        attrs.push_back(extra);
      }
    }

    ImageSample s;
    s.feature.assign(cfg.raw_dim, 0.0);
    for (int d = 0; d < cfg.raw_dim; ++d) {
      double v = obj_proto[seedp.obj][d];
      for (int a : attrs) v += attr_proto[a][d];
      if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * normal(rng);
      s.feature[d] = v;
    }

    const std::vector<int> orig_attrs = attrs, orig_objs = objs;
    corrupt_axis(attrs, cfg.num_attrs, cfg.drop_prob, cfg.add_prob, rng);
    corrupt_axis(objs, cfg.num_objs, cfg.drop_prob, cfg.add_prob, rng);
    // Weak labels may not go empty: re-add one original label per axis.
    if (attrs.empty()) {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(orig_attrs.size()) - 1);
      attrs.push_back(orig_attrs[pick(rng)]);
    }
    if (objs.empty()) {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(orig_objs.size()) - 1);
      objs.push_back(orig_objs[pick(rng)]);
    }
    std::sort(attrs.begin(), attrs.end());
    attrs.erase(std::unique(attrs.begin(), attrs.end()), attrs.end());
    std::sort(objs.begin(), objs.end());
    objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
    s.attrs = std::move(attrs);
    s.objs = std::move(objs);
    pool.push_back(std::move(s));
  }

  // Occurrence counts over the pool, then min-occurrence qualification.
  std::unordered_map<uint64_t, int> counts;
  for (const ImageSample& s : pool)
    for (int a : s.attrs)
      for (int o : s.objs) ++counts[pair_key(Pair{a, o})];
  std::vector<Pair> qualifying;
  for (const auto& [key, c] : counts)
    if (c >= cfg.min_occurrence)
      qualifying.push_back({static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffu)});
  std::sort(qualifying.begin(), qualifying.end());

  Dataset ds;
  ds.num_attrs = cfg.num_attrs;
  ds.num_objs = cfg.num_objs;
  ds.raw_dim = cfg.raw_dim;
  auto [seen, unseen] = split_compositions(qualifying, cfg.unseen_ratio, cfg.seed ^ 0x5eedULL);
  ds.space.seen = std::move(seen);
  ds.space.unseen = std::move(unseen);
  for (const Pair& p : qualifying) ds.space.counts[pair_key(p)] = counts[pair_key(p)];

  // Train draws only from images free of unseen pairs; test mixes both tags.
  int taken_train = 0, taken_test = 0;
  for (ImageSample& s : pool) {
    const bool unseen_img = has_unseen_pair(s.attrs, s.objs, ds.space);
    if (taken_train < cfg.train_images) {
      if (unseen_img) continue;
      s.partition = "train";
      ++taken_train;
    } else if (taken_test < cfg.test_images) {
      s.partition = unseen_img ? "test_unseen" : "test_seen";
      ++taken_test;
    } else {
      break;
    }
    s.id = static_cast<int>(ds.samples.size());
    ds.samples.push_back(std::move(s));
  }
  if (taken_train < cfg.train_images || taken_test < cfg.test_images)
    throw ConfigError("generate: pool exhausted before filling partitions; raise pool_margin");
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open dataset for writing: " + path);

  json header;
  header["type"] = "header";
  header["num_attrs"] = ds.num_attrs;
  header["num_objs"] = ds.num_objs;
  header["raw_dim"] = ds.raw_dim;
  auto pair_list = [](const std::vector<Pair>& ps) {
    json arr = json::array();
    for (const Pair& p : ps) arr.push_back({p.attr, p.obj});
    return arr;
  };
  header["seen"] = pair_list(ds.space.seen);
  header["unseen"] = pair_list(ds.space.unseen);
  json counts = json::array();
  for (const Pair& p : ds.space.seen) counts.push_back({p.attr, p.obj, ds.space.counts.at(pair_key(p))});
  for (const Pair& p : ds.space.unseen)
    counts.push_back({p.attr, p.obj, ds.space.counts.at(pair_key(p))});
  header["counts"] = counts;
  os << header.dump() << "\n";

  for (const ImageSample& s : ds.samples) {
    json rec;
    rec["id"] = s.id;
    rec["feature"] = s.feature;
    rec["attrs"] = s.attrs;
    rec["objs"] = s.objs;
    rec["partition"] = s.partition;
    os << rec.dump() << "\n";
  }
  if (!os) throw IoError("dataset write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset: " + path);

  Dataset ds;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw DataFormatError(path + ":" + std::to_string(line_no) + ": " + what);
  };

  if (!std::getline(is, line)) {
    line_no = 1;
    fail("missing header line");
  }
  ++line_no;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  try {
    if (header.at("type") != "header") fail("first line is not a header");
    ds.num_attrs = header.at("num_attrs").get<int>();
    ds.num_objs = header.at("num_objs").get<int>();
    ds.raw_dim = header.at("raw_dim").get<int>();
    for (const auto& p : header.at("seen"))
      ds.space.seen.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    for (const auto& p : header.at("unseen"))
      ds.space.unseen.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    for (const auto& c : header.at("counts"))
      ds.space.counts[pair_key(Pair{c.at(0).get<int>(), c.at(1).get<int>()})] = c.at(2).get<int>();
  } catch (const json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(std::string("bad record: ") + e.what());
    }
    ImageSample s;
    try {
      s.id = rec.at("id").get<int>();
      s.feature = rec.at("feature").get<Vec>();
      s.attrs = rec.at("attrs").get<std::vector<int>>();
      s.objs = rec.at("objs").get<std::vector<int>>();
      s.partition = rec.at("partition").get<std::string>();
    } catch (const json::exception& e) {
      fail(std::string("bad record: ") + e.what());
    }
    if (static_cast<int>(s.feature.size()) != ds.raw_dim) fail("feature length != raw_dim");
    for (int a : s.attrs)
      if (a < 0 || a >= ds.num_attrs) fail("attribute id outside header vocabulary");
    for (int o : s.objs)
      if (o < 0 || o >= ds.num_objs) fail("object id outside header vocabulary");
    if (s.attrs.empty() || s.objs.empty()) fail("sample without labels on both axes");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace compnet
