// SPDX-License-Identifier: Apache-2.0
#include "compnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "compnet/errors.hpp"
#include "compnet/sgd.hpp"

namespace compnet {

namespace {

// Stable (pointer, length) segments over a ModelParams instance; the
// tensors never reallocate after construction.
struct FlatView {
  std::vector<std::pair<double*, size_t>> segs;
  size_t total = 0;
};

FlatView flatten(ModelParams& m) {
  FlatView v;
  m.for_each_tensor([&v](const char*, double* p, size_t n) {
    v.segs.emplace_back(p, n);
    v.total += n;
  });
  return v;
}

}  // namespace

TrainResult train_model(const Dataset& ds, const ModelSpec& spec_in, const TrainConfig& cfg,
                        const std::function<void(const EpochLog&)>& on_epoch) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");

  ModelSpec spec = spec_in;
  spec.variant = cfg.variant;
  spec.num_attrs = ds.num_attrs;
  spec.num_objs = ds.num_objs;
  if (cfg.variant == ModelVariant::kCompositionFc) spec.fc_pairs = ds.space.seen;

  std::vector<const ImageSample*> train = ds.partition("train");
  if (train.empty()) throw DataFormatError("train_model: dataset has no train partition");

  // Negative candidate pool, shared across images.
  std::vector<Pair> pool;
  if (cfg.negatives_from_seen_only) {
    pool = ds.space.seen;
  } else {
    pool.reserve(static_cast<size_t>(ds.num_attrs) * ds.num_objs);
    for (int a = 0; a < ds.num_attrs; ++a)
      for (int o = 0; o < ds.num_objs; ++o) pool.push_back({a, o});
  }

  TrainResult result;
  result.model = ModelParams::init(spec, cfg.seed);
  ModelParams grads = ModelParams::zeros_like(result.model);
  ModelParams velocity = ModelParams::zeros_like(result.model);
  FlatView fp = flatten(result.model);
  FlatView fg = flatten(grads);
  FlatView fv = flatten(velocity);

  const int n = static_cast<int>(train.size());
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = steps_per_epoch * cfg.epochs;
  LrSchedule sched = cfg.schedule;
  sched.batch_size = cfg.batch_size;

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (int b = 0; b < steps_per_epoch; ++b, ++step) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      const double w = 1.0 / static_cast<double>(hi - lo);

      for (auto& [p, len] : fg.segs) std::fill(p, p + len, 0.0);
      for (int i = lo; i < hi; ++i) {
        const ImageSample& s = *train[order[i]];
        ImageLabels labels{s.attrs, s.objs};
        const LossTerms t = image_loss(result.model, s.feature, labels, pool, cfg.loss,
                                       Mode::kTrain, &rng, w, &grads);
        log.terms.accumulate(t, 1.0 / static_cast<double>(n));
      }

      if (cfg.weight_decay > 0.0) {
        for (size_t s2 = 0; s2 < fg.segs.size(); ++s2) {
          double* g = fg.segs[s2].first;
          const double* p = fp.segs[s2].first;
          for (size_t i = 0; i < fg.segs[s2].second; ++i) g[i] += cfg.weight_decay * p[i];
        }
      }
      if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto& [g, len] : fg.segs)
          for (size_t i = 0; i < len; ++i) sq += g[i] * g[i];
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
          const double scale = cfg.clip_norm / norm;
          for (auto& [g, len] : fg.segs)
            for (size_t i = 0; i < len; ++i) g[i] *= scale;
        }
      }

      log.rate = lr_at(sched, step, total_steps);
      for (size_t s2 = 0; s2 < fp.segs.size(); ++s2)
        sgd_step(fp.segs[s2].first, fg.segs[s2].first, fv.segs[s2].first, fp.segs[s2].second,
                 log.rate, cfg.momentum);
    }
    if (on_epoch) on_epoch(log);
    result.logs.push_back(log);
  }
  return result;
}

}  // namespace compnet
