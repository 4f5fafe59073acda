// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "compnet/dataset.hpp"
#include "compnet/loss.hpp"
#include "compnet/model.hpp"
#include "compnet/schedule.hpp"

namespace compnet {

struct TrainConfig {
  ModelVariant variant = ModelVariant::kCompNet;
  LossConfig loss;
  LrSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double clip_norm = 0.0;  // 0 disables clipping
  int epochs = 6;
  int batch_size = 64;
  uint64_t seed = 1;
  // Hard-negative candidate pool: the seen compositions (default) or the
  // full attribute-object grid (ablation).
  bool negatives_from_seen_only = true;
};

struct EpochLog {
  int epoch = 0;
  double rate = 0.0;   // learning rate at the last step of the epoch
  LossTerms terms;     // means over the epoch's images
};

struct TrainResult {
  ModelParams model;
  std::vector<EpochLog> logs;
};

// Mini-batch SGD over the train partition; single-threaded and
// deterministic given (dataset, spec, config).
TrainResult train_model(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                        const std::function<void(const EpochLog&)>& on_epoch = nullptr);

}  // namespace compnet
