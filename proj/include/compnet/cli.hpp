// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "compnet/config.hpp"
#include "compnet/dataset.hpp"
#include "compnet/train.hpp"

namespace compnet {

// Everything a training/eval run needs, assembled from one config file.
// Unknown config keys are rejected at parse time.
struct RunConfig {
  std::string dataset_path;  // empty: generate from `world`
  SyntheticWorldConfig world;
  ModelSpec model;
  TrainConfig train;
  int k_a = 0;  // 0: full vocabulary
  int k_o = 0;
  std::vector<int> epoch_budgets;  // optional sweep; empty: single run
};

RunConfig parse_run_config(const KeyValueConfig& kv);

// Resolves the dataset a run refers to (loads or generates).
Dataset run_dataset(const RunConfig& rc);

struct GenerateOpts {
  std::string config;
  std::string out_dir;
  std::optional<uint64_t> seed;
};

struct TrainOpts {
  std::string config;
  std::string out_dir;
  std::optional<uint64_t> seed;
};

struct EvalOpts {
  std::string checkpoint;
  std::string dataset;
  int k_a = 0;  // 0: full vocabulary
  int k_o = 0;
  std::string out_json;  // optional
};

struct PredictOpts {
  std::string checkpoint;
  std::string bank;  // optional: score through an exported bank
  std::string dataset;
  int k_a = 0;
  int k_o = 0;
  int truncate_m = 0;  // 0: keep the whole grid
  std::string out;     // JSON-lines predictions
};

struct ExportOpts {
  std::string checkpoint;
  std::string allow_csv;  // rows: attr_id,obj_id
  std::string dataset;    // alternative: allow all seen pairs of a dataset
  std::string out;
};

struct CurateOpts {
  std::string cooccurrence;  // csv: attribute,object,count
  std::string features;      // json-lines: {"feature": [...], "attrs": ["red", ...]}
  std::string synonyms;      // optional tsv
  std::string out;
  long threshold = 5;
  int probe_epochs = 20;
  double probe_rate = 0.1;
  uint64_t seed = 1;
};

int cmd_generate(const GenerateOpts& opts);
int cmd_train(const TrainOpts& opts);
int cmd_eval(const EvalOpts& opts);
int cmd_predict(const PredictOpts& opts);
int cmd_export(const ExportOpts& opts);
int cmd_curate(const CurateOpts& opts);

}  // namespace compnet
