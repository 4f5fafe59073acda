// SPDX-License-Identifier: Apache-2.0
#include "compnet/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "compnet/checkpoint.hpp"
#include "compnet/curation.hpp"
#include "compnet/errors.hpp"
#include "compnet/inference.hpp"
#include "compnet/metrics.hpp"

namespace compnet {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig parse_run_config(const KeyValueConfig& kv) {
  RunConfig rc;

  const uint64_t seed = static_cast<uint64_t>(kv.get_int("run.seed", 1));
  rc.train.variant = variant_from_name(kv.get_string("run.variant", "compnet"));

  rc.dataset_path = kv.get_string("data.dataset", "");

  SyntheticWorldConfig& w = rc.world;
  w.num_attrs = static_cast<int>(kv.get_int("world.num_attrs", w.num_attrs));
  w.num_objs = static_cast<int>(kv.get_int("world.num_objs", w.num_objs));
  w.raw_dim = static_cast<int>(kv.get_int("world.raw_dim", w.raw_dim));
  w.attr_proto_scale = kv.get_double("world.attr_proto_scale", w.attr_proto_scale);
  w.noise_sigma = kv.get_double("world.noise_sigma", w.noise_sigma);
  w.drop_prob = kv.get_double("world.drop_prob", w.drop_prob);
  w.add_prob = kv.get_double("world.add_prob", w.add_prob);
  w.sparsity = kv.get_double("world.sparsity", w.sparsity);
  w.multi_attr_prob = kv.get_double("world.multi_attr_prob", w.multi_attr_prob);
  w.train_images = static_cast<int>(kv.get_int("world.train_images", w.train_images));
  w.test_images = static_cast<int>(kv.get_int("world.test_images", w.test_images));
  w.min_occurrence = static_cast<int>(kv.get_int("world.min_occurrence", w.min_occurrence));
  w.unseen_ratio = kv.get_double("world.unseen_ratio", w.unseen_ratio);
  w.pool_margin = kv.get_double("world.pool_margin", w.pool_margin);
  w.seed = static_cast<uint64_t>(kv.get_int("world.seed", static_cast<int64_t>(seed)));

  ModelSpec& m = rc.model;
  const std::string enc = kv.get_string("model.encoder", "linear");
  if (enc == "identity")
    m.encoder.kind = EncoderKind::kIdentity;
  else if (enc == "linear")
    m.encoder.kind = EncoderKind::kLinear;
  else if (enc == "mlp")
    m.encoder.kind = EncoderKind::kMlp;
  else
    throw ConfigError("model.encoder must be identity, linear, or mlp");
  m.feature_dim = static_cast<int>(kv.get_int("model.feature_dim", 16));
  m.encoder.input_dim = w.raw_dim;  // fixed up after dataset load when loading from file
  m.encoder.hidden_dim = static_cast<int>(kv.get_int("model.hidden_dim", 0));
  m.leaky_slope = kv.get_double("model.leaky_slope", 0.1);
  m.dropout_rate = kv.get_double("model.dropout_rate", 0.3);

  LossConfig& l = rc.train.loss;
  l.weights.lambda_a = kv.get_double("loss.lambda_a", 1.0);
  l.weights.lambda_o = kv.get_double("loss.lambda_o", 1.0);
  l.weights.lambda_ao = kv.get_double("loss.lambda_ao", 1.0);
  l.num_negatives = static_cast<int>(kv.get_int("loss.num_negatives", 25));
  l.use_conditionals = kv.get_bool("loss.use_conditionals", true);
  l.detach_constituents = kv.get_bool("loss.detach_constituents", false);
  l.conditional_row_cap = static_cast<int>(kv.get_int("loss.conditional_row_cap", 0));
  rc.train.negatives_from_seen_only = kv.get_bool("loss.negatives_from_seen_only", true);
  if (rc.train.variant == ModelVariant::kSoftmaxProduct) l.weights.lambda_ao = 0.0;

  TrainConfig& t = rc.train;
  t.epochs = static_cast<int>(kv.get_int("train.epochs", 6));
  t.batch_size = static_cast<int>(kv.get_int("train.batch_size", 64));
  t.seed = seed;
  t.momentum = kv.get_double("train.momentum", 0.9);
  t.weight_decay = kv.get_double("train.weight_decay", 0.0);
  t.clip_norm = kv.get_double("train.clip_norm", 0.0);
  t.schedule.base_rate = kv.get_double("train.base_rate", 0.1 / 256.0);
  t.schedule.warmup_fraction = kv.get_double("train.warmup_fraction", 0.05);
  const std::string decay = kv.get_string("train.decay", "step");
  if (decay == "step")
    t.schedule.decay = LrSchedule::Decay::kStep;
  else if (decay == "cosine")
    t.schedule.decay = LrSchedule::Decay::kCosine;
  else
    throw ConfigError("train.decay must be step or cosine");
  t.schedule.step_factor = kv.get_double("train.step_factor", 0.5);
  t.schedule.num_decay_steps = static_cast<int>(kv.get_int("train.num_decay_steps", 10));
  rc.epoch_budgets = kv.get_int_list("train.epoch_budgets");

  rc.k_a = static_cast<int>(kv.get_int("inference.k_a", 0));
  rc.k_o = static_cast<int>(kv.get_int("inference.k_o", 0));

  kv.require_all_consumed();
  return rc;
}

Dataset run_dataset(const RunConfig& rc) {
  if (!rc.dataset_path.empty()) return load_dataset(rc.dataset_path);
  return generate(rc.world);
}

namespace {

void write_manifest(const std::string& out_dir, const std::string& command, uint64_t seed,
                    const std::string& config_text, const std::vector<std::string>& outputs) {
  json j;
  j["version"] = 1;
  j["command"] = command;
  j["seed"] = seed;
  j["config_text"] = config_text;
  j["outputs"] = outputs;
  std::ofstream os(out_dir + "/manifest.json");
  if (!os) throw IoError("cannot write manifest in " + out_dir);
  os << j.dump(2) << "\n";
}

json epoch_record(const EpochLog& log) {
  json j;
  j["epoch"] = log.epoch;
  j["rate"] = log.rate;
  j["total"] = log.terms.total;
  j["attr"] = log.terms.attr;
  j["obj"] = log.terms.obj;
  j["comp"] = log.terms.comp;
  j["log_p_joint"] = log.terms.log_p_joint;
  j["log_p_cond_attr"] = log.terms.log_p_cond_attr;
  j["log_p_cond_obj"] = log.terms.log_p_cond_obj;
  j["num_positives"] = log.terms.num_positives;
  j["num_negatives"] = log.terms.num_negatives;
  return j;
}

json eval_record(const EvalReport& report) {
  json j;
  j["event"] = "final_eval";
  j["attr_p1"] = report.attr_p1;
  j["obj_p1"] = report.obj_p1;
  j["seen_map"] = report.seen_map ? json(*report.seen_map) : json(nullptr);
  j["unseen_map"] = report.unseen_map ? json(*report.unseen_map) : json(nullptr);
  j["compositions_skipped"] = report.compositions_skipped;
  j["images_evaluated"] = report.images_evaluated;
  return j;
}

}  // namespace

int cmd_generate(const GenerateOpts& opts) {
  KeyValueConfig kv = KeyValueConfig::from_file(opts.config);
  RunConfig rc = parse_run_config(kv);
  if (opts.seed) rc.world.seed = *opts.seed;
  fs::create_directories(opts.out_dir);
  const Dataset ds = generate(rc.world);
  const std::string path = opts.out_dir + "/dataset.jsonl";
  save_dataset(ds, path);
  write_manifest(opts.out_dir, "generate", rc.world.seed, kv.text(), {"dataset.jsonl"});
  std::cerr << "generated " << ds.samples.size() << " samples, " << ds.space.seen.size()
            << " seen / " << ds.space.unseen.size() << " unseen compositions\n";
  return 0;
}

int cmd_train(const TrainOpts& opts) {
  KeyValueConfig kv = KeyValueConfig::from_file(opts.config);
  RunConfig rc = parse_run_config(kv);
  if (opts.seed) {
    rc.train.seed = *opts.seed;
    rc.world.seed = *opts.seed;
  }
  fs::create_directories(opts.out_dir);
  Dataset ds = run_dataset(rc);
  rc.model.encoder.input_dim = ds.raw_dim;
  if (rc.model.encoder.kind == EncoderKind::kIdentity) rc.model.feature_dim = ds.raw_dim;

  const int k_a = rc.k_a > 0 ? rc.k_a : ds.num_attrs;
  const int k_o = rc.k_o > 0 ? rc.k_o : ds.num_objs;

  std::vector<int> budgets = rc.epoch_budgets;
  const bool sweep = !budgets.empty();
  if (budgets.empty()) budgets.push_back(rc.train.epochs);

  std::vector<std::string> outputs;
  for (int budget : budgets) {
    const std::string tag = sweep ? "_" + std::to_string(budget) : "";
    const std::string metrics_path = opts.out_dir + "/metrics" + tag + ".jsonl";
    const std::string ckpt_path = opts.out_dir + "/model" + tag + ".ckpt";
    std::ofstream metrics(metrics_path);
    if (!metrics) throw IoError("cannot write metrics log: " + metrics_path);

    TrainConfig tc = rc.train;
    tc.epochs = budget;
    TrainResult result = train_model(ds, rc.model, tc, [&metrics](const EpochLog& log) {
      metrics << epoch_record(log).dump() << "\n";
    });

    const EvalReport report = evaluate(result.model, ds, k_a, k_o);
    metrics << eval_record(report).dump() << "\n";
    save_checkpoint(result.model, ckpt_path);
    outputs.push_back(metrics_path);
    outputs.push_back(ckpt_path);
    std::cerr << "epochs=" << budget << " " << report.to_table();
  }
  write_manifest(opts.out_dir, "train", rc.train.seed, kv.text(), outputs);
  return 0;
}

int cmd_eval(const EvalOpts& opts) {
  const ModelParams model = load_checkpoint(opts.checkpoint);
  const Dataset ds = load_dataset(opts.dataset);
  const int k_a = opts.k_a > 0 ? opts.k_a : ds.num_attrs;
  const int k_o = opts.k_o > 0 ? opts.k_o : ds.num_objs;
  const EvalReport report = evaluate(model, ds, k_a, k_o);
  std::cout << report.to_json() << "\n";
  std::cerr << report.to_table();
  if (!opts.out_json.empty()) {
    std::ofstream os(opts.out_json);
    if (!os) throw IoError("cannot write report: " + opts.out_json);
    os << report.to_json() << "\n";
  }
  return 0;
}

int cmd_predict(const PredictOpts& opts) {
  const ModelParams model = load_checkpoint(opts.checkpoint);
  const Dataset ds = load_dataset(opts.dataset);
  const int k_a = opts.k_a > 0 ? opts.k_a : ds.num_attrs;
  const int k_o = opts.k_o > 0 ? opts.k_o : ds.num_objs;

  std::optional<ClassifierBank> bank;
  if (!opts.bank.empty()) bank = load_bank(opts.bank);

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!opts.out.empty()) {
    file.open(opts.out);
    if (!file) throw IoError("cannot write predictions: " + opts.out);
    out = &file;
  }

  for (const ImageSample& s : ds.samples) {
    const Vec phi = model.encode(s.feature);
    const Shortlist sl = predict_shortlist(model, phi, k_a, k_o);
    CompositionScores scores =
        bank ? score_compositions_banked(*bank, phi, sl) : score_grid(model, phi, sl);
    if (opts.truncate_m > 0) scores = top_scores_truncate(scores, opts.truncate_m);

    // Rank output by probability, ties by pair.
    std::vector<int> order(scores.pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      if (scores.probs[x] != scores.probs[y]) return scores.probs[x] > scores.probs[y];
      return scores.pairs[x] < scores.pairs[y];
    });
    json rec;
    rec["image_id"] = s.id;
    json pairs = json::array();
    for (int i : order)
      pairs.push_back({{"attribute", scores.pairs[i].attr},
                       {"object", scores.pairs[i].obj},
                       {"prob", scores.probs[i]}});
    rec["pairs"] = pairs;
    *out << rec.dump() << "\n";
  }
  return 0;
}

int cmd_export(const ExportOpts& opts) {
  const ModelParams model = load_checkpoint(opts.checkpoint);
  std::vector<Pair> allow;
  if (!opts.allow_csv.empty()) {
    std::ifstream is(opts.allow_csv);
    if (!is) throw IoError("cannot open allow-list: " + opts.allow_csv);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      const size_t comma = line.find(',');
      if (comma == std::string::npos)
        throw DataFormatError(opts.allow_csv + ":" + std::to_string(line_no) +
                              ": expected attr_id,obj_id");
      try {
        allow.push_back({std::stoi(line.substr(0, comma)), std::stoi(line.substr(comma + 1))});
      } catch (const std::exception&) {
        throw DataFormatError(opts.allow_csv + ":" + std::to_string(line_no) + ": bad pair ids");
      }
    }
  } else if (!opts.dataset.empty()) {
    const Dataset ds = load_dataset(opts.dataset);
    allow = ds.space.seen;
  } else {
    throw ConfigError("export needs an allow-list csv or a dataset");
  }
  const ClassifierBank bank = build_bank(model, allow);
  save_bank(bank, opts.out);
  std::cerr << "exported " << bank.pairs.size() << " composed classifiers\n";
  return 0;
}

namespace {

struct CurationImage {
  Vec feature;
  std::vector<std::string> attrs;
};

std::vector<CurationImage> load_curation_features(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open features: " + path);
  std::vector<CurationImage> images;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      CurationImage img;
      img.feature = rec.at("feature").get<Vec>();
      img.attrs = rec.at("attrs").get<std::vector<std::string>>();
      images.push_back(std::move(img));
    } catch (const json::exception& e) {
      throw DataFormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return images;
}

}  // namespace

int cmd_curate(const CurateOpts& opts) {
  SynonymMap synonyms;
  if (!opts.synonyms.empty()) synonyms = load_synonyms_tsv(opts.synonyms);

  // Canonicalize the raw table by merging rows/columns of equal canonical form.
  CooccurrenceTable raw_table = load_cooccurrence_csv(opts.cooccurrence);
  CooccurrenceTable table;
  {
    std::unordered_map<std::string, int> ai, oi;
    for (const std::string& a : raw_table.attrs) {
      const std::string c = canonicalize(a, synonyms);
      if (!ai.count(c)) {
        ai[c] = static_cast<int>(table.attrs.size());
        table.attrs.push_back(c);
      }
    }
    for (const std::string& o : raw_table.objs) {
      const std::string c = canonicalize(o, synonyms);
      if (!oi.count(c)) {
        oi[c] = static_cast<int>(table.objs.size());
        table.objs.push_back(c);
      }
    }
    table.counts.assign(table.attrs.size(), std::vector<long>(table.objs.size(), 0));
    for (size_t a = 0; a < raw_table.attrs.size(); ++a)
      for (size_t o = 0; o < raw_table.objs.size(); ++o)
        table.counts[ai[canonicalize(raw_table.attrs[a], synonyms)]]
                    [oi[canonicalize(raw_table.objs[o], synonyms)]] += raw_table.counts[a][o];
    table.corpus_size = raw_table.corpus_size;
  }

  std::vector<CurationImage> images = load_curation_features(opts.features);
  for (CurationImage& img : images) img.attrs = canonicalize(img.attrs, synonyms);

  // Deterministic interleaved 80/20 probe split.
  std::vector<Vec> train_f, held_f;
  std::vector<size_t> train_idx, held_idx;
  for (size_t i = 0; i < images.size(); ++i) {
    if (i % 5 == 4) {
      held_f.push_back(images[i].feature);
      held_idx.push_back(i);
    } else {
      train_f.push_back(images[i].feature);
      train_idx.push_back(i);
    }
  }

  const Vec shared = sharedness_scores(table, opts.threshold);
  std::vector<AttributeScore> scores;
  for (size_t a = 0; a < table.attrs.size(); ++a) {
    const std::string& label = table.attrs[a];
    auto has_attr = [&](size_t img) {
      const auto& as = images[img].attrs;
      return std::find(as.begin(), as.end(), label) != as.end();
    };
    std::vector<char> train_y, held_y;
    for (size_t i : train_idx) train_y.push_back(has_attr(i) ? 1 : 0);
    for (size_t i : held_idx) held_y.push_back(has_attr(i) ? 1 : 0);
    const Vec probe = train_probe(train_f, train_y, opts.probe_epochs, opts.probe_rate,
                                  opts.seed + static_cast<uint64_t>(a));
    AttributeScore s;
    s.label = label;
    s.visualness = visualness(probe, held_f, held_y);
    s.sharedness = shared[a];
    scores.push_back(std::move(s));
  }

  const std::vector<AttributeScore> ranked = rank_attributes(std::move(scores));
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!opts.out.empty()) {
    file.open(opts.out);
    if (!file) throw IoError("cannot write ranking: " + opts.out);
    out = &file;
  }
  *out << "attribute,visualness,sharedness,product\n";
  for (const AttributeScore& s : ranked)
    *out << s.label << "," << s.visualness << "," << s.sharedness << "," << s.rank_score()
         << "\n";
  return 0;
}

}  // namespace compnet
