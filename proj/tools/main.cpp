// SPDX-License-Identifier: Apache-2.0
// Command-line front end: generate | curate | train | eval | predict | export.
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "compnet/cli.hpp"
#include "compnet/errors.hpp"

namespace {

// Error taxonomy maps to distinct exit codes so scripted callers can
// distinguish failure classes.
constexpr int kIoExit = 3;
constexpr int kConfigExit = 4;
constexpr int kDimensionExit = 5;
constexpr int kDataFormatExit = 6;

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const compnet::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIoExit;
  } catch (const compnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const compnet::DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return kDimensionExit;
  } catch (const compnet::DataFormatError& e) {
    std::cerr << "data format error: " << e.what() << "\n";
    return kDataFormatExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compositional attribute-object classification engine"};
  app.require_subcommand(1);
  // Global flags remain usable after the subcommand name.
  app.fallthrough();

  std::string config_path, out_dir = "run";
  std::optional<uint64_t> seed;
  app.add_option("--config", config_path, "config file (ini sections)")->configurable(false);
  app.add_option("--seed", seed, "seed override");
  app.add_option("--out", out_dir, "output directory");

  auto* c_generate = app.add_subcommand("generate", "write a synthetic dataset");

  auto* c_train = app.add_subcommand("train", "train a model and log metrics");

  compnet::EvalOpts eval_opts;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  c_eval->add_option("--checkpoint", eval_opts.checkpoint)->required();
  c_eval->add_option("--dataset", eval_opts.dataset)->required();
  c_eval->add_option("--k-a", eval_opts.k_a, "attribute shortlist size (0 = full)");
  c_eval->add_option("--k-o", eval_opts.k_o, "object shortlist size (0 = full)");
  c_eval->add_option("--report", eval_opts.out_json, "also write the JSON report here");

  compnet::PredictOpts predict_opts;
  auto* c_predict = app.add_subcommand("predict", "emit ranked pair predictions");
  c_predict->add_option("--checkpoint", predict_opts.checkpoint)->required();
  c_predict->add_option("--bank", predict_opts.bank, "score through an exported bank");
  c_predict->add_option("--dataset", predict_opts.dataset)->required();
  c_predict->add_option("--k-a", predict_opts.k_a);
  c_predict->add_option("--k-o", predict_opts.k_o);
  c_predict->add_option("--top", predict_opts.truncate_m, "keep only the top-m pairs");
  c_predict->add_option("--predictions", predict_opts.out, "output path (default stdout)");

  compnet::ExportOpts export_opts;
  auto* c_export = app.add_subcommand("export", "export a classifier bank");
  c_export->add_option("--checkpoint", export_opts.checkpoint)->required();
  c_export->add_option("--allow", export_opts.allow_csv, "allow-list csv (attr_id,obj_id)");
  c_export->add_option("--dataset", export_opts.dataset, "allow all seen pairs of a dataset");
  c_export->add_option("--bank", export_opts.out, "output bank path")->required();

  compnet::CurateOpts curate_opts;
  auto* c_curate = app.add_subcommand("curate", "rank attributes for curation");
  c_curate->add_option("--cooccurrence", curate_opts.cooccurrence)->required();
  c_curate->add_option("--features", curate_opts.features)->required();
  c_curate->add_option("--synonyms", curate_opts.synonyms);
  c_curate->add_option("--ranking", curate_opts.out, "output csv (default stdout)");
  c_curate->add_option("--threshold", curate_opts.threshold, "co-occurrence count threshold");
  c_curate->add_option("--probe-epochs", curate_opts.probe_epochs);
  c_curate->add_option("--probe-rate", curate_opts.probe_rate);

  CLI11_PARSE(app, argc, argv);

  if (c_generate->parsed()) {
    if (config_path.empty()) {
      std::cerr << "config error: generate needs --config\n";
      return kConfigExit;
    }
    return guarded([&] { return compnet::cmd_generate({config_path, out_dir, seed}); });
  }
  if (c_train->parsed()) {
    if (config_path.empty()) {
      std::cerr << "config error: train needs --config\n";
      return kConfigExit;
    }
    return guarded([&] { return compnet::cmd_train({config_path, out_dir, seed}); });
  }
  if (c_eval->parsed()) return guarded([&] { return compnet::cmd_eval(eval_opts); });
  if (c_predict->parsed()) return guarded([&] { return compnet::cmd_predict(predict_opts); });
  if (c_export->parsed()) return guarded([&] { return compnet::cmd_export(export_opts); });
  if (c_curate->parsed()) {
    if (seed) curate_opts.seed = *seed;
    return guarded([&] { return compnet::cmd_curate(curate_opts); });
  }
  return 0;
}
