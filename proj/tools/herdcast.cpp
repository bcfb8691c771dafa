/*
 * Copyright 2026 The herdcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// herdcast command line front end.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "herdcast/analysis.hpp"
#include "herdcast/binio.hpp"
#include "herdcast/dataset.hpp"
#include "herdcast/eval.hpp"
#include "herdcast/explain.hpp"
#include "herdcast/features.hpp"
#include "herdcast/parallel.hpp"
#include "herdcast/pipeline.hpp"
#include "herdcast/sim.hpp"
#include "herdcast/train.hpp"

namespace fs = std::filesystem;
using namespace herdcast;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("IO_WRITE", "cannot write " + path.string());
  return out;
}

struct SimulateArgs {
  std::string policy = "expert";
  int pairs = 1;
  int trials_per_pair = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::size_t threads = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  pipeline::PipelineConfig cfg = a.config.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(a.config);
  const Expertise e = parse_expertise(a.policy);
  sim::BatchSpec spec{e, a.pairs, a.trials_per_pair, a.seed, thread_count(a.threads), {}};
  if (e == Expertise::expert) {
    auto p = sim::PolicyKind::expert();
    p.hysteresis = cfg.expert_hysteresis;
    spec.policy = p;
  }
  const auto trials = sim::simulate_batch(cfg.world, spec);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  ingest::write_trials(a.out, trials);
  std::size_t ok = 0;
  for (const auto& t : trials) ok += t.success;
  std::printf("%zu trials (%zu successful) -> %s\n", trials.size(), ok, a.out.c_str());
  return 0;
}

int cmd_featurize(const std::string& trials_path, const std::string& out_dir) {
  const auto trials = ingest::read_trials(trials_path);
  pipeline::write_feature_tables(trials, out_dir);
  std::printf("%zu feature tables -> %s\n", trials.size() * kNumHerders, out_dir.c_str());
  return 0;
}

struct SamplesArgs {
  std::string trials;
  int horizon = 16;
  int stride = 2;
  bool representative = false;
  std::size_t n_train = 21000;
  std::size_t n_test = 2000;
  std::size_t n_test_sets = 10;
  double validation_fraction = 0.10;
  bool no_standardize = false;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_build_samples(const SamplesArgs& a) {
  const auto trials = ingest::read_trials(a.trials);
  const auto pool = dataset::build_pool(trials, a.stride, a.horizon);
  dataset::SplitConfig sc{a.n_train, a.n_test, a.n_test_sets,
                          a.representative ? dataset::Balance::representative : dataset::Balance::balanced,
                          a.validation_fraction, !a.no_standardize, a.seed};
  const auto split = dataset::assemble_split(pool, sc);
  pipeline::write_split(split, a.out);
  const auto c = pool.subclass_counts();
  std::printf("pool %zu windows (NT-NS %zu, NT-S %zu, T-NS %zu, T-S %zu) -> %s\n", pool.windows.size(), c[0], c[1],
              c[2], c[3], a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string samples;
  std::string validation;
  int horizon = 16;
  std::uint64_t seed = 0;
  double scale = 0.25;
  std::size_t max_epochs = 200;
  std::size_t batch = 64;
  std::size_t patience = 5;
  double lr = 0.0018;
  double validation_fraction = 0.10;
  std::string loss = "final_step";
  bool no_standardize = false;
  bool verbose = false;
  std::size_t threads = 1;
  std::string out;
  std::string history;
};

int cmd_train(const TrainArgs& a) {
  auto tr = dataset::read_hxs(a.samples);
  if (tr.horizon != a.horizon)
    throw Error("TRAIN_HORIZON", "sample file horizon is " + std::to_string(tr.horizon) + ", --t-hor is " +
                                     std::to_string(a.horizon));
  dataset::SampleSet va;
  if (!a.validation.empty()) {
    va = dataset::read_hxs(a.validation);
  } else {
    va = dataset::split_validation(tr, a.validation_fraction, derive_seed(a.seed, {0}));
  }
  train::TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.batch_size = a.batch;
  tc.max_epochs = a.max_epochs;
  tc.patience = a.patience;
  tc.seed = derive_seed(a.seed, {1});
  tc.threads = thread_count(a.threads);
  tc.verbose = a.verbose;
  if (a.loss == "all_steps") tc.loss = nn::LossMode::all_steps;
  else if (a.loss != "final_step") throw pipeline::ConfigError("CONFIG_BAD_VALUE", "--loss must be final_step or all_steps");
  auto model = nn::LstmModel::init(nn::Architecture::scaled(a.scale), derive_seed(a.seed, {2}));
  model.meta.tag = "seed=" + std::to_string(a.seed);
  if (!tr.samples.empty()) {
    // Expertise from the trial IDs written by the simulator, expert otherwise.
    if (tr.samples.front().trial_id.rfind("novice", 0) == 0) model.meta.expertise = Expertise::novice;
  }
  const auto result = train::fit(model, tr, va, tc, {}, !a.no_standardize);
  train::save_checkpoint(result.model, a.out);
  if (!a.history.empty()) {
    std::ofstream hist(a.history);
    if (!hist) throw Error("IO_WRITE", "cannot write " + a.history);
    pipeline::write_history_csv(result.history, hist);
  }
  const auto& best = result.history.epochs[result.history.best_epoch - 1];
  std::printf("%zu epochs, best %zu (val loss %.5f, val accuracy %.4f) -> %s\n", result.history.epochs.size(),
              result.history.best_epoch, best.val_loss, best.val_accuracy, a.out.c_str());
  return 0;
}

int cmd_eval(const std::string& model_path, const std::vector<std::string>& tests,
             const std::vector<std::string>& cross, const std::string& out_dir, std::size_t threads) {
  threads = thread_count(threads);
  const auto model = train::load_checkpoint(model_path);
  std::vector<dataset::SampleSet> own;
  for (const auto& t : tests) own.push_back(dataset::read_hxs(t));
  std::vector<eval::ReportRow> rows;
  std::vector<std::pair<std::string, eval::ConfusionMatrix>> cms;
  auto run = [&](const nn::LstmModel& m, const std::string& m_name, const dataset::SampleSet& set,
                 const std::string& set_name) {
    const auto ev = eval::evaluate(m, set, threads);
    rows.push_back({m_name, set_name, ev.metrics});
    cms.emplace_back(m_name + " on " + set_name, ev.cm);
  };
  for (std::size_t i = 0; i < own.size(); ++i) run(model, model_path, own[i], tests[i]);

  std::optional<eval::CrossTable> table;
  if (!cross.empty()) {
    if (cross.size() != 2) throw pipeline::ConfigError("CONFIG_BAD_VALUE", "--cross takes MODEL.hxm TEST.hxs");
    const auto other = train::load_checkpoint(cross[0]);
    const std::vector<dataset::SampleSet> other_tests{dataset::read_hxs(cross[1])};
    for (std::size_t i = 0; i < own.size(); ++i) run(other, cross[0], own[i], tests[i]);
    run(model, model_path, other_tests[0], cross[1]);
    run(other, cross[0], other_tests[0], cross[1]);
    if (model.meta.expertise == other.meta.expertise)
      throw Error("EVAL_CROSS", "--cross needs models trained on different expertise levels");
    const bool expert_first = model.meta.expertise == Expertise::expert;
    table = expert_first ? eval::cross_evaluate(model, other, own, other_tests, threads)
                         : eval::cross_evaluate(other, model, other_tests, own, threads);
  }
  eval::write_metrics_table(std::cout, rows);
  if (table) eval::write_cross_csv(std::cout, *table);
  if (!out_dir.empty()) {
    auto m = open_out(fs::path(out_dir) / "metrics.csv");
    eval::write_metrics_csv(m, rows);
    auto c = open_out(fs::path(out_dir) / "confusion.csv");
    for (const auto& [name, cm] : cms) eval::write_confusion_csv(c, name, cm);
    if (table) {
      auto x = open_out(fs::path(out_dir) / "cross.csv");
      eval::write_cross_csv(x, *table);
    }
  }
  return 0;
}

struct ExplainArgs {
  std::string model;
  std::string test;
  std::string background;
  std::size_t n = 6000;
  std::size_t perms = 200;
  std::size_t background_size = 200;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out = "explain";
};

int cmd_explain(const ExplainArgs& a) {
  const auto model = train::load_checkpoint(a.model);
  const auto test = dataset::read_hxs(a.test);
  const auto pool = dataset::read_hxs(a.background);
  const auto background = explain::draw_background(pool.samples, a.background_size, derive_seed(a.seed, {0}));
  const std::size_t n = std::min(a.n, test.samples.size());
  const std::span<const dataset::Sample> chosen(test.samples.data(), n);
  explain::ShapConfig sc;
  sc.n_perm = a.perms;
  sc.background_size = a.background_size;
  sc.seed = derive_seed(a.seed, {1});
  sc.threads = thread_count(a.threads);
  const explain::LstmPredictor predictor(model);
  const auto report = explain::explain_samples(predictor, chosen, background, sc,
                                               a.background + ":" + std::to_string(background.size()));
  auto shap = open_out(fs::path(a.out) / "shap.csv");
  explain::write_shap_csv(shap, report);
  auto top = open_out(fs::path(a.out) / "top10.csv");
  explain::write_top_table_csv(top, report, 10);
  std::printf("explained %zu samples -> %s\n", n, a.out.c_str());
  return 0;
}

int cmd_analyze(const std::string& trials_path, bool movement, bool measures, const std::string& out_dir,
                double bin_ms) {
  if (!movement && !measures) movement = measures = true;
  const pipeline::PipelineConfig defaults;
  const auto trials = ingest::read_trials(trials_path);
  if (measures) {
    auto out = open_out(fs::path(out_dir) / "measures.csv");
    analysis::write_measures_csv(out, trials, defaults.world.containment_radius);
  }
  if (movement) {
    std::vector<double> all;
    std::size_t switches = 0, skipped = 0;
    for (const auto& t : trials) {
      if (!t.labeled()) continue;
      const auto mt = analysis::inter_target_times(t, defaults.world.repulsion_radius);
      all.insert(all.end(), mt.durations_ms.begin(), mt.durations_ms.end());
      switches += mt.switches;
      skipped += mt.skipped;
    }
    auto out = open_out(fs::path(out_dir) / "movement-histogram.csv");
    analysis::write_histogram_csv(out, all, bin_ms);
    std::printf("%zu switches, %zu timed, %zu skipped\n", switches, all.size(), skipped);
  }
  return 0;
}

int cmd_run(const std::string& config, const std::string& out, std::optional<std::size_t> threads,
            const std::vector<std::string>& stages) {
  auto cfg = pipeline::load_config(config);
  if (!out.empty()) cfg.out_dir = out;
  if (threads) cfg.threads = *threads;
  if (!stages.empty()) {
    for (const auto& s : stages)
      if (std::find(std::begin(pipeline::kStages), std::end(pipeline::kStages), s) == std::end(pipeline::kStages))
        throw pipeline::ConfigError("CONFIG_UNKNOWN_STAGE", "unknown stage '" + s + "'");
    cfg.stages = stages;
  }
  const auto summary = pipeline::run_pipeline(cfg, std::cout);
  std::printf("done: %zu stages ran, %zu up to date; artifacts in %s\n", summary.ran.size(), summary.skipped.size(),
              cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"herdcast: herding simulation, target-selection prediction and attribution"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate herding trials");
  sim_cmd->add_option("--policy", sim_args.policy, "expert or novice")->check(CLI::IsMember({"expert", "novice"}));
  sim_cmd->add_option("--pairs", sim_args.pairs)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--trials-per-pair", sim_args.trials_per_pair)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_args.seed);
  sim_cmd->add_option("--config", sim_args.config, "world settings from a pipeline config");
  sim_cmd->add_option("--threads", sim_args.threads);
  sim_cmd->add_option("-o,--out", sim_args.out, "trial file (JSON lines)")->required();

  std::string feat_trials, feat_out;
  auto* feat_cmd = app.add_subcommand("featurize", "Write per-herder feature tables");
  feat_cmd->add_option("--trials", feat_trials)->required();
  feat_cmd->add_option("-o,--out", feat_out)->required();

  SamplesArgs samples_args;
  bool balanced_flag = false;
  auto* samples_cmd = app.add_subcommand("build-samples", "Window trials into train/validation/test sets");
  samples_cmd->add_option("--trials", samples_args.trials)->required();
  samples_cmd->add_option("--t-hor", samples_args.horizon)->check(CLI::PositiveNumber);
  samples_cmd->add_option("--stride", samples_args.stride)->check(CLI::IsMember({1, 2, 4}));
  auto* bal = samples_cmd->add_flag("--balanced", balanced_flag, "equal share per sub-class (default)");
  samples_cmd->add_flag("--representative", samples_args.representative, "keep pool proportions")->excludes(bal);
  samples_cmd->add_option("--n-train", samples_args.n_train);
  samples_cmd->add_option("--n-test", samples_args.n_test);
  samples_cmd->add_option("--n-test-sets", samples_args.n_test_sets);
  samples_cmd->add_option("--validation-fraction", samples_args.validation_fraction);
  samples_cmd->add_flag("--no-standardize", samples_args.no_standardize);
  samples_cmd->add_option("--seed", samples_args.seed);
  samples_cmd->add_option("-o,--out", samples_args.out, "output directory")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train an LSTM target-selection classifier");
  train_cmd->add_option("--samples", train_args.samples)->required();
  train_cmd->add_option("--validation", train_args.validation, "validation set (default: split from --samples)");
  train_cmd->add_option("--t-hor", train_args.horizon);
  train_cmd->add_option("--seed", train_args.seed);
  train_cmd->add_option("--scale", train_args.scale, "hidden width multiplier")->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", train_args.max_epochs);
  train_cmd->add_option("--batch", train_args.batch)->check(CLI::PositiveNumber);
  train_cmd->add_option("--patience", train_args.patience);
  train_cmd->add_option("--lr", train_args.lr);
  train_cmd->add_option("--validation-fraction", train_args.validation_fraction);
  train_cmd->add_option("--loss", train_args.loss)->check(CLI::IsMember({"final_step", "all_steps"}));
  train_cmd->add_flag("--no-standardize", train_args.no_standardize);
  train_cmd->add_flag("-v,--verbose", train_args.verbose);
  train_cmd->add_option("--threads", train_args.threads);
  train_cmd->add_option("--history", train_args.history, "per-epoch CSV");
  train_cmd->add_option("-o,--out", train_args.out)->required();

  std::string eval_model, eval_out;
  std::vector<std::string> eval_tests, eval_cross;
  std::size_t eval_threads = 1;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on sample sets");
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_option("--test", eval_tests)->required();
  eval_cmd->add_option("--cross", eval_cross, "second model and its test set")->expected(2);
  eval_cmd->add_option("-o,--out", eval_out, "directory for CSV reports");
  eval_cmd->add_option("--threads", eval_threads);

  ExplainArgs ex_args;
  auto* ex_cmd = app.add_subcommand("explain", "Shapley attributions over the feature channels");
  ex_cmd->add_option("--model", ex_args.model)->required();
  ex_cmd->add_option("--test", ex_args.test)->required();
  ex_cmd->add_option("--background", ex_args.background, "sample file to draw the background from")->required();
  ex_cmd->add_option("--n", ex_args.n, "samples to explain");
  ex_cmd->add_option("--perms", ex_args.perms)->check(CLI::Range(2, 1000000));
  ex_cmd->add_option("--background-size", ex_args.background_size)->check(CLI::PositiveNumber);
  ex_cmd->add_option("--seed", ex_args.seed);
  ex_cmd->add_option("--threads", ex_args.threads);
  ex_cmd->add_option("-o,--out", ex_args.out);

  std::string an_trials, an_out = "analysis";
  bool an_movement = false, an_measures = false;
  double an_bin = 40.0;
  auto* an_cmd = app.add_subcommand("analyze", "Movement times and herding measures");
  an_cmd->add_option("--trials", an_trials)->required();
  an_cmd->add_flag("--movement-times", an_movement);
  an_cmd->add_flag("--measures", an_measures);
  an_cmd->add_option("--bin-ms", an_bin)->check(CLI::PositiveNumber);
  an_cmd->add_option("-o,--out", an_out);

  std::string report_config, report_out;
  auto* report_cmd = app.add_subcommand("report", "Assemble the report directory of a pipeline run");
  report_cmd->add_option("--config", report_config)->required();
  report_cmd->add_option("--out", report_out, "run directory (overrides run.out_dir)");

  std::string run_config, run_out;
  std::optional<std::size_t> run_threads;
  std::vector<std::string> run_stages;
  auto* run_cmd = app.add_subcommand("run", "Run the pipeline described by a config file");
  run_cmd->add_option("config", run_config)->required();
  run_cmd->add_option("--out", run_out, "run directory (overrides run.out_dir)");
  run_cmd->add_option("--threads", run_threads);
  run_cmd->add_option("--stages", run_stages, "subset of stages to run")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim_cmd) return cmd_simulate(sim_args);
    if (*feat_cmd) return cmd_featurize(feat_trials, feat_out);
    if (*samples_cmd) return cmd_build_samples(samples_args);
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_model, eval_tests, eval_cross, eval_out, eval_threads);
    if (*ex_cmd) return cmd_explain(ex_args);
    if (*an_cmd) return cmd_analyze(an_trials, an_movement, an_measures, an_out, an_bin);
    if (*report_cmd) return cmd_run(report_config, report_out, std::nullopt, {"report"});
    if (*run_cmd) return cmd_run(run_config, run_out, run_threads, run_stages);
  } catch (const pipeline::ConfigError& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.code().c_str(), e.what());
    return kExitConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.code().c_str(), e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: INTERNAL: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
