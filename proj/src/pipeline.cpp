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

#include "herdcast/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "herdcast/analysis.hpp"
#include "herdcast/binio.hpp"
#include "herdcast/eval.hpp"
#include "herdcast/features.hpp"
#include "herdcast/parallel.hpp"
#include "herdcast/rng.hpp"

namespace herdcast::pipeline {
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- config

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

[[noreturn]] void bad_value(std::string_view name, const std::string& v, std::string_view want) {
  throw ConfigError("CONFIG_BAD_VALUE", "invalid value '" + v + "' for " + std::string(name) + ": expected " +
                                            std::string(want));
}

double to_double(const std::string& v, std::string_view name) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  double x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) bad_value(name, v, "a number");
  return x;
}

std::uint64_t to_u64(const std::string& v, std::string_view name) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) bad_value(name, v, "a non-negative integer");
  return x;
}

bool to_bool(const std::string& v, std::string_view name) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  bad_value(name, v, "true or false");
}

std::string fmt_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Binding {
  std::string section;
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class Access>
Binding real(std::string s, std::string k, Access acc) {
  const std::string name = s + "." + k;
  return {s, k, [acc, name](PipelineConfig& c, const std::string& v) { acc(c) = to_double(v, name); },
          [acc](const PipelineConfig& c) { return fmt_double(acc(c)); }};
}

template <class Access>
Binding integer(std::string s, std::string k, Access acc) {
  const std::string name = s + "." + k;
  return {s, k,
          [acc, name](PipelineConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(acc(c))>;
            const auto x = to_u64(v, name);
            if (x > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) bad_value(name, v, "a smaller integer");
            acc(c) = static_cast<T>(x);
          },
          [acc](const PipelineConfig& c) { return std::to_string(acc(c)); }};
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = [] {
    std::vector<Binding> b;
    // [run]
    b.push_back(integer("run", "seed", [](auto& c) -> auto& { return c.seed; }));
    b.push_back({"run", "out_dir", [](PipelineConfig& c, const std::string& v) { c.out_dir = v; },
                 [](const PipelineConfig& c) { return c.out_dir; }});
    b.push_back({"run", "stages",
                 [](PipelineConfig& c, const std::string& v) {
                   c.stages = split_list(v);
                   for (const auto& s : c.stages)
                     if (std::find(std::begin(kStages), std::end(kStages), s) == std::end(kStages))
                       throw ConfigError("CONFIG_UNKNOWN_STAGE", "unknown stage '" + s + "' in run.stages");
                 },
                 [](const PipelineConfig& c) { return join(c.stages); }});
    b.push_back(integer("run", "threads", [](auto& c) -> auto& { return c.threads; }));
    b.push_back({"run", "expertise",
                 [](PipelineConfig& c, const std::string& v) {
                   c.expertise.clear();
                   for (const auto& s : split_list(v)) {
                     if (s != "expert" && s != "novice") bad_value("run.expertise", s, "expert and/or novice");
                     c.expertise.push_back(parse_expertise(s));
                   }
                 },
                 [](const PipelineConfig& c) {
                   std::vector<std::string> v;
                   for (auto e : c.expertise) v.emplace_back(to_string(e));
                   return join(v);
                 }});
    // [world]
    b.push_back(real("world", "field_half_width", [](auto& c) -> auto& { return c.world.field_half_width; }));
    b.push_back(real("world", "containment_radius", [](auto& c) -> auto& { return c.world.containment_radius; }));
    b.push_back(real("world", "repulsion_radius", [](auto& c) -> auto& { return c.world.repulsion_radius; }));
    b.push_back(real("world", "target_brownian_sigma", [](auto& c) -> auto& { return c.world.target_brownian_sigma; }));
    b.push_back(real("world", "target_flee_speed", [](auto& c) -> auto& { return c.world.target_flee_speed; }));
    b.push_back(real("world", "expert_max_speed", [](auto& c) -> auto& { return c.world.expert_max_speed; }));
    b.push_back(real("world", "novice_max_speed", [](auto& c) -> auto& { return c.world.novice_max_speed; }));
    b.push_back(real("world", "steer_offset", [](auto& c) -> auto& { return c.world.steer_offset; }));
    b.push_back(real("world", "record_hz", [](auto& c) -> auto& { return c.world.record_hz; }));
    b.push_back(real("world", "max_duration", [](auto& c) -> auto& { return c.world.max_duration; }));
    // [simulate]
    b.push_back(integer("simulate", "pairs", [](auto& c) -> auto& { return c.pairs; }));
    b.push_back(integer("simulate", "trials_per_pair", [](auto& c) -> auto& { return c.trials_per_pair; }));
    b.push_back(real("simulate", "expert_hysteresis", [](auto& c) -> auto& { return c.expert_hysteresis; }));
    // [samples]
    b.push_back(integer("samples", "stride", [](auto& c) -> auto& { return c.stride; }));
    b.push_back(integer("samples", "horizon", [](auto& c) -> auto& { return c.horizon; }));
    b.push_back(integer("samples", "n_train", [](auto& c) -> auto& { return c.split.n_train; }));
    b.push_back(integer("samples", "n_test", [](auto& c) -> auto& { return c.split.n_test; }));
    b.push_back(integer("samples", "n_test_sets", [](auto& c) -> auto& { return c.split.n_test_sets; }));
    b.push_back({"samples", "balance",
                 [](PipelineConfig& c, const std::string& v) {
                   if (v == "balanced") c.split.balance = dataset::Balance::balanced;
                   else if (v == "representative") c.split.balance = dataset::Balance::representative;
                   else bad_value("samples.balance", v, "balanced or representative");
                 },
                 [](const PipelineConfig& c) {
                   return std::string(c.split.balance == dataset::Balance::balanced ? "balanced" : "representative");
                 }});
    b.push_back(real("samples", "validation_fraction", [](auto& c) -> auto& { return c.split.validation_fraction; }));
    b.push_back({"samples", "standardize",
                 [](PipelineConfig& c, const std::string& v) { c.split.standardize = to_bool(v, "samples.standardize"); },
                 [](const PipelineConfig& c) { return std::string(c.split.standardize ? "true" : "false"); }});
    // [train]
    b.push_back(real("train", "scale", [](auto& c) -> auto& { return c.scale; }));
    b.push_back(real("train", "learning_rate", [](auto& c) -> auto& { return c.train.learning_rate; }));
    b.push_back(real("train", "beta1", [](auto& c) -> auto& { return c.train.beta1; }));
    b.push_back(real("train", "beta2", [](auto& c) -> auto& { return c.train.beta2; }));
    b.push_back(real("train", "epsilon", [](auto& c) -> auto& { return c.train.epsilon; }));
    b.push_back(integer("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    b.push_back(integer("train", "max_epochs", [](auto& c) -> auto& { return c.train.max_epochs; }));
    b.push_back(integer("train", "patience", [](auto& c) -> auto& { return c.train.patience; }));
    b.push_back(real("train", "min_delta", [](auto& c) -> auto& { return c.train.min_delta; }));
    b.push_back({"train", "loss",
                 [](PipelineConfig& c, const std::string& v) {
                   if (v == "final_step") c.train.loss = nn::LossMode::final_step;
                   else if (v == "all_steps") c.train.loss = nn::LossMode::all_steps;
                   else bad_value("train.loss", v, "final_step or all_steps");
                 },
                 [](const PipelineConfig& c) {
                   return std::string(c.train.loss == nn::LossMode::final_step ? "final_step" : "all_steps");
                 }});
    b.push_back(real("train", "lstm_dropout", [](auto& c) -> auto& { return c.lstm_dropout; }));
    b.push_back(real("train", "inter_layer_dropout", [](auto& c) -> auto& { return c.inter_layer_dropout; }));
    // [explain]
    b.push_back(integer("explain", "samples", [](auto& c) -> auto& { return c.explain_samples; }));
    b.push_back(integer("explain", "permutations", [](auto& c) -> auto& { return c.n_perm; }));
    b.push_back(integer("explain", "background", [](auto& c) -> auto& { return c.background_size; }));
    b.push_back({"explain", "depths",
                 [](PipelineConfig& c, const std::string& v) {
                   c.depths.clear();
                   for (const auto& s : split_list(v)) c.depths.push_back(s == "all" ? 0 : to_u64(s, "explain.depths"));
                 },
                 [](const PipelineConfig& c) {
                   std::vector<std::string> v;
                   for (auto d : c.depths) v.push_back(d == 0 ? "all" : std::to_string(d));
                   return join(v);
                 }});
    b.push_back({"explain", "top_k",
                 [](PipelineConfig& c, const std::string& v) {
                   if (v == "union") c.top_k = explain::TopK::union_full_rank;
                   else if (v == "intersection") c.top_k = explain::TopK::intersection;
                   else bad_value("explain.top_k", v, "union or intersection");
                 },
                 [](const PipelineConfig& c) {
                   return std::string(c.top_k == explain::TopK::union_full_rank ? "union" : "intersection");
                 }});
    // [analyze]
    b.push_back(real("analyze", "bin_ms", [](auto& c) -> auto& { return c.bin_ms; }));
    return b;
  }();
  return table;
}

}  // namespace

void PipelineConfig::validate() const {
  try {
    world.validate();
    split.validate();
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.code(), e.what());
  }
  auto fail = [](const std::string& m) { throw ConfigError("CONFIG_INVALID", m); };
  if (expertise.empty()) fail("run.expertise must name at least one policy");
  if (pairs < 1 || trials_per_pair < 1) fail("simulate.pairs and simulate.trials_per_pair must be >= 1");
  if (!(expert_hysteresis >= 0)) fail("simulate.expert_hysteresis must be >= 0");
  if (stride != 1 && stride != 2 && stride != 4) fail("samples.stride must be 1, 2 or 4");
  if (horizon < 1) fail("samples.horizon must be >= 1");
  if (!(scale > 0)) fail("train.scale must be > 0");
  if (!(lstm_dropout >= 0 && lstm_dropout < 1) || !(inter_layer_dropout >= 0 && inter_layer_dropout < 1))
    fail("train dropout rates must lie in [0, 1)");
  if (n_perm < 2) fail("explain.permutations must be >= 2");
  if (background_size < 1 || explain_samples < 1) fail("explain.samples and explain.background must be >= 1");
  if (!(bin_ms > 0)) fail("analyze.bin_ms must be > 0");
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig cfg;
  std::string section;
  std::map<std::string, std::size_t> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const std::string where = " (line " + std::to_string(line_no) + ")";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("CONFIG_SYNTAX", "malformed section header" + where);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      const bool known = std::any_of(bindings().begin(), bindings().end(),
                                     [&](const Binding& b) { return b.section == section; });
      if (!known) throw ConfigError("CONFIG_UNKNOWN_SECTION", "unknown section '" + section + "'" + where);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("CONFIG_SYNTAX", "expected key = value" + where);
    if (section.empty()) throw ConfigError("CONFIG_SYNTAX", "key outside any section" + where);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const std::string name = section + "." + key;
    const auto it = std::find_if(bindings().begin(), bindings().end(),
                                 [&](const Binding& b) { return b.section == section && b.key == key; });
    if (it == bindings().end()) throw ConfigError("CONFIG_UNKNOWN_KEY", "unknown key '" + name + "'" + where);
    if (auto [pos, fresh] = seen.emplace(name, line_no); !fresh)
      throw ConfigError("CONFIG_DUPLICATE_KEY", "duplicate key '" + name + "'" + where);
    it->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("CONFIG_MISSING", "cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string canonical_section(const PipelineConfig& cfg, std::string_view section) {
  std::string out = "[" + std::string(section) + "]\n";
  for (const auto& b : bindings())
    if (b.section == section) out += b.key + "=" + b.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const PipelineConfig& cfg) {
  std::string text = "seed=" + std::to_string(cfg.seed) + "\n";
  for (const auto* s : {"world", "simulate", "samples", "train", "explain", "analyze"}) text += canonical_section(cfg, s);
  std::vector<std::string> e;
  for (auto x : cfg.expertise) e.emplace_back(to_string(x));
  text += "expertise=" + join(e) + "\n";
  return binio::fnv1a(text);
}

std::uint64_t stage_seed(const PipelineConfig& cfg, std::string_view stage, Expertise e) {
  const auto it = std::find(std::begin(kStages), std::end(kStages), stage);
  if (it == std::end(kStages)) throw Error("PIPELINE_STAGE", "unknown stage '" + std::string(stage) + "'");
  return derive_seed(cfg.seed, {static_cast<std::uint64_t>(it - std::begin(kStages)), static_cast<std::uint64_t>(e)});
}

// ---------------------------------------------------------------- layout

fs::path Layout::trials(Expertise e) const { return root / "trials" / (std::string(to_string(e)) + ".jsonl"); }
fs::path Layout::features(Expertise e) const { return root / "features" / std::string(to_string(e)); }
fs::path Layout::samples(Expertise e) const { return root / "samples" / std::string(to_string(e)); }
fs::path Layout::model(Expertise e) const { return root / "models" / (std::string(to_string(e)) + ".hxm"); }
fs::path Layout::history(Expertise e) const { return root / "models" / (std::string(to_string(e)) + "-history.csv"); }
fs::path Layout::eval() const { return root / "eval"; }
fs::path Layout::explain() const { return root / "explain"; }
fs::path Layout::analysis() const { return root / "analysis"; }
fs::path Layout::report() const { return root / "report"; }
fs::path Layout::manifest(std::string_view stage) const { return root / "manifests" / (std::string(stage) + ".txt"); }

// ---------------------------------------------------------------- stage helpers

void write_feature_tables(std::span<const Trial> trials, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& t : trials)
    for (int h = 0; h < kNumHerders; ++h)
      features::write_hxf(dir / (t.trial_id + ".h" + std::to_string(h) + ".hxf"), features::feature_table(t, h));
}

void write_split(const dataset::Split& split, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& old : test_files(dir)) fs::remove(old);
  dataset::write_hxs(dir / "train.hxs", split.train);
  dataset::write_hxs(dir / "val.hxs", split.validation);
  for (std::size_t i = 0; i < split.tests.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "test-%02zu.hxs", i);
    dataset::write_hxs(dir / name, split.tests[i]);
  }
}

std::vector<fs::path> test_files(const fs::path& samples_dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(samples_dir)) return out;
  for (const auto& entry : fs::directory_iterator(samples_dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("test-", 0) == 0 && entry.path().extension() == ".hxs") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_history_csv(const train::History& history, std::ostream& out) {
  out << "epoch,train_loss,val_loss,val_accuracy,best\n";
  char buf[160];
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.6f,%d\n", e.epoch, e.train_loss, e.val_loss, e.val_accuracy,
                  e.epoch == history.best_epoch ? 1 : 0);
    out << buf;
  }
}

// ---------------------------------------------------------------- running

namespace {

struct Manifest {
  std::string key;
  std::vector<std::pair<std::string, std::string>> outputs;  // relative path, hash
};

std::optional<Manifest> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  Manifest m;
  std::string tag;
  while (in >> tag) {
    if (tag == "key") {
      in >> m.key;
    } else if (tag == "out") {
      std::string rel, h;
      in >> rel >> h;
      m.outputs.emplace_back(rel, h);
    } else {
      std::string rest;
      std::getline(in, rest);
    }
  }
  return m;
}

class Runner {
 public:
  Runner(const PipelineConfig& cfg, std::ostream& log)
      : cfg_(cfg), log_(log), layout_{cfg.out_dir}, threads_(thread_count(cfg.threads)), hash_(config_hash(cfg)) {}

  RunSummary run() {
    for (auto stage : kStages) {
      if (std::find(cfg_.stages.begin(), cfg_.stages.end(), stage) == cfg_.stages.end()) continue;
      run_stage(std::string(stage));
    }
    return summary_;
  }

 private:
  bool both() const { return cfg_.expertise.size() == 2; }
  std::string tag() const { return "config=" + binio::hex64(hash_) + " seed=" + std::to_string(cfg_.seed); }

  // CSV writer with the provenance comment line.
  std::ofstream csv(const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("PIPELINE_IO", "cannot write " + path.string());
    out << "# " << tag() << "\n";
    written_.push_back(path);
    return out;
  }

  std::vector<fs::path> inputs_for(const std::string& stage) const {
    std::vector<fs::path> in;
    for (auto e : cfg_.expertise) {
      if (stage == "featurize" || stage == "build-samples" || stage == "analyze") in.push_back(layout_.trials(e));
      if (stage == "train") {
        in.push_back(layout_.samples(e) / "train.hxs");
        in.push_back(layout_.samples(e) / "val.hxs");
      }
      if (stage == "eval" || stage == "explain") {
        in.push_back(layout_.model(e));
        auto tests = test_files(layout_.samples(e));
        if (tests.empty()) in.push_back(layout_.samples(e) / "test-00.hxs");
        in.insert(in.end(), tests.begin(), tests.end());
        if (stage == "explain") in.push_back(layout_.samples(e) / "train.hxs");
      }
    }
    if (stage == "report")
      for (const auto& f : report_sources()) in.push_back(f);
    return in;
  }

  std::string settings_for(const std::string& stage) const {
    std::string s = "stage=" + stage + "\nseed=" + std::to_string(cfg_.seed) + "\n";
    std::vector<std::string> e;
    for (auto x : cfg_.expertise) e.emplace_back(to_string(x));
    s += "expertise=" + join(e) + "\n";
    if (stage == "simulate") s += canonical_section(cfg_, "world") + canonical_section(cfg_, "simulate");
    if (stage == "build-samples") s += canonical_section(cfg_, "samples");
    if (stage == "train") s += canonical_section(cfg_, "train") + canonical_section(cfg_, "samples");
    if (stage == "explain") s += canonical_section(cfg_, "explain");
    if (stage == "analyze") s += canonical_section(cfg_, "world") + canonical_section(cfg_, "analyze");
    // Artifacts carry the config hash, so it is part of every key.
    s += "config=" + binio::hex64(hash_) + "\n";
    return s;
  }

  void run_stage(const std::string& stage) {
    const auto inputs = inputs_for(stage);
    for (const auto& p : inputs)
      if (!fs::exists(p))
        throw Error("PIPELINE_MISSING_INPUT", "stage " + stage + ": missing input " + p.string());
    std::string key_text = settings_for(stage);
    for (const auto& p : inputs)
      key_text += fs::relative(p, layout_.root).generic_string() + " " + binio::hex64(binio::hash_file(p)) + "\n";
    const std::string key = binio::hex64(binio::fnv1a(key_text));

    const fs::path manifest_path = layout_.manifest(stage);
    if (auto m = read_manifest(manifest_path); m && m->key == key && up_to_date(*m)) {
      log_ << "[" << stage << "] up to date\n";
      summary_.skipped.push_back(stage);
      return;
    }
    log_ << "[" << stage << "] running\n";
    log_.flush();
    written_.clear();
    if (stage == "simulate") simulate();
    else if (stage == "featurize") featurize();
    else if (stage == "build-samples") build_samples();
    else if (stage == "train") train();
    else if (stage == "eval") evaluate();
    else if (stage == "explain") explain();
    else if (stage == "analyze") analyze();
    else if (stage == "report") report();

    fs::create_directories(manifest_path.parent_path());
    std::ofstream out(manifest_path);
    out << "stage " << stage << "\nkey " << key << "\n" << "config " << binio::hex64(hash_) << "\nseed " << cfg_.seed
        << "\n";
    std::sort(written_.begin(), written_.end());
    for (const auto& p : written_)
      out << "out " << fs::relative(p, layout_.root).generic_string() << " " << binio::hex64(binio::hash_file(p))
          << "\n";
    summary_.ran.push_back(stage);
  }

  bool up_to_date(const Manifest& m) const {
    for (const auto& [rel, h] : m.outputs) {
      const fs::path p = layout_.root / rel;
      if (!fs::exists(p) || binio::hex64(binio::hash_file(p)) != h) return false;
    }
    return true;
  }

  void simulate() {
    for (auto e : cfg_.expertise) {
      sim::BatchSpec spec{e, cfg_.pairs, cfg_.trials_per_pair, stage_seed(cfg_, "simulate", e), threads_, {}};
      if (e == Expertise::expert) {
        auto p = sim::PolicyKind::expert();
        p.hysteresis = cfg_.expert_hysteresis;
        spec.policy = p;
      }
      const auto trials = sim::simulate_batch(cfg_.world, spec);
      const auto ok = std::count_if(trials.begin(), trials.end(), [](const Trial& t) { return t.success; });
      log_ << "  " << to_string(e) << ": " << trials.size() << " trials, " << ok << " successful\n";
      fs::create_directories(layout_.trials(e).parent_path());
      ingest::write_trials(layout_.trials(e), trials);
      written_.push_back(layout_.trials(e));
    }
  }

  void featurize() {
    for (auto e : cfg_.expertise) {
      const auto trials = ingest::read_trials(layout_.trials(e));
      const fs::path dir = layout_.features(e);
      if (fs::exists(dir)) fs::remove_all(dir);
      write_feature_tables(trials, dir);
      for (const auto& entry : fs::directory_iterator(dir)) written_.push_back(entry.path());
    }
  }

  void build_samples() {
    for (auto e : cfg_.expertise) {
      const auto trials = ingest::read_trials(layout_.trials(e));
      const auto pool = dataset::build_pool(trials, cfg_.stride, cfg_.horizon);
      auto split_cfg = cfg_.split;
      split_cfg.seed = stage_seed(cfg_, "build-samples", e);
      const auto split = dataset::assemble_split(pool, split_cfg);
      write_split(split, layout_.samples(e));
      const auto c = pool.subclass_counts();
      log_ << "  " << to_string(e) << ": pool " << pool.windows.size() << " windows (NT-NS " << c[0] << ", NT-S "
           << c[1] << ", T-NS " << c[2] << ", T-S " << c[3] << "), train " << split.train.samples.size()
           << ", validation " << split.validation.samples.size() << ", test sets " << split.tests.size() << "\n";
      written_.push_back(layout_.samples(e) / "train.hxs");
      written_.push_back(layout_.samples(e) / "val.hxs");
      for (const auto& t : test_files(layout_.samples(e))) written_.push_back(t);
    }
  }

  void train() {
    for (auto e : cfg_.expertise) {
      const auto tr = dataset::read_hxs(layout_.samples(e) / "train.hxs");
      const auto va = dataset::read_hxs(layout_.samples(e) / "val.hxs");
      auto model = nn::LstmModel::init(nn::Architecture::scaled(cfg_.scale), derive_seed(stage_seed(cfg_, "train", e), {0}));
      model.lstm_dropout = cfg_.lstm_dropout;
      model.inter_layer_dropout = cfg_.inter_layer_dropout;
      model.meta.expertise = e;
      model.meta.tag = tag();
      auto tc = cfg_.train;
      tc.seed = derive_seed(stage_seed(cfg_, "train", e), {1});
      tc.threads = threads_;
      const auto result = train::fit(model, tr, va, tc, {}, cfg_.split.standardize);
      const auto& h = result.history;
      log_ << "  " << to_string(e) << ": " << h.epochs.size() << " epochs, best " << h.best_epoch
           << ", val accuracy " << h.epochs[h.best_epoch - 1].val_accuracy << "\n";
      fs::create_directories(layout_.model(e).parent_path());
      train::save_checkpoint(result.model, layout_.model(e));
      auto hist = csv(layout_.history(e));
      write_history_csv(h, hist);
      written_.push_back(layout_.model(e));
    }
  }

  void evaluate() {
    std::vector<eval::ReportRow> rows;
    std::vector<std::pair<std::string, eval::ConfusionMatrix>> cms;
    std::map<Expertise, nn::LstmModel> models;
    std::map<Expertise, std::vector<dataset::SampleSet>> tests;
    for (auto e : cfg_.expertise) {
      models[e] = train::load_checkpoint(layout_.model(e));
      for (const auto& f : test_files(layout_.samples(e))) tests[e].push_back(dataset::read_hxs(f));
    }
    for (auto m : cfg_.expertise)
      for (auto d : cfg_.expertise) {
        const auto files = test_files(layout_.samples(d));
        for (std::size_t i = 0; i < files.size(); ++i) {
          const auto ev = eval::evaluate(models[m], tests[d][i], threads_);
          const std::string set = std::string(to_string(d)) + "/" + files[i].stem().string();
          rows.push_back({std::string(to_string(m)), set, ev.metrics});
          cms.emplace_back(std::string(to_string(m)) + " on " + set, ev.cm);
        }
      }
    {
      auto out = csv(layout_.eval() / "metrics.csv");
      eval::write_metrics_csv(out, rows);
    }
    {
      auto out = csv(layout_.eval() / "metrics.txt");
      eval::write_metrics_table(out, rows);
    }
    {
      auto out = csv(layout_.eval() / "confusion.csv");
      for (const auto& [name, cm] : cms) eval::write_confusion_csv(out, name, cm);
    }
    if (both()) {
      const auto table = eval::cross_evaluate(models[Expertise::expert], models[Expertise::novice],
                                              tests[Expertise::expert], tests[Expertise::novice], threads_);
      auto out = csv(layout_.eval() / "cross.csv");
      eval::write_cross_csv(out, table);
      char buf[200];
      std::snprintf(buf, sizeof buf, "  expert model: %.4f on expert, %.4f on novice; novice model: %.4f on novice, %.4f on expert\n",
                    table(Expertise::expert, Expertise::expert).mean, table(Expertise::expert, Expertise::novice).mean,
                    table(Expertise::novice, Expertise::novice).mean, table(Expertise::novice, Expertise::expert).mean);
      log_ << buf;
    }
  }

  void explain() {
    std::map<Expertise, explain::ShapReport> reports;
    for (auto e : cfg_.expertise) {
      const auto model = train::load_checkpoint(layout_.model(e));
      const auto test = dataset::read_hxs(test_files(layout_.samples(e)).front());
      const auto pool = dataset::read_hxs(layout_.samples(e) / "train.hxs");
      const std::uint64_t seed = stage_seed(cfg_, "explain", e);
      const auto background = explain::draw_background(pool.samples, cfg_.background_size, derive_seed(seed, {0}));

      // Explained samples: a seeded draw from the first test set.
      std::vector<std::size_t> idx(test.samples.size());
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng(derive_seed(seed, {1}));
      const std::size_t n = std::min(cfg_.explain_samples, idx.size());
      for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
      idx.resize(n);
      std::sort(idx.begin(), idx.end());
      std::vector<dataset::Sample> chosen;
      for (auto i : idx) chosen.push_back(test.samples[i]);

      explain::ShapConfig sc;
      sc.n_perm = cfg_.n_perm;
      sc.background_size = cfg_.background_size;
      sc.seed = derive_seed(seed, {2});
      sc.threads = threads_;
      const explain::LstmPredictor predictor(model);
      const std::string bg_id = std::string(to_string(e)) + "/train.hxs:" + std::to_string(background.size());
      auto report = explain::explain_samples(predictor, chosen, background, sc, bg_id);
      const std::string name(to_string(e));
      {
        auto out = csv(layout_.explain() / (name + "-shap.csv"));
        explain::write_shap_csv(out, report);
      }
      {
        auto out = csv(layout_.explain() / (name + "-top10.csv"));
        explain::write_top_table_csv(out, report, 10);
      }
      {
        auto out = csv(layout_.explain() / (name + "-ranking.csv"));
        out << "class,channel,feature,mean_abs_phi,mean_phi,rank\n";
        for (std::size_t k = 0; k < report.global.size(); ++k) {
          const auto& g = report.global[k];
          for (std::size_t c = 0; c < g.importance.size(); ++c) {
            char buf[128];
            std::snprintf(buf, sizeof buf, ",%.9g,%.9g,%d\n", g.importance[c], g.signed_mean[c], g.rank[c]);
            out << k << ',' << c << ',' << features::feature_name(c) << buf;
          }
        }
      }
      log_ << "  " << name << ": explained " << chosen.size() << " samples\n";
      reports.emplace(e, std::move(report));
    }
    if (both()) {
      std::vector<explain::NamedComparison> rows;
      const auto& a = reports.at(Expertise::expert).global;
      const auto& b = reports.at(Expertise::novice).global;
      for (std::size_t k = 0; k < a.size(); ++k)
        for (auto depth : cfg_.depths)
          rows.push_back({"expert-vs-novice", static_cast<int>(k), explain::kendall_tau(a[k].rank, b[k].rank, depth, cfg_.top_k)});
      auto out = csv(layout_.explain() / "kendall.csv");
      explain::write_kendall_csv(out, rows);
    }
  }

  void analyze() {
    std::vector<std::string> summary;
    for (auto e : cfg_.expertise) {
      const auto trials = ingest::read_trials(layout_.trials(e));
      const std::string name(to_string(e));
      {
        auto out = csv(layout_.analysis() / (name + "-measures.csv"));
        analysis::write_measures_csv(out, trials, cfg_.world.containment_radius);
      }
      std::vector<double> all;
      std::size_t switches = 0, skipped = 0;
      {
        auto out = csv(layout_.analysis() / (name + "-movement-times.csv"));
        out << "trial_id,duration_ms\n";
        for (const auto& t : trials) {
          if (!t.success) continue;
          const auto mt = analysis::inter_target_times(t, cfg_.world.repulsion_radius);
          switches += mt.switches;
          skipped += mt.skipped;
          for (double d : mt.durations_ms) {
            char buf[48];
            std::snprintf(buf, sizeof buf, ",%.3f\n", d);
            out << t.trial_id << buf;
            all.push_back(d);
          }
        }
      }
      {
        auto out = csv(layout_.analysis() / (name + "-histogram.csv"));
        analysis::write_histogram_csv(out, all, cfg_.bin_ms);
      }
      double mean = 0, sd = 0;
      if (!all.empty()) {
        mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
        for (double d : all) sd += (d - mean) * (d - mean);
        sd = all.size() > 1 ? std::sqrt(sd / static_cast<double>(all.size() - 1)) : 0.0;
      }
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.3f,%.3f\n", name.c_str(), switches, skipped, all.size(), mean, sd);
      summary.emplace_back(buf);
    }
    auto out = csv(layout_.analysis() / "movement-summary.csv");
    out << "expertise,switches,skipped,timed,mean_ms,sd_ms\n";
    for (const auto& s : summary) out << s;
  }

  std::vector<fs::path> report_sources() const {
    std::vector<fs::path> f{layout_.eval() / "metrics.csv", layout_.eval() / "metrics.txt", layout_.eval() / "confusion.csv",
                            layout_.analysis() / "movement-summary.csv"};
    if (both()) {
      f.push_back(layout_.eval() / "cross.csv");
      f.push_back(layout_.explain() / "kendall.csv");
    }
    for (auto e : cfg_.expertise) {
      const std::string name(to_string(e));
      f.push_back(layout_.explain() / (name + "-top10.csv"));
      f.push_back(layout_.analysis() / (name + "-histogram.csv"));
      f.push_back(layout_.analysis() / (name + "-measures.csv"));
    }
    return f;
  }

  void report() {
    const fs::path dir = layout_.report();
    fs::create_directories(dir);
    for (const auto& src : report_sources()) {
      const fs::path dst = dir / src.filename();
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
      written_.push_back(dst);
    }
    // Herding measures averaged per expertise.
    auto out = csv(dir / "measures-summary.csv");
    out << "expertise,trials,success_rate,t_g,d_g,D_g,S_g_pct,I_pct\n";
    for (auto e : cfg_.expertise) {
      const auto trials = ingest::read_trials(layout_.trials(e));
      double acc[5] = {0, 0, 0, 0, 0};
      std::size_t ok = 0;
      for (const auto& t : trials) {
        if (!t.success) continue;
        const auto m = analysis::herding_measures(t, cfg_.world.containment_radius);
        acc[0] += m.t_g, acc[1] += m.d_g, acc[2] += m.D_g, acc[3] += m.S_g_pct, acc[4] += m.I_pct;
        ++ok;
      }
      const double n = ok ? static_cast<double>(ok) : 1.0;
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s,%zu,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n", std::string(to_string(e)).c_str(),
                    trials.size(), static_cast<double>(ok) / static_cast<double>(std::max<std::size_t>(1, trials.size())),
                    acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n, acc[4] / n);
      out << buf;
    }
  }

  const PipelineConfig& cfg_;
  std::ostream& log_;
  Layout layout_;
  std::size_t threads_;
  std::uint64_t hash_;
  std::vector<fs::path> written_;
  RunSummary summary_;
};

}  // namespace

RunSummary run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  return Runner(cfg, log).run();
}

}  // namespace herdcast::pipeline
