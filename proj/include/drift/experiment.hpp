// Copyright 2026 The DRIFT Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// End-to-end toy pipeline: pretrain a base on mixed R+V data, train the two
// experts, measure their divergence, then produce one model per configured
// run (SFT, DRIFT or a merge) and score it on held-out R, V and VR data.
//
// Output layout under `out_dir`:
//
//   config.json
//   seed_<s>/base.dckpt, expert_r.dckpt, expert_v.dckpt, divergence.csv
//   runs/<label>/seed_<s>/model.dckpt, result.csv, curve.csv[, train_log.csv]
//   table.csv, aggregate.csv

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "drift/checkpoint.hpp"
#include "drift/divergence.hpp"
#include "drift/error.hpp"
#include "drift/merge.hpp"
#include "drift/model.hpp"
#include "drift/tasks.hpp"
#include "drift/trainer.hpp"

namespace drift {

/// A pipeline stage failed; what() starts with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Greedy exact-match accuracy over the supervised chain of every example.
inline double eval_accuracy(const Transformer& model, const ParameterSet& p, std::span<const Example> examples) {
  if (examples.empty()) throw ConfigError("eval_accuracy: empty example list");
  std::size_t hits = 0;
  for (const auto& ex : examples) hits += model.exact_match(p, ex);
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

struct TaskSizes {
  int k_steps = 4;
  std::size_t n_pretrain = 4096;  // per task, R and V
  std::size_t n_r = 8192;
  std::size_t n_v = 8192;
  std::size_t n_vr = 256;
  std::size_t n_eval = 500;  // per task
  int pretrain_k_steps = 2;
  std::size_t n_v_vr = 128;  // VR examples mixed into the V expert's data
};

/// Expert-training knob: when `high`, both experts train for `epoch_mult`
/// times the epochs at `lr_mult` times the learning rate.
struct DivergenceKnob {
  bool high = false;
  int epoch_mult = 3;
  double lr_mult = 2.0;
};

enum class RunKind { Sft, Drift, Merge };

inline const char* run_kind_name(RunKind k) {
  switch (k) {
    case RunKind::Sft: return "SFT";
    case RunKind::Drift: return "DRIFT";
    case RunKind::Merge: return "Merge";
  }
  return "SFT";
}

struct RunSpec {
  std::string label;
  RunKind kind = RunKind::Sft;
  double alpha = -1.0;
  ScalingStrategy strategy = ScalingStrategy::GradNorm;
  CandidateSet candidates{CandidateGroup::ATTN, CandidateGroup::MLP};
  bool global_adaptive_cos = false;
  int recompute_every = 0;
  MergeConfig merge;
};

struct ExperimentConfig {
  ModelConfig model;
  TaskSizes tasks;
  TrainConfig pretrain;
  TrainConfig expert_r;
  TrainConfig expert_v;
  TrainConfig finetune;
  DivergenceKnob divergence;
  std::vector<RunSpec> runs;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::filesystem::path out_dir = "drift_out";
  int eval_every = 16;  // curve.csv sampling, in steps; 0 disables
  unsigned workers = 1;

  ExperimentConfig() {
    pretrain.lr = 1e-3;
    pretrain.epochs = 1;
    pretrain.batch = 16;
    pretrain.warmup_steps = 100;
    pretrain.cosine_decay = true;
    expert_r = pretrain;
    expert_v = pretrain;
    expert_v.lr = 2e-3;
    expert_v.epochs = 3;
  }

  void validate() const {
    model.validate();
    if (runs.empty()) throw ConfigError("config: no runs");
    if (seeds.empty()) throw ConfigError("config: no seeds");
    if (tasks.k_steps < 1 || tasks.k_steps > tokens::kMaxSteps) throw ConfigError("config: tasks.k_steps out of range");
    if (tasks.pretrain_k_steps < 1 || tasks.pretrain_k_steps > tokens::kMaxSteps) {
      throw ConfigError("config: tasks.pretrain_k_steps out of range");
    }
    if (!tasks.n_pretrain || !tasks.n_r || !tasks.n_v || !tasks.n_vr || !tasks.n_eval) {
      throw ConfigError("config: task sizes must be positive");
    }
    if (divergence.epoch_mult < 1 || !(divergence.lr_mult > 0.0)) throw ConfigError("config: bad divergence knob");
    std::set<std::string> labels;
    for (const auto& r : runs) {
      if (r.label.empty()) throw ConfigError("config: run label must not be empty");
      for (char c : r.label) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '+' ||
              c == '=')) {
          throw ConfigError("config: run label '" + r.label + "' has a character outside [A-Za-z0-9-_.+=]");
        }
      }
      if (!labels.insert(r.label).second) throw ConfigError("config: duplicate run label '" + r.label + "'");
      if (r.kind == RunKind::Drift) {
        if (!std::isfinite(r.alpha)) throw ConfigError("config: run '" + r.label + "' needs a finite alpha");
        if (r.candidates.empty()) throw ConfigError("config: run '" + r.label + "' needs candidates");
      }
      if (r.kind == RunKind::Merge && r.merge.method == MergeMethod::LayerSwap) {
        for (int l : r.merge.swap_layers) {
          if (l < 0 || l >= model.n_layers) throw ConfigError("config: run '" + r.label + "' swaps a missing layer");
        }
      }
    }
    if (workers == 0) throw ConfigError("config: workers must be positive");
  }

  TrainConfig expert_config(Task t) const {
    TrainConfig c = t == Task::R ? expert_r : expert_v;
    if (divergence.high) {
      c.epochs *= divergence.epoch_mult;
      c.lr *= divergence.lr_mult;
    }
    return c;
  }
};

/// SFT, then three strategies x five candidate sets, then the merge baselines.
inline std::vector<RunSpec> default_runs() {
  std::vector<RunSpec> out;
  RunSpec sft;
  sft.label = "SFT";
  out.push_back(sft);
  const CandidateSet sets[] = {
      {CandidateGroup::ATTN},
      {CandidateGroup::MLP},
      {CandidateGroup::ATTN, CandidateGroup::MLP},
      {CandidateGroup::ATTN, CandidateGroup::MLP, CandidateGroup::Norm},
      CandidateSet::all(),
  };
  for (auto s : {ScalingStrategy::Absolute, ScalingStrategy::GradNorm, ScalingStrategy::GradNormAdaptive}) {
    for (const auto& c : sets) {
      RunSpec r;
      r.kind = RunKind::Drift;
      r.strategy = s;
      r.candidates = c;
      std::string cs = c.to_string();
      std::replace(cs.begin(), cs.end(), ',', '+');
      r.label = std::string("DRIFT-") + strategy_name(s) + "-" + cs;
      out.push_back(r);
    }
  }
  auto merge_run = [&](const char* label, MergeMethod m) {
    RunSpec r;
    r.label = label;
    r.kind = RunKind::Merge;
    r.merge.method = m;
    return r;
  };
  out.push_back(merge_run("TaskArithmetic", MergeMethod::TaskArithmetic));
  RunSpec swap = merge_run("LayerSwap", MergeMethod::LayerSwap);
  swap.merge.swap_layers = {0};
  out.push_back(swap);
  out.push_back(merge_run("TIES", MergeMethod::Ties));
  out.push_back(merge_run("DARE-TIES", MergeMethod::DareTies));
  out.push_back(merge_run("DARE-Linear", MergeMethod::DareLinear));
  return out;
}

// ---- config file ----

namespace detail {

inline nlohmann::ordered_json train_to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"clip_norm", c.clip_norm},
          {"weight_decay", c.weight_decay},
          {"optimizer", c.optimizer == OptimizerKind::AdamW ? "AdamW" : "SGD"},
          {"max_steps", c.max_steps},
          {"warmup_steps", c.warmup_steps},
          {"cosine_decay", c.cosine_decay}};
}

inline TrainConfig train_from_json(const nlohmann::json& j, TrainConfig c) {
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("optimizer")) {
    const auto o = j.at("optimizer").get<std::string>();
    if (o == "AdamW") c.optimizer = OptimizerKind::AdamW;
    else if (o == "SGD") c.optimizer = OptimizerKind::Sgd;
    else throw ConfigError("config: unknown optimizer '" + o + "'");
  }
  c.max_steps = j.value("max_steps", c.max_steps);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.cosine_decay = j.value("cosine_decay", c.cosine_decay);
  return c;
}

inline RunKind parse_run_kind(const std::string& s) {
  for (auto k : {RunKind::Sft, RunKind::Drift, RunKind::Merge}) {
    if (s == run_kind_name(k)) return k;
  }
  throw ConfigError("config: unknown run method '" + s + "'");
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const RunSpec& r) {
  nlohmann::ordered_json j;
  j["label"] = r.label;
  j["method"] = run_kind_name(r.kind);
  if (r.kind == RunKind::Drift) {
    j["strategy"] = strategy_name(r.strategy);
    j["alpha"] = r.alpha;
    j["candidates"] = r.candidates.to_string();
    if (r.global_adaptive_cos) j["global_adaptive_cos"] = true;
    if (r.recompute_every) j["recompute_every"] = r.recompute_every;
  } else if (r.kind == RunKind::Merge) {
    j["merge"] = {{"method", merge_method_name(r.merge.method)},
                  {"beta", r.merge.beta},
                  {"density", r.merge.density},
                  {"drop_p", r.merge.drop_p},
                  {"swap_layers", r.merge.swap_layers},
                  {"seed", r.merge.seed}};
  }
  return j;
}

inline RunSpec run_from_json(const nlohmann::json& j) {
  RunSpec r;
  r.label = j.at("label").get<std::string>();
  r.kind = detail::parse_run_kind(j.at("method").get<std::string>());
  if (r.kind == RunKind::Drift) {
    r.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.alpha = j.at("alpha").get<double>();
    r.candidates = CandidateSet::parse(j.at("candidates").get<std::string>());
    r.global_adaptive_cos = j.value("global_adaptive_cos", false);
    r.recompute_every = j.value("recompute_every", 0);
  } else if (r.kind == RunKind::Merge) {
    const auto& m = j.at("merge");
    r.merge.method = parse_merge_method(m.at("method").get<std::string>());
    r.merge.beta = m.value("beta", r.merge.beta);
    r.merge.density = m.value("density", r.merge.density);
    r.merge.drop_p = m.value("drop_p", r.merge.drop_p);
    if (m.contains("swap_layers")) r.merge.swap_layers = m.at("swap_layers").get<std::set<int>>();
    r.merge.seed = m.value("seed", r.merge.seed);
  }
  return r;
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = {{"vocab", c.model.vocab},     {"d_model", c.model.d_model}, {"n_layers", c.model.n_layers},
                {"n_heads", c.model.n_heads}, {"d_ff", c.model.d_ff},       {"context", c.model.context},
                {"init_std", c.model.init_std}};
  j["tasks"] = {{"k_steps", c.tasks.k_steps}, {"n_pretrain", c.tasks.n_pretrain}, {"n_r", c.tasks.n_r},
                {"n_v", c.tasks.n_v},         {"n_vr", c.tasks.n_vr},             {"n_eval", c.tasks.n_eval},
                {"pretrain_k_steps", c.tasks.pretrain_k_steps}, {"n_v_vr", c.tasks.n_v_vr}};
  j["training"] = {{"pretrain", detail::train_to_json(c.pretrain)},
                   {"expert_r", detail::train_to_json(c.expert_r)},
                   {"expert_v", detail::train_to_json(c.expert_v)},
                   {"finetune", detail::train_to_json(c.finetune)}};
  j["divergence"] = {{"high", c.divergence.high},
                     {"epoch_mult", c.divergence.epoch_mult},
                     {"lr_mult", c.divergence.lr_mult}};
  j["seeds"] = c.seeds;
  j["out_dir"] = c.out_dir.string();
  j["eval_every"] = c.eval_every;
  j["workers"] = c.workers;
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : c.runs) j["runs"].push_back(to_json(r));
  return j;
}

/// Missing keys keep their defaults; a missing "runs" list means the
/// default grid.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.vocab = m.value("vocab", c.model.vocab);
      c.model.d_model = m.value("d_model", c.model.d_model);
      c.model.n_layers = m.value("n_layers", c.model.n_layers);
      c.model.n_heads = m.value("n_heads", c.model.n_heads);
      c.model.d_ff = m.value("d_ff", c.model.d_ff);
      c.model.context = m.value("context", c.model.context);
      c.model.init_std = m.value("init_std", c.model.init_std);
    }
    if (j.contains("tasks")) {
      const auto& t = j.at("tasks");
      c.tasks.k_steps = t.value("k_steps", c.tasks.k_steps);
      c.tasks.n_pretrain = t.value("n_pretrain", c.tasks.n_pretrain);
      c.tasks.n_r = t.value("n_r", c.tasks.n_r);
      c.tasks.n_v = t.value("n_v", c.tasks.n_v);
      c.tasks.n_vr = t.value("n_vr", c.tasks.n_vr);
      c.tasks.pretrain_k_steps = t.value("pretrain_k_steps", c.tasks.pretrain_k_steps);
      c.tasks.n_v_vr = t.value("n_v_vr", c.tasks.n_v_vr);
      c.tasks.n_eval = t.value("n_eval", c.tasks.n_eval);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      if (t.contains("pretrain")) c.pretrain = detail::train_from_json(t.at("pretrain"), c.pretrain);
      if (t.contains("expert_r")) c.expert_r = detail::train_from_json(t.at("expert_r"), c.expert_r);
      if (t.contains("expert_v")) c.expert_v = detail::train_from_json(t.at("expert_v"), c.expert_v);
      if (t.contains("finetune")) c.finetune = detail::train_from_json(t.at("finetune"), c.finetune);
    }
    if (j.contains("divergence")) {
      const auto& d = j.at("divergence");
      c.divergence.high = d.value("high", c.divergence.high);
      c.divergence.epoch_mult = d.value("epoch_mult", c.divergence.epoch_mult);
      c.divergence.lr_mult = d.value("lr_mult", c.divergence.lr_mult);
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    c.eval_every = j.value("eval_every", c.eval_every);
    c.workers = j.value("workers", c.workers);
    if (j.contains("runs")) {
      for (const auto& r : j.at("runs")) c.runs.push_back(run_from_json(r));
    } else {
      c.runs = default_runs();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << to_json(c).dump(2) << '\n';
}

// ---- report ----

struct ReportRow {
  std::string label;
  std::uint64_t seed = 0;
  double acc_r = 0.0, acc_v = 0.0, acc_vr = 0.0;
  bool operator==(const ReportRow&) const = default;
};

struct AggregateRow {
  std::string label;
  std::size_t n = 0;
  double mean_r = 0.0, std_r = 0.0, mean_v = 0.0, std_v = 0.0, mean_vr = 0.0, std_vr = 0.0;
  bool operator==(const AggregateRow&) const = default;
};

struct ReportTable {
  std::vector<ReportRow> rows;
  std::vector<AggregateRow> aggregates;

  const ReportRow* find(const std::string& label, std::uint64_t seed) const {
    for (const auto& r : rows) {
      if (r.label == label && r.seed == seed) return &r;
    }
    return nullptr;
  }
  const AggregateRow* aggregate(const std::string& label) const {
    for (const auto& a : aggregates) {
      if (a.label == label) return &a;
    }
    return nullptr;
  }
};

namespace detail {

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace detail

/// Aggregates rows per label (sample standard deviation), in first-seen order.
inline std::vector<AggregateRow> aggregate_rows(const std::vector<ReportRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ReportRow*>> by;
  for (const auto& r : rows) {
    if (!by.count(r.label)) order.push_back(r.label);
    by[r.label].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& label : order) {
    std::vector<double> r, v, vr;
    for (const auto* row : by[label]) {
      r.push_back(row->acc_r);
      v.push_back(row->acc_v);
      vr.push_back(row->acc_vr);
    }
    AggregateRow a;
    a.label = label;
    a.n = r.size();
    detail::mean_std(r, a.mean_r, a.std_r);
    detail::mean_std(v, a.mean_v, a.std_v);
    detail::mean_std(vr, a.mean_vr, a.std_vr);
    out.push_back(a);
  }
  return out;
}

inline constexpr const char* kTableHeader = "label,seed,acc_R,acc_V,acc_VR";
inline constexpr const char* kAggregateHeader =
    "label,n,acc_R_mean,acc_R_std,acc_V_mean,acc_V_std,acc_VR_mean,acc_VR_std";

inline void write_row(std::ostream& os, const ReportRow& r) {
  os << r.label << ',' << r.seed << ',' << format_double(r.acc_r) << ',' << format_double(r.acc_v) << ','
     << format_double(r.acc_vr) << '\n';
}

inline void write_table_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << kTableHeader << '\n';
  for (const auto& r : rows) write_row(f, r);
}

inline void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << kAggregateHeader << '\n';
  for (const auto& a : rows) {
    f << a.label << ',' << a.n << ',' << format_double(a.mean_r) << ',' << format_double(a.std_r) << ','
      << format_double(a.mean_v) << ',' << format_double(a.std_v) << ',' << format_double(a.mean_vr) << ','
      << format_double(a.std_vr) << '\n';
  }
}

inline std::vector<ReportRow> read_table_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(f, line) || line != kTableHeader) throw ParseError("missing table header", path.string());
  std::vector<ReportRow> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 5) throw ParseError("expected 5 columns", line);
    ReportRow r;
    r.label = c[0];
    try {
      r.seed = std::stoull(c[1]);
    } catch (const std::exception&) {
      throw ParseError("bad seed '" + c[1] + "'", line);
    }
    r.acc_r = parse_double(c[2]);
    r.acc_v = parse_double(c[3]);
    r.acc_vr = parse_double(c[4]);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- stages ----

struct SeedData {
  Dataset pretrain, r, v, vr;
  Dataset eval_r, eval_v, eval_vr;
};

inline SeedData make_seed_data(const ExperimentConfig& c, std::uint64_t seed) {
  SeedData d;
  const auto& t = c.tasks;
  d.pretrain = gen_r(t.n_pretrain, t.pretrain_k_steps, mix_seed(seed, 10), Split::train);
  const Dataset pv = gen_v(t.n_pretrain, mix_seed(seed, 11), Split::train);
  d.pretrain.insert(d.pretrain.end(), pv.begin(), pv.end());
  d.r = gen_r(t.n_r, t.k_steps, mix_seed(seed, 12), Split::train);
  d.v = gen_v(t.n_v, mix_seed(seed, 13), Split::train);
  if (t.n_v_vr > 0) {
    const Dataset extra = gen_vr(t.n_v_vr, mix_seed(seed, 15), Split::train);
    d.v.insert(d.v.end(), extra.begin(), extra.end());
  }
  d.vr = gen_vr(t.n_vr, mix_seed(seed, 14), Split::train);
  d.eval_r = gen_r(t.n_eval, t.k_steps, mix_seed(seed, 20), Split::eval);
  d.eval_v = gen_v(t.n_eval, mix_seed(seed, 21), Split::eval);
  d.eval_vr = gen_vr(t.n_eval, mix_seed(seed, 22), Split::eval);
  return d;
}

inline TrainConfig seeded(TrainConfig c, std::uint64_t seed, std::uint64_t stream) {
  c.seed = mix_seed(seed, stream);
  return c;
}

inline ParameterSet pretrain_base(const ExperimentConfig& c, const Transformer& m, std::uint64_t seed,
                                  const Dataset& mixed) {
  ParameterSet p = train_loop(m, m.init(seed), mixed, seeded(c.pretrain, seed, 30)).params;
  p.set_role(Role::base);
  p.meta()["seed"] = std::to_string(seed);
  return p;
}

inline ParameterSet train_expert(const ExperimentConfig& c, const Transformer& m, const ParameterSet& base,
                                 Task task, std::uint64_t seed, const Dataset& data) {
  ParameterSet p =
      train_loop(m, base, data, seeded(c.expert_config(task), seed, task == Task::R ? 31 : 32)).params;
  p.set_role(task == Task::R ? Role::expert_reason : Role::expert_vl);
  p.meta()["expert.task"] = task_name(task);
  p.meta()["expert.high_divergence"] = c.divergence.high ? "1" : "0";
  return p;
}

struct RunOutput {
  ParameterSet params;
  std::vector<TrainLogRow> log;
  std::vector<std::array<double, 3>> curve;  // step, loss, eval_acc
};

/// Produces the model of one run from the seed's base and experts.
inline RunOutput execute_run(const ExperimentConfig& c, const RunSpec& run, const Transformer& m,
                             const ParameterSet& base, const ParameterSet& expert_r, const ParameterSet& expert_v,
                             const Dataset& vr_train, std::span<const Example> curve_eval, std::uint64_t seed) {
  RunOutput out;
  const TrainConfig tc = seeded(c.finetune, seed, 40);
  const std::int64_t total = steps_per_epoch(vr_train.size(), tc.batch) * tc.epochs;
  StepObserver observe = [&](std::int64_t step, const ParameterSet& p) {
    if (c.eval_every <= 0 || curve_eval.empty()) return;
    if ((step + 1) % c.eval_every != 0 && step + 1 != total) return;
    out.curve.push_back({static_cast<double>(step), 0.0, eval_accuracy(m, p, curve_eval)});
  };
  switch (run.kind) {
    case RunKind::Sft: {
      auto r = sft_finetune(m, expert_v, vr_train, tc, observe);
      out.params = std::move(r.params);
      out.log = std::move(r.log);
      break;
    }
    case RunKind::Drift: {
      DriftConfig dc;
      dc.alpha = run.alpha;
      dc.strategy = run.strategy;
      dc.candidates = run.candidates;
      dc.train = tc;
      dc.global_adaptive_cos = run.global_adaptive_cos;
      dc.recompute_every = run.recompute_every;
      if (run.recompute_every > 0) dc.recompute_reference = std::make_shared<const ParameterSet>(expert_r);
      auto r = drift_finetune(m, expert_v, reasoning_vector(expert_r, expert_v, run.candidates), vr_train, dc,
                              observe);
      out.params = std::move(r.params);
      out.log = std::move(r.log);
      break;
    }
    case RunKind::Merge: {
      MergeConfig mc = run.merge;
      mc.seed = mix_seed(seed, run.merge.seed);
      out.params = merge(mc, base, expert_v, expert_r);
      break;
    }
  }
  for (auto& row : out.curve) row[1] = out.log.at(static_cast<std::size_t>(row[0])).loss;
  out.params.meta()["run.label"] = run.label;
  return out;
}

inline std::filesystem::path run_dir(const ExperimentConfig& c, const std::string& label, std::uint64_t seed) {
  return c.out_dir / "runs" / label / ("seed_" + std::to_string(seed));
}

inline std::filesystem::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return c.out_dir / ("seed_" + std::to_string(seed));
}

inline void write_curve(const std::vector<std::array<double, 3>>& curve, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << "step,loss,eval_acc\n";
  for (const auto& r : curve) {
    f << static_cast<std::int64_t>(r[0]) << ',' << format_double(r[1]) << ',' << format_double(r[2]) << '\n';
  }
}

namespace detail {

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace detail

using ProgressFn = std::function<void(const std::string&)>;

/// Runs the whole pipeline. Rows are ordered by seed, then by run order in
/// the config, independent of `workers`.
inline ReportTable run_pipeline(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  const Transformer m(cfg.model);
  auto note = [&](const std::string& s) {
    if (progress) progress(s);
  };
  detail::stage("setup", [&] {
    std::filesystem::create_directories(cfg.out_dir);
    save_config(cfg, cfg.out_dir / "config.json");
    return 0;
  });

  ReportTable table;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string sfx = " (seed " + std::to_string(seed) + ")";
    const auto sd = seed_dir(cfg, seed);
    const SeedData data = detail::stage("data" + sfx, [&] {
      std::filesystem::create_directories(sd);
      return make_seed_data(cfg, seed);
    });
    note("pretrain" + sfx);
    const ParameterSet base = detail::stage("pretrain" + sfx, [&] {
      auto p = pretrain_base(cfg, m, seed, data.pretrain);
      save_checkpoint(p, sd / "base.dckpt");
      return p;
    });
    note("expert-r" + sfx);
    const ParameterSet er = detail::stage("expert-r" + sfx, [&] {
      auto p = train_expert(cfg, m, base, Task::R, seed, data.r);
      save_checkpoint(p, sd / "expert_r.dckpt");
      return p;
    });
    note("expert-v" + sfx);
    const ParameterSet ev = detail::stage("expert-v" + sfx, [&] {
      auto p = train_expert(cfg, m, base, Task::V, seed, data.v);
      save_checkpoint(p, sd / "expert_v.dckpt");
      return p;
    });
    detail::stage("analyze" + sfx, [&] {
      emit_csv(compare(er, ev), sd / "divergence.csv");
      return 0;
    });

    std::vector<ReportRow> rows(cfg.runs.size());
    std::mutex progress_mu;
    auto work = [&](std::size_t begin, std::size_t stride) {
      for (std::size_t i = begin; i < cfg.runs.size(); i += stride) {
        const RunSpec& run = cfg.runs[i];
        rows[i] = detail::stage("run " + run.label + sfx, [&] {
          const auto dir = run_dir(cfg, run.label, seed);
          std::filesystem::create_directories(dir);
          RunOutput out = execute_run(cfg, run, m, base, er, ev, data.vr, data.eval_vr, seed);
          save_checkpoint(out.params, dir / "model.dckpt");
          if (!out.log.empty()) write_train_log(out.log, dir / "train_log.csv");
          if (!out.log.empty()) write_curve(out.curve, dir / "curve.csv");
          ReportRow row{run.label, seed, eval_accuracy(m, out.params, data.eval_r),
                        eval_accuracy(m, out.params, data.eval_v), eval_accuracy(m, out.params, data.eval_vr)};
          write_table_csv({row}, dir / "result.csv");
          return row;
        });
        std::lock_guard lock(progress_mu);
        note("run " + run.label + sfx + " done");
      }
    };
    if (cfg.workers <= 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(cfg.workers);
      for (unsigned w = 0; w < cfg.workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            work(w, cfg.workers);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  }
  table.aggregates = aggregate_rows(table.rows);
  detail::stage("report", [&] {
    write_table_csv(table.rows, cfg.out_dir / "table.csv");
    write_aggregate_csv(table.aggregates, cfg.out_dir / "aggregate.csv");
    return 0;
  });
  return table;
}

/// Rebuilds the table from the per-run result files under `out_dir`, using
/// the config saved there for row order.
inline ReportTable regenerate_table(const std::filesystem::path& out_dir) {
  ExperimentConfig cfg = load_config(out_dir / "config.json");
  cfg.out_dir = out_dir;
  ReportTable table;
  for (std::uint64_t seed : cfg.seeds) {
    for (const auto& run : cfg.runs) {
      const auto path = run_dir(cfg, run.label, seed) / "result.csv";
      if (!std::filesystem::exists(path)) {
        throw Error("missing result for run '" + run.label + "' seed " + std::to_string(seed));
      }
      const auto rows = read_table_csv(path);
      if (rows.size() != 1) throw ParseError("expected exactly one row", path.string());
      table.rows.push_back(rows[0]);
    }
  }
  table.aggregates = aggregate_rows(table.rows);
  return table;
}

}  // namespace drift
