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


// drift: command-line front end for the toolkit.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drift/drift.hpp"

namespace {

using namespace drift;

Task require_task(const std::string& s) {
  const auto t = parse_task(s);
  if (!t) throw ConfigError("unknown task '" + s + "' (expected R, V or VR)");
  return *t;
}

Split split_arg(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "eval") return Split::eval;
  if (s == "any") return Split::any;
  throw ConfigError("unknown split '" + s + "' (expected train, eval or any)");
}

ExperimentConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    ExperimentConfig c;
    c.runs = default_runs();
    return c;
  }
  return load_config(path);
}

Dataset data_or_generated(const std::string& path, Task task, std::size_t n, std::uint64_t seed, Split split,
                          int k_steps) {
  if (!path.empty()) return load_jsonl(path);
  return generate(task, n, seed, split, k_steps);
}

ParameterSet with_model_meta(ParameterSet p, const ModelConfig& mc) {
  mc.write_meta(p.meta());
  return p;
}

TrainConfig with_seed(TrainConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directional reasoning injection toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 1;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as JSONL");
  std::string gen_task = "VR", gen_split = "train", gen_out;
  std::size_t gen_n = 256;
  int gen_k = 4;
  gen->add_option("--task", gen_task, "R, V or VR");
  gen->add_option("-n,--count", gen_n, "Number of examples");
  gen->add_option("--seed", seed);
  gen->add_option("--split", gen_split, "train, eval or any");
  gen->add_option("--k-steps", gen_k, "Addends per R example");
  gen->add_option("-o,--out", gen_out)->required();

  // train-base
  auto* base_cmd = app.add_subcommand("train-base", "Initialise and pretrain a base model on mixed R+V data");
  std::string base_out, base_data;
  base_cmd->add_option("-c,--config", config_path);
  base_cmd->add_option("--seed", seed);
  base_cmd->add_option("--data", base_data, "JSONL pretraining data (default: generated)");
  base_cmd->add_option("-o,--out", base_out)->required();

  // finetune-expert
  auto* expert_cmd = app.add_subcommand("finetune-expert", "Train an R or V expert from a base checkpoint");
  std::string expert_task = "R", expert_base, expert_out, expert_data;
  expert_cmd->add_option("-c,--config", config_path);
  expert_cmd->add_option("--task", expert_task, "R or V")->required();
  expert_cmd->add_option("--base", expert_base)->required();
  expert_cmd->add_option("--seed", seed);
  expert_cmd->add_option("--data", expert_data, "JSONL training data (default: generated)");
  expert_cmd->add_option("-o,--out", expert_out)->required();

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Per-tensor divergence report between two checkpoints");
  std::string an_a, an_b, an_base, an_out;
  unsigned an_workers = 1;
  analyze_cmd->add_option("a", an_a)->required();
  analyze_cmd->add_option("b", an_b)->required();
  analyze_cmd->add_option("--base", an_base, "Compare task vectors against this base");
  analyze_cmd->add_option("--workers", an_workers);
  analyze_cmd->add_option("-o,--out", an_out, "CSV path (default: stdout)");

  // merge
  auto* merge_cmd = app.add_subcommand("merge", "Parameter-space merge of two experts");
  std::string m_method = "TaskArithmetic", m_base, m_vl, m_reason, m_out;
  MergeConfig mcfg;
  std::vector<int> m_layers;
  merge_cmd->add_option("--method", m_method, "TaskArithmetic, LayerSwap, TIES, DARE-TIES or DARE-Linear");
  merge_cmd->add_option("--base", m_base);
  merge_cmd->add_option("--vl", m_vl)->required();
  merge_cmd->add_option("--reason", m_reason)->required();
  merge_cmd->add_option("--beta", mcfg.beta);
  merge_cmd->add_option("--density", mcfg.density);
  merge_cmd->add_option("--drop-p", mcfg.drop_p);
  merge_cmd->add_option("--swap-layers", m_layers)->delimiter(',');
  merge_cmd->add_option("--seed", mcfg.seed);
  merge_cmd->add_option("-o,--out", m_out)->required();

  // drift-train
  auto* drift_cmd = app.add_subcommand("drift-train", "Fine-tune expert-V on VR data with reasoning injection");
  std::string d_vl, d_reason, d_data, d_out, d_log, d_strategy = "GradNorm", d_candidates = "ATTN,MLP";
  double d_alpha = -1.0;
  bool d_sft = false;
  drift_cmd->add_option("-c,--config", config_path);
  drift_cmd->add_option("--vl", d_vl)->required();
  drift_cmd->add_option("--reason", d_reason);
  drift_cmd->add_option("--data", d_data, "JSONL VR data (default: generated)");
  drift_cmd->add_option("--strategy", d_strategy, "Absolute, GradNorm or GradNormAdaptive");
  drift_cmd->add_option("--alpha", d_alpha);
  drift_cmd->add_option("--candidates", d_candidates, "Comma list of ATTN, MLP, Norm, LmHead");
  drift_cmd->add_flag("--sft", d_sft, "Plain supervised fine-tuning, no injection");
  drift_cmd->add_option("--seed", seed);
  drift_cmd->add_option("--log", d_log, "Training log CSV");
  drift_cmd->add_option("-o,--out", d_out)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Exact-match accuracy of a checkpoint");
  std::string e_model, e_data, e_task = "VR";
  std::size_t e_n = 500;
  int e_k = 4;
  eval_cmd->add_option("model", e_model)->required();
  eval_cmd->add_option("--task", e_task, "R, V or VR");
  eval_cmd->add_option("--data", e_data, "JSONL data (default: generated eval split)");
  eval_cmd->add_option("-n,--count", e_n);
  eval_cmd->add_option("--k-steps", e_k);
  eval_cmd->add_option("--seed", seed);

  // report
  auto* report_cmd = app.add_subcommand("report", "Run the full pipeline, or rebuild tables from a finished run");
  std::string r_regen, r_out;
  unsigned r_workers = 0;
  bool r_high = false;
  report_cmd->add_option("-c,--config", config_path);
  report_cmd->add_option("--out-dir", r_out, "Override the output directory");
  report_cmd->add_option("--workers", r_workers, "Override the worker count");
  report_cmd->add_flag("--high-divergence", r_high, "Enable the high-divergence expert knob");
  report_cmd->add_option("--regenerate", r_regen, "Rebuild table.csv and aggregate.csv from this output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const Task t = require_task(gen_task);
      save_jsonl(generate(t, gen_n, seed, split_arg(gen_split), gen_k), gen_out);
    } else if (*base_cmd) {
      const auto cfg = config_or_default(config_path);
      const Transformer m(cfg.model);
      const Dataset data = base_data.empty() ? make_seed_data(cfg, seed).pretrain : load_jsonl(base_data);
      save_checkpoint(with_model_meta(pretrain_base(cfg, m, seed, data), cfg.model), base_out);
    } else if (*expert_cmd) {
      const auto cfg = config_or_default(config_path);
      const Task t = require_task(expert_task);
      if (t == Task::VR) throw ConfigError("experts are trained on R or V, not VR");
      const ParameterSet base = load_checkpoint(expert_base);
      const Transformer m(ModelConfig::from_meta(base.meta()));
      Dataset data;
      if (!expert_data.empty()) data = load_jsonl(expert_data);
      else data = t == Task::R ? make_seed_data(cfg, seed).r : make_seed_data(cfg, seed).v;
      save_checkpoint(train_expert(cfg, m, base, t, seed, data), expert_out);
    } else if (*analyze_cmd) {
      const ParameterSet a = load_checkpoint(an_a), b = load_checkpoint(an_b);
      std::optional<ParameterSet> base;
      CompareOptions opt;
      opt.workers = an_workers;
      if (!an_base.empty()) {
        base = load_checkpoint(an_base);
        opt.base = &*base;
      }
      const auto report = compare(a, b, opt);
      if (an_out.empty()) write_divergence_csv(report, std::cout);
      else emit_csv(report, an_out);
      for (const auto& [group, s] : report.aggregates) {
        std::cerr << group << ": n=" << s.count << " mean_l2_diff=" << format_double(s.mean_l2_diff) << '\n';
      }
    } else if (*merge_cmd) {
      mcfg.method = parse_merge_method(m_method);
      mcfg.swap_layers.insert(m_layers.begin(), m_layers.end());
      const ParameterSet vl = load_checkpoint(m_vl), reason = load_checkpoint(m_reason);
      if (m_base.empty() && mcfg.method != MergeMethod::LayerSwap) {
        throw ConfigError("--base is required for method " + m_method);
      }
      const ParameterSet base = m_base.empty() ? vl : load_checkpoint(m_base);
      save_checkpoint(merge(mcfg, base, vl, reason), m_out);
    } else if (*drift_cmd) {
      const auto cfg = config_or_default(config_path);
      const ParameterSet vl = load_checkpoint(d_vl);
      const Transformer m(ModelConfig::from_meta(vl.meta()));
      const Dataset data = d_data.empty() ? make_seed_data(cfg, seed).vr : load_jsonl(d_data);
      const TrainConfig tc = with_seed(cfg.finetune, mix_seed(seed, 40));
      FinetuneResult r;
      if (d_sft) {
        r = sft_finetune(m, vl, data, tc);
      } else {
        if (d_reason.empty()) throw ConfigError("--reason is required unless --sft is given");
        DriftConfig dc;
        dc.alpha = d_alpha;
        dc.strategy = parse_strategy(d_strategy);
        dc.candidates = CandidateSet::parse(d_candidates);
        dc.train = tc;
        const ParameterSet reason = load_checkpoint(d_reason);
        r = drift_finetune(m, vl, reasoning_vector(reason, vl, dc.candidates), data, dc);
      }
      save_checkpoint(with_model_meta(std::move(r.params), m.config()), d_out);
      if (!d_log.empty()) write_train_log(r.log, d_log);
    } else if (*eval_cmd) {
      const ParameterSet p = load_checkpoint(e_model);
      const Transformer m(ModelConfig::from_meta(p.meta()));
      const Dataset data = data_or_generated(e_data, require_task(e_task), e_n, seed, Split::eval, e_k);
      std::printf("%s\n", format_double(eval_accuracy(m, p, data)).c_str());
    } else if (*report_cmd) {
      ReportTable table;
      std::filesystem::path out;
      if (!r_regen.empty()) {
        out = r_regen;
        table = regenerate_table(out);
      } else {
        auto cfg = config_or_default(config_path);
        if (!r_out.empty()) cfg.out_dir = r_out;
        if (r_workers) cfg.workers = r_workers;
        if (r_high) cfg.divergence.high = true;
        out = cfg.out_dir;
        table = run_pipeline(cfg, [](const std::string& s) { std::cerr << s << '\n'; });
      }
      write_table_csv(table.rows, out / "table.csv");
      write_aggregate_csv(table.aggregates, out / "aggregate.csv");
      std::cout << kAggregateHeader << '\n';
      std::ifstream agg(out / "aggregate.csv");
      std::string line;
      std::getline(agg, line);
      while (std::getline(agg, line)) std::cout << line << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
