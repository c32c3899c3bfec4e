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

// Supervised fine-tuning with optional gradient-space injection of a
// reasoning vector. For every candidate parameter the raw gradient g is
// replaced before the optimizer sees it by
//
//   g~ = g + alpha * scale(g, delta)
//
// Sign convention: with alpha = -1 and delta = reason - vl, a descent step
// on g~ moves the weights by +lr * delta (Absolute, g = 0), i.e. toward the
// reasoning expert.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drift/error.hpp"
#include "drift/divergence.hpp"
#include "drift/example.hpp"
#include "drift/merge.hpp"
#include "drift/model.hpp"
#include "drift/optim.hpp"
#include "drift/rng.hpp"
#include "drift/taxonomy.hpp"

namespace drift {

enum class ScalingStrategy { Absolute, GradNorm, GradNormAdaptive };

inline const char* strategy_name(ScalingStrategy s) {
  switch (s) {
    case ScalingStrategy::Absolute: return "Absolute";
    case ScalingStrategy::GradNorm: return "GradNorm";
    case ScalingStrategy::GradNormAdaptive: return "GradNormAdaptive";
  }
  return "GradNorm";
}

inline ScalingStrategy parse_strategy(const std::string& s) {
  for (auto v : {ScalingStrategy::Absolute, ScalingStrategy::GradNorm, ScalingStrategy::GradNormAdaptive}) {
    if (s == strategy_name(v)) return v;
  }
  throw ConfigError("unknown scaling strategy '" + s + "'");
}

/// alpha * (1 + cos) / 2.
inline double adaptive_alpha(double alpha, double cos) { return alpha * (1.0 + cos) / 2.0; }

struct InjectStats {
  double injected_norm = 0.0;
  std::optional<double> cos_g_delta;
};

/// In-place injection on one flattened tensor. `cos_override` replaces the
/// per-tensor cosine in the adaptive rule (used for the global-cosine mode).
inline InjectStats inject_inplace(std::span<double> g, std::span<const double> delta, ScalingStrategy strategy,
                                  double alpha, std::optional<double> cos_override = std::nullopt) {
  if (g.size() != delta.size()) throw ShapeError("inject: gradient and delta differ in size");
  if (!std::isfinite(alpha) || !all_finite(g) || !all_finite(delta)) {
    throw Error("inject: non-finite input");
  }
  InjectStats st;
  const double dn = l2_norm(delta);
  const double gn = l2_norm(g);
  if (dn > 0.0 && gn > 0.0) st.cos_g_delta = std::clamp(dot(g, delta) / (gn * dn), -1.0, 1.0);
  if (alpha == 0.0 || dn == 0.0) return st;

  double coef = 0.0;  // g~ = g + coef * delta
  switch (strategy) {
    case ScalingStrategy::Absolute:
      coef = alpha;
      break;
    case ScalingStrategy::GradNorm:
      if (gn == 0.0) return st;
      coef = alpha * gn / dn;
      break;
    case ScalingStrategy::GradNormAdaptive: {
      if (gn == 0.0) return st;
      const double c = cos_override ? *cos_override : *st.cos_g_delta;
      coef = adaptive_alpha(alpha, c) * gn / dn;
      break;
    }
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += coef * delta[i];
  st.injected_norm = std::abs(coef) * dn;
  return st;
}

inline Tensor inject(const Tensor& g, const Tensor& delta, ScalingStrategy strategy, double alpha) {
  if (g.shape() != delta.shape()) {
    throw ShapeError("inject: shape mismatch " + shape_string(g.shape()) + " vs " + shape_string(delta.shape()));
  }
  Tensor out = g;
  inject_inplace(out.data(), delta.data(), strategy, alpha);
  return out;
}

enum class OptimizerKind { AdamW, Sgd };

struct TrainConfig {
  double lr = 3e-4;
  int epochs = 3;
  int batch = 8;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;  // global-norm clip after injection; <= 0 disables
  double weight_decay = 0.0;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  std::int64_t max_steps = 0;  // 0: run all epochs
  std::int64_t warmup_steps = 0;  // linear warmup from 0
  bool cosine_decay = false;      // decay to 10% of lr over the run
};

/// Learning rate at `step` of a run of `total` steps.
inline double scheduled_lr(const TrainConfig& cfg, std::int64_t step, std::int64_t total) {
  double lr = cfg.lr;
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    lr *= static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  } else if (cfg.cosine_decay && total > cfg.warmup_steps) {
    const double t = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(total - cfg.warmup_steps);
    lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }
  return lr;
}

struct DriftConfig {
  double alpha = -1.0;
  ScalingStrategy strategy = ScalingStrategy::GradNorm;
  CandidateSet candidates{CandidateGroup::ATTN, CandidateGroup::MLP};
  TrainConfig train;

  // Ablation flags, off by default.
  bool global_adaptive_cos = false;  // adaptive rule uses one cosine over all candidates
  int recompute_every = 0;           // > 0: rebuild delta as reason - current every k steps
  std::shared_ptr<const ParameterSet> recompute_reference;  // the reasoning expert, for recompute_every

  void validate() const {
    if (!std::isfinite(alpha)) throw ConfigError("drift: alpha must be finite");
    if (candidates.empty()) throw ConfigError("drift: candidate set must not be empty");
    if (recompute_every > 0 && !recompute_reference) {
      throw ConfigError("drift: recompute_every needs the reasoning expert as reference");
    }
  }
};

struct TrainLogRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double injected_norm_mean = 0.0;
  std::optional<double> cos_g_delta_mean;
};

struct FinetuneResult {
  ParameterSet params;
  std::vector<TrainLogRow> log;
};

/// Called on the raw gradients of each step, before clipping and the
/// optimizer update.
using GradientHook = std::function<void(std::int64_t step, const ParameterSet& params, GradientSet& grads,
                                        TrainLogRow& row)>;

/// Called after each optimizer update with the step index and new weights.
using StepObserver = std::function<void(std::int64_t step, const ParameterSet& params)>;

inline std::int64_t steps_per_epoch(std::size_t n, int batch) {
  return static_cast<std::int64_t>((n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

/// Minibatch training loop shared by SFT, DRIFT and expert training.
/// Data order is a per-epoch shuffle seeded by (cfg.seed, epoch).
inline FinetuneResult train_loop(const Transformer& model, const ParameterSet& init, const Dataset& data,
                                 const TrainConfig& cfg, const GradientHook& hook = {},
                                 const StepObserver& observe = {}) {
  if (cfg.batch <= 0 || cfg.epochs < 0) throw ConfigError("train: batch must be positive, epochs non-negative");
  FinetuneResult res;
  res.params = init;
  if (data.empty()) return res;

  AdamWState state;
  AdamWHyper hyper;
  hyper.lr = cfg.lr;
  hyper.weight_decay = cfg.weight_decay;

  std::vector<std::size_t> order(data.size());
  std::int64_t total = steps_per_epoch(data.size(), cfg.batch) * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) return res;
      Dataset batch;
      for (std::size_t i = b; i < std::min(order.size(), b + static_cast<std::size_t>(cfg.batch)); ++i) {
        batch.push_back(data[order[i]]);
      }
      LossAndGrads lg = model.accumulate(res.params, batch);
      TrainLogRow row;
      row.step = step;
      row.loss = lg.loss;
      if (hook) hook(step, res.params, lg.grads, row);
      if (cfg.clip_norm > 0.0) {
        const double n = lg.grads.global_norm();
        if (n > cfg.clip_norm) {
          const double s = cfg.clip_norm / n;
          for (auto& [_, t] : lg.grads) {
            for (double& v : t.data()) v *= s;
          }
        }
      }
      hyper.lr = scheduled_lr(cfg, step, total);
      if (cfg.optimizer == OptimizerKind::AdamW) {
        adamw_step(res.params, lg.grads, state, hyper);
      } else {
        sgd_step(res.params, lg.grads, hyper.lr);
      }
      res.log.push_back(row);
      if (observe) observe(step, res.params);
      ++step;
    }
  }
  return res;
}

/// Plain supervised fine-tuning.
inline FinetuneResult sft_finetune(const Transformer& model, const ParameterSet& vl, const Dataset& data,
                                   const TrainConfig& cfg, const StepObserver& observe = {}) {
  FinetuneResult r = train_loop(model, vl, data, cfg, {}, observe);
  r.params.set_role(Role::snapshot);
  r.params.meta()["train.method"] = "sft";
  r.params.meta()["train.seed"] = std::to_string(cfg.seed);
  return r;
}

/// Fine-tuning with the reasoning vector injected into the gradients of
/// every parameter it covers. The vector is read-only and shared; it is
/// consulted per parameter at update time.
inline FinetuneResult drift_finetune(const Transformer& model, const ParameterSet& vl,
                                     std::shared_ptr<const ReasoningVector> delta, const Dataset& data,
                                     const DriftConfig& cfg, const StepObserver& observe = {}) {
  cfg.validate();
  if (!delta) throw ConfigError("drift: reasoning vector is null");
  for (const auto& [name, t] : delta->entries()) {
    const Tensor* p = vl.find(name);
    if (!p) throw AlignmentError("drift: reasoning vector entry '" + name + "' is not a model parameter");
    if (p->shape() != t.shape()) throw AlignmentError("drift: reasoning vector entry '" + name + "' has wrong shape");
    if (!cfg.candidates.covers(name)) {
      throw AlignmentError("drift: reasoning vector entry '" + name + "' is outside the candidate set");
    }
  }

  std::shared_ptr<const ReasoningVector> current = delta;
  GradientHook hook = [&](std::int64_t step, const ParameterSet& params, GradientSet& grads, TrainLogRow& row) {
    if (cfg.recompute_every > 0 && step > 0 && step % cfg.recompute_every == 0) {
      current = std::make_shared<const ReasoningVector>(
          reasoning_vector(*cfg.recompute_reference, params, cfg.candidates));
    }
    std::optional<double> global_cos;
    if (cfg.global_adaptive_cos && cfg.strategy == ScalingStrategy::GradNormAdaptive) {
      double gd = 0.0, gg = 0.0, dd = 0.0;
      for (const auto& [name, d] : current->entries()) {
        auto g = grads.at(name).data();
        gd += dot(g, d.data());
        gg += dot(g, g);
        dd += dot(d.data(), d.data());
      }
      if (gg > 0.0 && dd > 0.0) global_cos = std::clamp(gd / std::sqrt(gg * dd), -1.0, 1.0);
    }
    double inj_sum = 0.0, cos_sum = 0.0;
    std::size_t cos_n = 0;
    for (const auto& [name, d] : current->entries()) {
      const auto st = inject_inplace(grads.at(name).data(), d.data(), cfg.strategy, cfg.alpha, global_cos);
      inj_sum += st.injected_norm;
      if (st.cos_g_delta) {
        cos_sum += *st.cos_g_delta;
        ++cos_n;
      }
    }
    if (current->size()) row.injected_norm_mean = inj_sum / static_cast<double>(current->size());
    if (cos_n) row.cos_g_delta_mean = cos_sum / static_cast<double>(cos_n);
  };

  FinetuneResult r = train_loop(model, vl, data, cfg.train, hook, observe);
  r.params.set_role(Role::snapshot);
  auto& meta = r.params.meta();
  meta["train.method"] = "drift";
  meta["train.seed"] = std::to_string(cfg.train.seed);
  meta["drift.strategy"] = strategy_name(cfg.strategy);
  meta["drift.alpha"] = detail::fmt(cfg.alpha);
  meta["drift.candidates"] = cfg.candidates.to_string();
  return r;
}

inline FinetuneResult drift_finetune(const Transformer& model, const ParameterSet& vl, const ReasoningVector& delta,
                                     const Dataset& data, const DriftConfig& cfg, const StepObserver& observe = {}) {
  return drift_finetune(model, vl, std::make_shared<const ReasoningVector>(delta), data, cfg, observe);
}

inline void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << "step,loss,injected_norm_mean,cos_g_delta_mean\n";
  for (const auto& r : log) {
    f << r.step << ',' << format_double(r.loss) << ',' << format_double(r.injected_norm_mean) << ',';
    if (r.cos_g_delta_mean) f << format_double(*r.cos_g_delta_mean);
    f << '\n';
  }
}

}  // namespace drift
