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

// Parameter-space merging of a vision-language expert with a reasoning
// expert that share a base model, plus construction of the reasoning vector
// (reason - vl, restricted to candidate modules).
//
// Randomness contract for DARE: coordinates of tensor `name` are visited in
// row-major order drawing Rng(mix_seed(stream, fnv1a(name))).uniform() each;
// a draw below drop_p drops the coordinate. dare_drop_rescale uses
// stream = seed; the merges use mix_seed(seed, 1) for the vl expert and
// mix_seed(seed, 2) for the reasoning expert.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "drift/error.hpp"
#include "drift/parameter_set.hpp"
#include "drift/rng.hpp"
#include "drift/taxonomy.hpp"

namespace drift {

/// reason - vl over the candidate modules. Immutable once built.
class ReasoningVector {
 public:
  ReasoningVector() = default;
  ReasoningVector(NamedTensors entries, CandidateSet candidates)
      : entries_(std::move(entries)), candidates_(std::move(candidates)) {}

  const NamedTensors& entries() const noexcept { return entries_; }
  const CandidateSet& candidates() const noexcept { return candidates_; }
  const Tensor* find(const std::string& name) const { return entries_.find(name); }
  std::size_t size() const noexcept { return entries_.size(); }

  Role minuend_role() const noexcept { return Role::expert_reason; }
  Role subtrahend_role() const noexcept { return Role::expert_vl; }

 private:
  NamedTensors entries_;
  CandidateSet candidates_;
};

inline ReasoningVector reasoning_vector(const ParameterSet& reason, const ParameterSet& vl,
                                        const CandidateSet& c) {
  require_aligned(reason, vl, "reasoning_vector");
  NamedTensors out;
  for (const auto& [name, t] : reason) {
    if (c.covers(name)) out.add(name, sub(t, vl.at(name)));
  }
  return ReasoningVector(std::move(out), c);
}

/// ft - base for every tensor.
inline NamedTensors task_vector(const ParameterSet& ft, const ParameterSet& base) {
  require_aligned(ft, base, "task_vector");
  NamedTensors out;
  for (const auto& [name, t] : ft) out.add(name, sub(t, base.at(name)));
  return out;
}

namespace detail {

inline void require_three_way(const ParameterSet& base, const ParameterSet& vl, const ParameterSet& reason,
                              const char* op) {
  require_aligned(base, vl, op);
  require_aligned(base, reason, op);
}

inline void require_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ConfigError(std::string(what) + " must be in [0, 1], got " + std::to_string(v));
  }
}

inline ParameterSet merged_like(const ParameterSet& shape_source) {
  ParameterSet out(Role::merged);
  out.meta() = shape_source.meta();
  return out;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// base + beta (vl - base) + (1 - beta)(reason - base). The base terms cancel,
/// so this is evaluated as beta * vl + (1 - beta) * reason, which makes the
/// endpoints reproduce the inputs exactly.
inline ParameterSet task_arithmetic(const ParameterSet& base, const ParameterSet& vl,
                                    const ParameterSet& reason, double beta) {
  detail::require_three_way(base, vl, reason, "task_arithmetic");
  detail::require_unit(beta, "beta");
  ParameterSet out = detail::merged_like(vl);
  for (const auto& [name, tv] : vl) {
    if (beta == 1.0) {
      out.add(name, tv);
      continue;
    }
    const Tensor& tr = reason.at(name);
    if (beta == 0.0) {
      out.add(name, tr);
      continue;
    }
    Tensor t(tv.shape(), tv.dtype());
    auto o = t.data();
    auto a = tv.data();
    auto b = tr.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = beta * a[i] + (1.0 - beta) * b[i];
    out.add(name, std::move(t));
  }
  out.meta()["merge.method"] = "task_arithmetic";
  out.meta()["merge.beta"] = detail::fmt(beta);
  return out;
}

/// Every tensor of the listed decoder layers comes from `reason`, the rest
/// from `vl`.
inline ParameterSet layer_swap(const ParameterSet& vl, const ParameterSet& reason,
                               const std::set<int>& swap_layers) {
  require_aligned(vl, reason, "layer_swap");
  std::set<int> present;
  for (const auto& [name, _] : vl) {
    if (auto i = layer_index(name)) present.insert(*i);
  }
  for (int i : swap_layers) {
    if (!present.count(i)) throw ConfigError("layer_swap: unknown layer index " + std::to_string(i));
  }
  ParameterSet out = detail::merged_like(vl);
  std::string layers;
  for (int i : swap_layers) layers += (layers.empty() ? "" : ",") + std::to_string(i);
  for (const auto& [name, t] : vl) {
    const auto idx = layer_index(name);
    out.add(name, idx && swap_layers.count(*idx) ? reason.at(name) : t);
  }
  out.meta()["merge.method"] = "layer_swap";
  out.meta()["merge.swap_layers"] = layers;
  return out;
}

/// Keep mask for the top ceil(density * n) magnitudes; ties broken by index.
inline std::vector<std::uint8_t> trim_mask(std::span<const double> v, double density) {
  const std::size_t n = v.size();
  const auto k = std::min(n, static_cast<std::size_t>(std::ceil(density * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(v[a]), mb = std::abs(v[b]);
    return ma != mb ? ma > mb : a < b;
  };
  if (k < n) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  std::vector<std::uint8_t> keep(n, 0);
  for (std::size_t i = 0; i < k; ++i) keep[idx[i]] = 1;
  return keep;
}

/// TIES: trim each task vector per tensor, elect a sign per coordinate from
/// the sum of kept values, then take the beta / (1 - beta) weighted mean of
/// the kept values that agree with it. Coordinates with no agreeing value
/// (or a zero sign sum) keep the base value.
inline ParameterSet ties_merge(const ParameterSet& base, const ParameterSet& vl, const ParameterSet& reason,
                               double density, double beta) {
  detail::require_three_way(base, vl, reason, "ties_merge");
  if (!(density > 0.0 && density <= 1.0)) {
    throw ConfigError("ties_merge: density must be in (0, 1], got " + std::to_string(density));
  }
  detail::require_unit(beta, "beta");
  ParameterSet out = detail::merged_like(vl);
  const double w[2] = {beta, 1.0 - beta};
  for (const auto& [name, tb] : base) {
    const Tensor tv[2] = {sub(vl.at(name), tb), sub(reason.at(name), tb)};
    const std::vector<std::uint8_t> keep[2] = {trim_mask(tv[0].data(), density),
                                               trim_mask(tv[1].data(), density)};
    Tensor t(tb.shape(), tb.dtype());
    auto o = t.data();
    auto b = tb.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
      double kept[2];
      for (int j = 0; j < 2; ++j) kept[j] = keep[j][i] ? tv[j][i] : 0.0;
      const double sign_sum = kept[0] + kept[1];
      double num = 0.0, den = 0.0;
      if (sign_sum != 0.0) {
        for (int j = 0; j < 2; ++j) {
          if (kept[j] != 0.0 && (kept[j] > 0.0) == (sign_sum > 0.0)) {
            num += w[j] * kept[j];
            den += w[j];
          }
        }
      }
      o[i] = den != 0.0 ? b[i] + num / den : b[i];
    }
    out.add(name, std::move(t));
  }
  out.meta()["merge.method"] = "ties";
  out.meta()["merge.density"] = detail::fmt(density);
  out.meta()["merge.beta"] = detail::fmt(beta);
  return out;
}

namespace detail {

inline void require_drop(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("drop_p must be in [0, 1), got " + std::to_string(p));
}

// Applies DARE to ft - base but returns the perturbed model. Survivors of a
// drop_p == 0 pass keep their original value bit-for-bit.
inline ParameterSet dare_expert(const ParameterSet& base, const ParameterSet& ft, double drop_p,
                                std::uint64_t stream) {
  ParameterSet out(ft.role());
  out.meta() = ft.meta();
  const double keep_scale = 1.0 / (1.0 - drop_p);
  for (const auto& [name, tf] : ft) {
    if (drop_p == 0.0) {
      out.add(name, tf);
      continue;
    }
    Rng rng(mix_seed(stream, fnv1a(name)));
    Tensor t(tf.shape(), tf.dtype());
    auto o = t.data();
    auto f = tf.data();
    auto b = base.at(name).data();
    for (std::size_t i = 0; i < o.size(); ++i) {
      o[i] = rng.uniform() < drop_p ? b[i] : b[i] + (f[i] - b[i]) * keep_scale;
    }
    out.add(name, std::move(t));
  }
  return out;
}

}  // namespace detail

/// Drops each coordinate with probability drop_p and rescales survivors by
/// 1 / (1 - drop_p). Reproducible per (seed, tensor name).
inline NamedTensors dare_drop_rescale(const NamedTensors& tv, double drop_p, std::uint64_t seed) {
  detail::require_drop(drop_p);
  NamedTensors out;
  const double keep_scale = 1.0 / (1.0 - drop_p);
  for (const auto& [name, t] : tv) {
    if (drop_p == 0.0) {
      out.add(name, t);
      continue;
    }
    Rng rng(mix_seed(seed, fnv1a(name)));
    Tensor r(t.shape(), t.dtype());
    auto o = r.data();
    auto v = t.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = rng.uniform() < drop_p ? 0.0 : v[i] * keep_scale;
    out.add(name, std::move(r));
  }
  return out;
}

inline ParameterSet dare_linear(const ParameterSet& base, const ParameterSet& vl, const ParameterSet& reason,
                                double drop_p, double beta, std::uint64_t seed) {
  detail::require_three_way(base, vl, reason, "dare_linear");
  detail::require_drop(drop_p);
  ParameterSet out = task_arithmetic(base, detail::dare_expert(base, vl, drop_p, mix_seed(seed, 1)),
                                     detail::dare_expert(base, reason, drop_p, mix_seed(seed, 2)), beta);
  out.meta()["merge.method"] = "dare_linear";
  out.meta()["merge.drop_p"] = detail::fmt(drop_p);
  out.meta()["merge.seed"] = std::to_string(seed);
  return out;
}

inline ParameterSet dare_ties(const ParameterSet& base, const ParameterSet& vl, const ParameterSet& reason,
                              double drop_p, double density, double beta, std::uint64_t seed) {
  detail::require_three_way(base, vl, reason, "dare_ties");
  detail::require_drop(drop_p);
  ParameterSet out = ties_merge(base, detail::dare_expert(base, vl, drop_p, mix_seed(seed, 1)),
                                detail::dare_expert(base, reason, drop_p, mix_seed(seed, 2)), density, beta);
  out.meta()["merge.method"] = "dare_ties";
  out.meta()["merge.drop_p"] = detail::fmt(drop_p);
  out.meta()["merge.seed"] = std::to_string(seed);
  return out;
}

enum class MergeMethod { TaskArithmetic, LayerSwap, Ties, DareTies, DareLinear };

inline const char* merge_method_name(MergeMethod m) {
  switch (m) {
    case MergeMethod::TaskArithmetic: return "TaskArithmetic";
    case MergeMethod::LayerSwap: return "LayerSwap";
    case MergeMethod::Ties: return "Ties";
    case MergeMethod::DareTies: return "DareTies";
    case MergeMethod::DareLinear: return "DareLinear";
  }
  return "TaskArithmetic";
}

inline MergeMethod parse_merge_method(const std::string& s) {
  for (auto m : {MergeMethod::TaskArithmetic, MergeMethod::LayerSwap, MergeMethod::Ties, MergeMethod::DareTies,
                 MergeMethod::DareLinear}) {
    if (s == merge_method_name(m)) return m;
  }
  throw ConfigError("unknown merge method '" + s + "'");
}

struct MergeConfig {
  MergeMethod method = MergeMethod::TaskArithmetic;
  double beta = 0.5;
  double density = 0.5;
  double drop_p = 0.5;
  std::set<int> swap_layers;
  std::uint64_t seed = 0;
};

inline ParameterSet merge(const MergeConfig& cfg, const ParameterSet& base, const ParameterSet& vl,
                          const ParameterSet& reason) {
  switch (cfg.method) {
    case MergeMethod::TaskArithmetic: return task_arithmetic(base, vl, reason, cfg.beta);
    case MergeMethod::LayerSwap: return layer_swap(vl, reason, cfg.swap_layers);
    case MergeMethod::Ties: return ties_merge(base, vl, reason, cfg.density, cfg.beta);
    case MergeMethod::DareTies: return dare_ties(base, vl, reason, cfg.drop_p, cfg.density, cfg.beta, cfg.seed);
    case MergeMethod::DareLinear: return dare_linear(base, vl, reason, cfg.drop_p, cfg.beta, cfg.seed);
  }
  throw ConfigError("unhandled merge method");
}

}  // namespace drift
