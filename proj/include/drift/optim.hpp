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

#pragma once

#include <cmath>
#include <cstdint>

#include "drift/parameter_set.hpp"

namespace drift {

struct AdamWHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::int64_t step = 0;
  GradientSet m;
  GradientSet v;
};

/// One decoupled-weight-decay Adam update, in place.
inline void adamw_step(ParameterSet& p, const GradientSet& g, AdamWState& state, const AdamWHyper& h) {
  require_aligned(p, g, "adamw_step");
  if (state.m.empty()) {
    state.m = GradientSet::zeros_like(p);
    state.v = GradientSet::zeros_like(p);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t e = 0; e < p.size(); ++e) {
    auto w = p.entry(e).second.data();
    const auto& name = p.entry(e).first;
    auto gr = g.at(name).data();
    auto m = state.m.at(name).data();
    auto v = state.v.at(name).data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gr[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gr[i] * gr[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= h.lr * (mhat / (std::sqrt(vhat) + h.eps) + h.weight_decay * w[i]);
    }
  }
}

/// Plain gradient descent, w <- w - lr * g.
inline void sgd_step(ParameterSet& p, const GradientSet& g, double lr) {
  require_aligned(p, g, "sgd_step");
  for (std::size_t e = 0; e < p.size(); ++e) {
    auto w = p.entry(e).second.data();
    auto gr = g.at(p.entry(e).first).data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gr[i];
  }
}

}  // namespace drift
