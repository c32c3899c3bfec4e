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


// Scalar-loop reference merges used as test oracles. Written against plain
// vectors, independently of the library kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "drift/rng.hpp"

namespace drift::oracle {

using Vec = std::vector<double>;

inline std::vector<bool> keep_top(const Vec& v, double density) {
  const std::size_t n = v.size();
  std::size_t k = static_cast<std::size_t>(std::ceil(density * static_cast<double>(n)));
  if (k > n) k = n;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(v[a]) > std::fabs(v[b]); });
  std::vector<bool> keep(n, false);
  for (std::size_t i = 0; i < k; ++i) keep[order[i]] = true;
  return keep;
}

inline Vec ties(const Vec& base, const Vec& vl, const Vec& reason, double density, double beta) {
  const std::size_t n = base.size();
  Vec t1(n), t2(n);
  for (std::size_t i = 0; i < n; ++i) {
    t1[i] = vl[i] - base[i];
    t2[i] = reason[i] - base[i];
  }
  const auto k1 = keep_top(t1, density);
  const auto k2 = keep_top(t2, density);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = k1[i] ? t1[i] : 0.0;
    const double b = k2[i] ? t2[i] : 0.0;
    const double s = a + b;
    double num = 0.0;
    double den = 0.0;
    if (s > 0.0) {
      if (a > 0.0) { num += beta * a; den += beta; }
      if (b > 0.0) { num += (1.0 - beta) * b; den += 1.0 - beta; }
    } else if (s < 0.0) {
      if (a < 0.0) { num += beta * a; den += beta; }
      if (b < 0.0) { num += (1.0 - beta) * b; den += 1.0 - beta; }
    }
    out[i] = den == 0.0 ? base[i] : base[i] + num / den;
  }
  return out;
}

// Drop-and-rescale applied to one expert, returning the perturbed model.
inline Vec dare_model(const Vec& base, const Vec& ft, double p, std::uint64_t stream, const std::string& name) {
  Rng rng(mix_seed(stream, fnv1a(name)));
  Vec out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double u = rng.uniform();
    if (u < p) out[i] = base[i];
    else out[i] = base[i] + (ft[i] - base[i]) * (1.0 / (1.0 - p));
  }
  return out;
}

inline Vec dare_ties(const Vec& base, const Vec& vl, const Vec& reason, double p, double density, double beta,
                     std::uint64_t seed, const std::string& name) {
  return ties(base, dare_model(base, vl, p, mix_seed(seed, 1), name),
              dare_model(base, reason, p, mix_seed(seed, 2), name), density, beta);
}

}  // namespace drift::oracle
