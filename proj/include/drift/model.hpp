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

// Decoder-only transformer with hand-written reverse-mode gradients.
//
// Layout per layer (pre-norm, scale-only RMS normalization, no biases):
//
//   h   = x + Attn(RMS(x) * norm1) Wo
//   out = h + GELU(RMS(h) * norm2 Wup) Wdown
//
// followed by RMS(out) * final_norm and an untied lm_head. Every weight
// matrix is stored [in x out] and applied as x * W.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drift/error.hpp"
#include "drift/example.hpp"
#include "drift/parameter_set.hpp"
#include "drift/rng.hpp"
#include "drift/tensor.hpp"

namespace drift {

struct ModelConfig {
  int vocab = 32;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int context = 64;
  double init_std = 0.02;

  void validate() const {
    if (vocab <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || context <= 0) {
      throw ConfigError("model config: all sizes must be positive");
    }
    if (d_model % n_heads != 0) throw ConfigError("model config: d_model must be divisible by n_heads");
  }

  void write_meta(std::map<std::string, std::string>& meta) const {
    meta["model.vocab"] = std::to_string(vocab);
    meta["model.d_model"] = std::to_string(d_model);
    meta["model.n_layers"] = std::to_string(n_layers);
    meta["model.n_heads"] = std::to_string(n_heads);
    meta["model.d_ff"] = std::to_string(d_ff);
    meta["model.context"] = std::to_string(context);
  }

  static ModelConfig from_meta(const std::map<std::string, std::string>& meta) {
    ModelConfig c;
    auto get = [&](const char* key, int& out) {
      if (auto it = meta.find(key); it != meta.end()) out = std::stoi(it->second);
    };
    get("model.vocab", c.vocab);
    get("model.d_model", c.d_model);
    get("model.n_layers", c.n_layers);
    get("model.n_heads", c.n_heads);
    get("model.d_ff", c.d_ff);
    get("model.context", c.context);
    c.validate();
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

struct LossAndGrads {
  double loss = 0.0;
  std::size_t supervised = 0;
  GradientSet grads;
};

namespace detail {

// y[T x out] = x[T x in] * W[in x out]
inline void linear_fwd(const double* x, const double* w, double* y, int T, int in, int out) {
  std::fill(y, y + static_cast<std::size_t>(T) * out, 0.0);
  for (int t = 0; t < T; ++t) {
    double* yr = y + static_cast<std::size_t>(t) * out;
    const double* xr = x + static_cast<std::size_t>(t) * in;
    for (int i = 0; i < in; ++i) {
      const double a = xr[i];
      const double* wr = w + static_cast<std::size_t>(i) * out;
      for (int j = 0; j < out; ++j) yr[j] += a * wr[j];
    }
  }
}

// dW += x^T dy ; dx (+)= dy W^T
inline void linear_bwd(const double* x, const double* w, const double* dy, double* dw, double* dx,
                       int T, int in, int out, bool accumulate_dx) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * in;
    const double* dyr = dy + static_cast<std::size_t>(t) * out;
    double* dxr = dx + static_cast<std::size_t>(t) * in;
    for (int i = 0; i < in; ++i) {
      const double a = xr[i];
      double* dwr = dw + static_cast<std::size_t>(i) * out;
      const double* wr = w + static_cast<std::size_t>(i) * out;
      double s = 0.0;
      for (int j = 0; j < out; ++j) {
        dwr[j] += a * dyr[j];
        s += dyr[j] * wr[j];
      }
      dxr[i] = accumulate_dx ? dxr[i] + s : s;
    }
  }
}

inline constexpr double kRmsEps = 1e-5;

inline void rms_fwd(const double* x, const double* g, double* y, double* rinv, int T, int d) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * d;
    double ss = 0.0;
    for (int i = 0; i < d; ++i) ss += xr[i] * xr[i];
    const double r = 1.0 / std::sqrt(ss / d + kRmsEps);
    rinv[t] = r;
    double* yr = y + static_cast<std::size_t>(t) * d;
    for (int i = 0; i < d; ++i) yr[i] = xr[i] * r * g[i];
  }
}

// dx += d(RMS(x) * g)/dx applied to dy ; dg += ...
inline void rms_bwd(const double* x, const double* g, const double* rinv, const double* dy,
                    double* dx, double* dg, int T, int d) {
  for (int t = 0; t < T; ++t) {
    const double* xr = x + static_cast<std::size_t>(t) * d;
    const double* dyr = dy + static_cast<std::size_t>(t) * d;
    double* dxr = dx + static_cast<std::size_t>(t) * d;
    const double r = rinv[t];
    double proj = 0.0;
    for (int i = 0; i < d; ++i) {
      dg[i] += dyr[i] * xr[i] * r;
      proj += g[i] * dyr[i] * xr[i];
    }
    const double c = r * r * r * proj / d;
    for (int i = 0; i < d; ++i) dxr[i] += r * g[i] * dyr[i] - c * xr[i];
  }
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u)));
}

inline double gelu_grad(double u) {
  const double inner = kGeluC * (u + 0.044715 * u * u * u);
  const double th = std::tanh(inner);
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

}  // namespace detail

/// The toy transformer. Stateless apart from its configuration; parameters
/// are always passed in as a ParameterSet.
class Transformer {
 public:
  explicit Transformer(ModelConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const ModelConfig& config() const noexcept { return cfg_; }

  /// Parameter names and shapes in canonical order.
  std::vector<std::pair<std::string, Shape>> layout() const {
    const auto V = static_cast<std::size_t>(cfg_.vocab), D = static_cast<std::size_t>(cfg_.d_model),
               F = static_cast<std::size_t>(cfg_.d_ff), C = static_cast<std::size_t>(cfg_.context);
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("embed.tok", Shape{V, D});
    out.emplace_back("embed.pos", Shape{C, D});
    for (int l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      out.emplace_back(p + "norm1", Shape{D});
      out.emplace_back(p + "attn.wq", Shape{D, D});
      out.emplace_back(p + "attn.wk", Shape{D, D});
      out.emplace_back(p + "attn.wv", Shape{D, D});
      out.emplace_back(p + "attn.wo", Shape{D, D});
      out.emplace_back(p + "norm2", Shape{D});
      out.emplace_back(p + "mlp.up", Shape{D, F});
      out.emplace_back(p + "mlp.down", Shape{F, D});
    }
    out.emplace_back("final_norm", Shape{D});
    out.emplace_back("lm_head", Shape{D, V});
    return out;
  }

  /// Normal(0, init_std) weights, unit norm scales; deterministic per seed.
  ParameterSet init(std::uint64_t seed) const {
    ParameterSet p(Role::base);
    Rng rng(seed);
    for (auto& [name, shape] : layout()) {
      Tensor t(shape);
      const bool is_norm = shape.size() == 1;
      for (double& v : t.data()) v = is_norm ? 1.0 : cfg_.init_std * rng.normal();
      p.add(name, std::move(t));
    }
    cfg_.write_meta(p.meta());
    p.meta()["seed"] = std::to_string(seed);
    return p;
  }

  /// Logits [len x vocab] for one sequence.
  Tensor forward(const ParameterSet& p, std::span<const int> tokens) const {
    const View w = bind(p);
    check_tokens(tokens);
    Workspace ws(cfg_, static_cast<int>(tokens.size()));
    run_forward(w, tokens, ws);
    return Tensor({tokens.size(), static_cast<std::size_t>(cfg_.vocab)}, ws.logits);
  }

  /// Mean cross-entropy over supervised positions and its exact gradient.
  /// Throws when no position is supervised.
  LossAndGrads loss_and_grads(const ParameterSet& p, std::span<const int> tokens,
                              std::span<const std::uint8_t> mask) const {
    Example ex;
    ex.tokens.assign(tokens.begin(), tokens.end());
    ex.mask.assign(mask.begin(), mask.end());
    return loss_and_grads(p, std::span<const Example>(&ex, 1));
  }

  LossAndGrads loss_and_grads(const ParameterSet& p, std::span<const Example> batch) const {
    LossAndGrads out = accumulate(p, batch);
    if (out.supervised == 0) throw Error("loss_and_grads: no supervised positions in batch");
    return out;
  }

  /// Like loss_and_grads, but a batch without supervised positions yields
  /// loss 0 and all-zero gradients instead of an error.
  LossAndGrads accumulate(const ParameterSet& p, std::span<const Example> batch) const {
    const View w = bind(p);
    LossAndGrads out;
    out.grads = GradientSet::zeros_like(p);
    GradView gw = bind_grads(out.grads);

    for (const auto& ex : batch) {
      if (ex.mask.size() != ex.tokens.size()) throw Error("example mask length differs from token length");
      for (std::size_t t = 0; t < ex.mask.size(); ++t) {
        if (ex.mask[t] && t == 0) throw Error("position 0 cannot be supervised");
        out.supervised += ex.mask[t] != 0;
      }
    }
    if (out.supervised == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(out.supervised);

    for (const auto& ex : batch) {
      if (ex.supervised() == 0) continue;
      check_tokens(ex.tokens);
      Workspace ws(cfg_, static_cast<int>(ex.tokens.size()));
      run_forward(w, ex.tokens, ws);
      out.loss += run_backward(w, gw, ex, ws, inv_n);
    }
    return out;
  }

  /// True when argmax decoding reproduces every supervised token.
  bool exact_match(const ParameterSet& p, const Example& ex) const {
    const Tensor logits = forward(p, ex.tokens);
    const int V = cfg_.vocab;
    for (std::size_t t = 1; t < ex.tokens.size(); ++t) {
      if (!ex.mask[t]) continue;
      const double* row = logits.data().data() + (t - 1) * V;
      const int pred = static_cast<int>(std::max_element(row, row + V) - row);
      if (pred != ex.tokens[t]) return false;
    }
    return true;
  }

 private:
  struct LayerView {
    const double *norm1, *wq, *wk, *wv, *wo, *norm2, *up, *down;
  };
  struct View {
    const double *tok, *pos, *final_norm, *lm_head;
    std::vector<LayerView> layers;
  };
  struct LayerGrad {
    double *norm1, *wq, *wk, *wv, *wo, *norm2, *up, *down;
  };
  struct GradView {
    double *tok, *pos, *final_norm, *lm_head;
    std::vector<LayerGrad> layers;
  };

  struct LayerCache {
    std::vector<double> x_in, n1, r1, q, k, v, att, o, x_mid, n2, r2, u, ge;
  };

  struct Workspace {
    Workspace(const ModelConfig& c, int T) : T(T) {
      const std::size_t td = static_cast<std::size_t>(T) * c.d_model;
      const std::size_t tf = static_cast<std::size_t>(T) * c.d_ff;
      layers.resize(c.n_layers);
      for (auto& L : layers) {
        L.x_in.resize(td); L.n1.resize(td); L.r1.resize(T); L.q.resize(td); L.k.resize(td);
        L.v.resize(td); L.att.resize(static_cast<std::size_t>(c.n_heads) * T * T); L.o.resize(td);
        L.x_mid.resize(td); L.n2.resize(td); L.r2.resize(T); L.u.resize(tf); L.ge.resize(tf);
      }
      x_out.resize(td); nf.resize(td); rf.resize(T);
      logits.resize(static_cast<std::size_t>(T) * c.vocab);
    }
    int T;
    std::vector<LayerCache> layers;
    std::vector<double> x_out, nf, rf, logits;
  };

  const double* ptr(const ParameterSet& p, const std::string& name, const Shape& shape) const {
    const Tensor* t = p.find(name);
    if (!t) throw AlignmentError("model parameter '" + name + "' missing");
    if (t->shape() != shape) {
      throw AlignmentError("model parameter '" + name + "' has shape " + shape_string(t->shape()) +
                           ", expected " + shape_string(shape));
    }
    return t->data().data();
  }

  View bind(const ParameterSet& p) const {
    const auto lay = layout();
    if (p.size() != lay.size()) {
      throw AlignmentError("parameter set has " + std::to_string(p.size()) + " tensors, model expects " +
                           std::to_string(lay.size()));
    }
    std::size_t i = 0;
    auto next = [&]() { const auto& [n, s] = lay[i++]; return ptr(p, n, s); };
    View v;
    v.tok = next();
    v.pos = next();
    v.layers.resize(cfg_.n_layers);
    for (auto& L : v.layers) {
      L.norm1 = next(); L.wq = next(); L.wk = next(); L.wv = next();
      L.wo = next(); L.norm2 = next(); L.up = next(); L.down = next();
    }
    v.final_norm = next();
    v.lm_head = next();
    return v;
  }

  GradView bind_grads(GradientSet& g) const {
    const auto lay = layout();
    std::size_t i = 0;
    auto next = [&]() { return g.at(lay[i++].first).data().data(); };
    GradView v;
    v.tok = next();
    v.pos = next();
    v.layers.resize(cfg_.n_layers);
    for (auto& L : v.layers) {
      L.norm1 = next(); L.wq = next(); L.wk = next(); L.wv = next();
      L.wo = next(); L.norm2 = next(); L.up = next(); L.down = next();
    }
    v.final_norm = next();
    v.lm_head = next();
    return v;
  }

  void check_tokens(std::span<const int> tokens) const {
    if (tokens.empty()) throw Error("forward: empty token sequence");
    if (tokens.size() > static_cast<std::size_t>(cfg_.context)) {
      throw Error("forward: sequence length " + std::to_string(tokens.size()) + " exceeds context " +
                  std::to_string(cfg_.context));
    }
    for (int t : tokens) {
      if (t < 0 || t >= cfg_.vocab) throw Error("forward: token id " + std::to_string(t) + " outside vocab");
    }
  }

  void run_forward(const View& w, std::span<const int> tokens, Workspace& ws) const {
    const int T = ws.T, D = cfg_.d_model, H = cfg_.n_heads, hd = D / H, F = cfg_.d_ff;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<double> x(static_cast<std::size_t>(T) * D);
    for (int t = 0; t < T; ++t) {
      const double* te = w.tok + static_cast<std::size_t>(tokens[t]) * D;
      const double* pe = w.pos + static_cast<std::size_t>(t) * D;
      for (int i = 0; i < D; ++i) x[static_cast<std::size_t>(t) * D + i] = te[i] + pe[i];
    }

    for (int l = 0; l < cfg_.n_layers; ++l) {
      const LayerView& L = w.layers[l];
      LayerCache& c = ws.layers[l];
      c.x_in = x;
      detail::rms_fwd(c.x_in.data(), L.norm1, c.n1.data(), c.r1.data(), T, D);
      detail::linear_fwd(c.n1.data(), L.wq, c.q.data(), T, D, D);
      detail::linear_fwd(c.n1.data(), L.wk, c.k.data(), T, D, D);
      detail::linear_fwd(c.n1.data(), L.wv, c.v.data(), T, D, D);

      std::fill(c.o.begin(), c.o.end(), 0.0);
      for (int h = 0; h < H; ++h) {
        double* P = c.att.data() + static_cast<std::size_t>(h) * T * T;
        for (int t = 0; t < T; ++t) {
          const double* qt = c.q.data() + static_cast<std::size_t>(t) * D + h * hd;
          double mx = -INFINITY;
          for (int s = 0; s <= t; ++s) {
            const double* ks = c.k.data() + static_cast<std::size_t>(s) * D + h * hd;
            double a = 0.0;
            for (int e = 0; e < hd; ++e) a += qt[e] * ks[e];
            a *= inv_sqrt;
            P[t * T + s] = a;
            mx = std::max(mx, a);
          }
          double z = 0.0;
          for (int s = 0; s <= t; ++s) {
            P[t * T + s] = std::exp(P[t * T + s] - mx);
            z += P[t * T + s];
          }
          double* ot = c.o.data() + static_cast<std::size_t>(t) * D + h * hd;
          for (int s = 0; s <= t; ++s) {
            P[t * T + s] /= z;
            const double* vs = c.v.data() + static_cast<std::size_t>(s) * D + h * hd;
            for (int e = 0; e < hd; ++e) ot[e] += P[t * T + s] * vs[e];
          }
          for (int s = t + 1; s < T; ++s) P[t * T + s] = 0.0;
        }
      }

      std::vector<double> a(static_cast<std::size_t>(T) * D);
      detail::linear_fwd(c.o.data(), L.wo, a.data(), T, D, D);
      c.x_mid = c.x_in;
      for (std::size_t i = 0; i < a.size(); ++i) c.x_mid[i] += a[i];

      detail::rms_fwd(c.x_mid.data(), L.norm2, c.n2.data(), c.r2.data(), T, D);
      detail::linear_fwd(c.n2.data(), L.up, c.u.data(), T, D, F);
      for (std::size_t i = 0; i < c.u.size(); ++i) c.ge[i] = detail::gelu(c.u[i]);
      std::vector<double> m(static_cast<std::size_t>(T) * D);
      detail::linear_fwd(c.ge.data(), L.down, m.data(), T, F, D);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.x_mid[i] + m[i];
    }
    ws.x_out = x;
    detail::rms_fwd(ws.x_out.data(), w.final_norm, ws.nf.data(), ws.rf.data(), T, D);
    detail::linear_fwd(ws.nf.data(), w.lm_head, ws.logits.data(), T, D, cfg_.vocab);
  }

  // Returns this example's contribution to the (batch-mean) loss.
  double run_backward(const View& w, GradView& g, const Example& ex, Workspace& ws, double inv_n) const {
    const int T = ws.T, D = cfg_.d_model, H = cfg_.n_heads, hd = D / H, F = cfg_.d_ff, V = cfg_.vocab;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    double loss = 0.0;
    std::vector<double> dlogits(static_cast<std::size_t>(T) * V, 0.0);
    for (int t = 1; t < T; ++t) {
      if (!ex.mask[t]) continue;
      const double* row = ws.logits.data() + static_cast<std::size_t>(t - 1) * V;
      double* drow = dlogits.data() + static_cast<std::size_t>(t - 1) * V;
      const double mx = *std::max_element(row, row + V);
      double z = 0.0;
      for (int j = 0; j < V; ++j) z += std::exp(row[j] - mx);
      const double logz = mx + std::log(z);
      loss += (logz - row[ex.tokens[t]]) * inv_n;
      for (int j = 0; j < V; ++j) drow[j] = std::exp(row[j] - logz) * inv_n;
      drow[ex.tokens[t]] -= inv_n;
    }

    std::vector<double> dnf(static_cast<std::size_t>(T) * D);
    detail::linear_bwd(ws.nf.data(), w.lm_head, dlogits.data(), g.lm_head, dnf.data(), T, D, V, false);
    std::vector<double> dx(static_cast<std::size_t>(T) * D, 0.0);
    detail::rms_bwd(ws.x_out.data(), w.final_norm, ws.rf.data(), dnf.data(), dx.data(), g.final_norm, T, D);

    std::vector<double> dge(static_cast<std::size_t>(T) * F), dn(static_cast<std::size_t>(T) * D);
    std::vector<double> dq(static_cast<std::size_t>(T) * D), dk(dq.size()), dv(dq.size()), dO(dq.size());
    std::vector<double> dP(static_cast<std::size_t>(T));

    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
      const LayerView& L = w.layers[l];
      LayerGrad& G = g.layers[l];
      const LayerCache& c = ws.layers[l];

      // MLP branch: dx is the gradient w.r.t. the layer output.
      detail::linear_bwd(c.ge.data(), L.down, dx.data(), G.down, dge.data(), T, F, D, false);
      for (std::size_t i = 0; i < dge.size(); ++i) dge[i] *= detail::gelu_grad(c.u[i]);
      detail::linear_bwd(c.n2.data(), L.up, dge.data(), G.up, dn.data(), T, D, F, false);
      detail::rms_bwd(c.x_mid.data(), L.norm2, c.r2.data(), dn.data(), dx.data(), G.norm2, T, D);

      // Attention branch: dx now holds the gradient w.r.t. x_mid.
      detail::linear_bwd(c.o.data(), L.wo, dx.data(), G.wo, dO.data(), T, D, D, false);
      std::fill(dq.begin(), dq.end(), 0.0);
      std::fill(dk.begin(), dk.end(), 0.0);
      std::fill(dv.begin(), dv.end(), 0.0);
      for (int h = 0; h < H; ++h) {
        const double* P = c.att.data() + static_cast<std::size_t>(h) * T * T;
        for (int t = 0; t < T; ++t) {
          const double* dot_ = dO.data() + static_cast<std::size_t>(t) * D + h * hd;
          double acc = 0.0;
          for (int s = 0; s <= t; ++s) {
            const double* vs = c.v.data() + static_cast<std::size_t>(s) * D + h * hd;
            double* dvs = dv.data() + static_cast<std::size_t>(s) * D + h * hd;
            const double p = P[t * T + s];
            double d = 0.0;
            for (int e = 0; e < hd; ++e) {
              d += dot_[e] * vs[e];
              dvs[e] += p * dot_[e];
            }
            dP[s] = d;
            acc += p * d;
          }
          const double* qt = c.q.data() + static_cast<std::size_t>(t) * D + h * hd;
          double* dqt = dq.data() + static_cast<std::size_t>(t) * D + h * hd;
          for (int s = 0; s <= t; ++s) {
            const double ds = P[t * T + s] * (dP[s] - acc) * inv_sqrt;
            const double* ks = c.k.data() + static_cast<std::size_t>(s) * D + h * hd;
            double* dks = dk.data() + static_cast<std::size_t>(s) * D + h * hd;
            for (int e = 0; e < hd; ++e) {
              dqt[e] += ds * ks[e];
              dks[e] += ds * qt[e];
            }
          }
        }
      }
      detail::linear_bwd(c.n1.data(), L.wq, dq.data(), G.wq, dn.data(), T, D, D, false);
      detail::linear_bwd(c.n1.data(), L.wk, dk.data(), G.wk, dn.data(), T, D, D, true);
      detail::linear_bwd(c.n1.data(), L.wv, dv.data(), G.wv, dn.data(), T, D, D, true);
      detail::rms_bwd(c.x_in.data(), L.norm1, c.r1.data(), dn.data(), dx.data(), G.norm1, T, D);
    }

    for (int t = 0; t < T; ++t) {
      double* te = g.tok + static_cast<std::size_t>(ex.tokens[t]) * D;
      double* pe = g.pos + static_cast<std::size_t>(t) * D;
      const double* d = dx.data() + static_cast<std::size_t>(t) * D;
      for (int i = 0; i < D; ++i) {
        te[i] += d[i];
        pe[i] += d[i];
      }
    }
    return loss;
  }

  ModelConfig cfg_;
};

}  // namespace drift
