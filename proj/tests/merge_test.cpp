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


#include "drift/merge.hpp"

#include <cmath>

#include "gtest/gtest.h"

#include "drift/model.hpp"
#include "merge_oracle.hpp"
#include "test_util.hpp"

namespace drift {
namespace {

struct Triple {
  ParameterSet base, vl, reason;
};

Triple random_triple(Rng& rng) {
  Triple t;
  t.base = testing::random_parameter_set(rng);
  t.vl = testing::random_like(rng, t.base);
  t.reason = testing::random_like(rng, t.base);
  t.vl.set_role(Role::expert_vl);
  t.reason.set_role(Role::expert_reason);
  return t;
}

// Ten-element vectors; some draws come from a small integer grid so that
// magnitude ties, zeros and sign conflicts all occur.
oracle::Vec instance_vector(Rng& rng) {
  oracle::Vec v(10);
  const bool grid = rng.below(2) == 0;
  for (double& x : v) x = grid ? static_cast<double>(static_cast<int>(rng.below(7)) - 3) : 4.0 * rng.uniform() - 2.0;
  return v;
}

ParameterSet single(const std::string& name, const oracle::Vec& v) {
  ParameterSet p;
  p.add(name, Tensor({v.size()}, v));
  return p;
}

TEST(TaskArithmeticTest, EndpointsReturnInputsExactly) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Triple t = random_triple(rng);
    EXPECT_TRUE(task_arithmetic(t.base, t.vl, t.reason, 1.0).NamedTensors::bit_equal(t.vl));
    EXPECT_TRUE(task_arithmetic(t.base, t.vl, t.reason, 0.0).NamedTensors::bit_equal(t.reason));
  }
}

TEST(TaskArithmeticTest, MatchesTaskVectorForm) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Triple t = random_triple(rng);
    const double beta = rng.uniform();
    const ParameterSet m = task_arithmetic(t.base, t.vl, t.reason, beta);
    for (const auto& [name, tb] : t.base) {
      for (std::size_t i = 0; i < tb.numel(); ++i) {
        const double b = tb[i];
        double want = b + beta * (t.vl.at(name)[i] - b) + (1.0 - beta) * (t.reason.at(name)[i] - b);
        if (tb.dtype() == DType::f32) want = static_cast<float>(want);
        EXPECT_NEAR(m.at(name)[i], want, 1e-5 * std::max(1.0, std::abs(want)));
      }
    }
  }
}

TEST(TaskArithmeticTest, HalfwayAndMeta) {
  const ParameterSet base = single("lm_head", {0, 0});
  const ParameterSet m = task_arithmetic(base, single("lm_head", {2, 4}), single("lm_head", {4, 0}), 0.5);
  EXPECT_EQ(m.at("lm_head")[0], 3.0);
  EXPECT_EQ(m.at("lm_head")[1], 2.0);
  EXPECT_EQ(m.role(), Role::merged);
  EXPECT_EQ(m.meta().at("merge.method"), "task_arithmetic");
  EXPECT_EQ(m.meta().at("merge.beta"), "0.5");
}

TEST(TaskArithmeticTest, RejectsBadInput) {
  const ParameterSet a = single("x", {1, 2});
  EXPECT_THROW(task_arithmetic(a, a, a, 1.5), ConfigError);
  EXPECT_THROW(task_arithmetic(a, a, a, -0.1), ConfigError);
  EXPECT_THROW(task_arithmetic(a, a, single("x", {1, 2, 3}), 0.5), AlignmentError);
  EXPECT_THROW(task_arithmetic(a, a, single("y", {1, 2}), 0.5), AlignmentError);
}

TEST(LayerSwapTest, SwapsWholeLayers) {
  ModelConfig cfg;
  cfg.n_layers = 3;
  const Transformer m(cfg);
  const ParameterSet vl = m.init(1), reason = m.init(2);
  const ParameterSet out = layer_swap(vl, reason, {1});
  std::size_t from_reason = 0;
  for (const auto& [name, t] : out) {
    const bool swapped = layer_index(name) == 1;
    EXPECT_TRUE(t.bit_equal(swapped ? reason.at(name) : vl.at(name))) << name;
    from_reason += swapped;
  }
  EXPECT_EQ(from_reason, 8u);
  EXPECT_EQ(out.meta().at("merge.swap_layers"), "1");
}

TEST(LayerSwapTest, EmptySwapIsVl) {
  const Transformer m(ModelConfig{});
  const ParameterSet vl = m.init(1), reason = m.init(2);
  EXPECT_TRUE(layer_swap(vl, reason, {}).NamedTensors::bit_equal(vl));
  EXPECT_THROW(layer_swap(vl, reason, {5}), ConfigError);
}

TEST(TiesTest, TrimKeepsTopMagnitudes) {
  const std::vector<double> v = {0.1, -3, 2, -0.5, 2};
  const auto keep = trim_mask(v, 0.5);
  EXPECT_EQ(keep, (std::vector<std::uint8_t>{0, 1, 1, 0, 1}));
  EXPECT_EQ(trim_mask(v, 0.2), (std::vector<std::uint8_t>{0, 1, 0, 0, 0}));
  EXPECT_EQ(trim_mask(v, 1.0), (std::vector<std::uint8_t>{1, 1, 1, 1, 1}));
}

TEST(TiesTest, HandExample) {
  const ParameterSet base = single("w", {0, 0, 0, 0});
  const ParameterSet vl = single("w", {1, -2, 3, 0});
  const ParameterSet reason = single("w", {3, 1, -1, 0});
  const ParameterSet m = ties_merge(base, vl, reason, 1.0, 0.5);
  EXPECT_EQ(m.at("w")[0], 2.0);
  EXPECT_EQ(m.at("w")[1], -2.0);
  EXPECT_EQ(m.at("w")[2], 3.0);
  EXPECT_EQ(m.at("w")[3], 0.0);
}

TEST(TiesTest, MatchesScalarOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = instance_vector(rng), v = instance_vector(rng), r = instance_vector(rng);
    const double density = 0.1 * static_cast<double>(1 + rng.below(10));
    const double beta = rng.below(3) == 0 ? 0.5 : rng.uniform();
    const auto want = oracle::ties(b, v, r, density, beta);
    const ParameterSet got = ties_merge(single("w", b), single("w", v), single("w", r), density, beta);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(got.at("w")[i], want[i]) << "trial " << trial << " i " << i;
  }
}

TEST(TiesTest, RejectsBadDensity) {
  const ParameterSet a = single("x", {1});
  EXPECT_THROW(ties_merge(a, a, a, 0.0, 0.5), ConfigError);
  EXPECT_THROW(ties_merge(a, a, a, 1.5, 0.5), ConfigError);
}

TEST(DareTest, ZeroDropIsIdentity) {
  Rng rng(4);
  const NamedTensors tv = testing::random_parameter_set(rng);
  EXPECT_TRUE(dare_drop_rescale(tv, 0.0, 9).bit_equal(tv));
}

TEST(DareTest, DropsOrRescales) {
  NamedTensors tv;
  tv.add("w", Tensor({1000}, std::vector<double>(1000, 1.5)));
  const NamedTensors out = dare_drop_rescale(tv, 0.25, 7);
  std::size_t dropped = 0;
  for (double x : out.at("w").data()) {
    if (x == 0.0) ++dropped;
    else EXPECT_EQ(x, 1.5 * (1.0 / 0.75));
  }
  EXPECT_GT(dropped, 180u);
  EXPECT_LT(dropped, 320u);
}

TEST(DareTest, ReproduciblePerSeed) {
  Rng rng(5);
  const NamedTensors tv = testing::random_parameter_set(rng);
  EXPECT_TRUE(dare_drop_rescale(tv, 0.5, 11).bit_equal(dare_drop_rescale(tv, 0.5, 11)));
  EXPECT_FALSE(dare_drop_rescale(tv, 0.5, 11).bit_equal(dare_drop_rescale(tv, 0.5, 12)));
  EXPECT_THROW(dare_drop_rescale(tv, 1.0, 1), ConfigError);
}

TEST(DareTest, UnbiasedPerCoordinate) {
  const double p = 0.3;
  NamedTensors tv;
  tv.add("w", Tensor::vector({1.0, -2.0, 0.5, 3.0, -0.25, 0.0, 1.75, -1.0, 2.5, 0.1}));
  const auto& orig = tv.at("w");
  const int n = 10000;
  std::vector<double> sum(orig.numel(), 0.0);
  for (int s = 0; s < n; ++s) {
    const auto out = dare_drop_rescale(tv, p, static_cast<std::uint64_t>(s));
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += out.at("w")[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double se = std::abs(orig[i]) * std::sqrt(p / (1.0 - p)) / std::sqrt(static_cast<double>(n));
    EXPECT_LE(std::abs(sum[i] / n - orig[i]), 3.0 * se) << "coordinate " << i;
  }
}

TEST(DareTiesTest, MatchesScalarOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = instance_vector(rng), v = instance_vector(rng), r = instance_vector(rng);
    const double p = 0.1 + 0.8 * rng.uniform();
    const double density = 0.1 * static_cast<double>(1 + rng.below(10));
    const double beta = rng.uniform();
    const std::uint64_t seed = rng.below(1u << 20);
    const auto want = oracle::dare_ties(b, v, r, p, density, beta, seed, "layers.0.mlp.up");
    const ParameterSet got = dare_ties(single("layers.0.mlp.up", b), single("layers.0.mlp.up", v),
                                       single("layers.0.mlp.up", r), p, density, beta, seed);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(got.at("layers.0.mlp.up")[i], want[i]) << "trial " << trial;
  }
}

TEST(DareLinearTest, ZeroDropIsTaskArithmetic) {
  Rng rng(7);
  const Triple t = random_triple(rng);
  EXPECT_TRUE(dare_linear(t.base, t.vl, t.reason, 0.0, 0.3, 1)
                  .NamedTensors::bit_equal(task_arithmetic(t.base, t.vl, t.reason, 0.3)));
}

TEST(MergeDispatchTest, RecordsMethod) {
  Rng rng(8);
  const Triple t = random_triple(rng);
  for (auto method : {MergeMethod::TaskArithmetic, MergeMethod::Ties, MergeMethod::DareTies,
                      MergeMethod::DareLinear}) {
    MergeConfig cfg;
    cfg.method = method;
    const ParameterSet m = merge(cfg, t.base, t.vl, t.reason);
    EXPECT_EQ(m.role(), Role::merged);
    EXPECT_TRUE(m.meta().count("merge.method"));
    EXPECT_TRUE(aligned(m, t.base));
  }
  EXPECT_EQ(parse_merge_method("DareTies"), MergeMethod::DareTies);
  EXPECT_THROW(parse_merge_method("Soup"), ConfigError);
}

TEST(ReasoningVectorTest, DifferenceOverCandidates) {
  const Transformer m(ModelConfig{});
  const ParameterSet vl = m.init(1), reason = m.init(2);
  const CandidateSet c{CandidateGroup::MLP};
  const ReasoningVector d = reasoning_vector(reason, vl, c);
  EXPECT_EQ(d.size(), 2u * static_cast<std::size_t>(m.config().n_layers));
  for (const auto& [name, t] : d.entries()) {
    EXPECT_TRUE(c.covers(name));
    EXPECT_TRUE(t.bit_equal(sub(reason.at(name), vl.at(name))));
  }
  EXPECT_EQ(d.candidates(), c);
}

}  // namespace
}  // namespace drift
