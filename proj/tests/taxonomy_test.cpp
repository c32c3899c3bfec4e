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


#include "drift/taxonomy.hpp"

#include "gtest/gtest.h"

#include "drift/model.hpp"

namespace drift {
namespace {

TEST(TaxonomyTest, ClassifiesModelNames) {
  EXPECT_EQ(classify("layers.3.attn.wq"), ModuleClass::AttnQ);
  EXPECT_EQ(classify("layers.0.attn.wk"), ModuleClass::AttnK);
  EXPECT_EQ(classify("layers.0.attn.wv"), ModuleClass::AttnV);
  EXPECT_EQ(classify("layers.12.attn.wo"), ModuleClass::AttnO);
  EXPECT_EQ(classify("layers.1.mlp.up"), ModuleClass::MlpUp);
  EXPECT_EQ(classify("layers.1.mlp.down"), ModuleClass::MlpDown);
  EXPECT_EQ(classify("layers.1.norm1"), ModuleClass::Norm);
  EXPECT_EQ(classify("layers.1.norm2"), ModuleClass::Norm);
  EXPECT_EQ(classify("final_norm"), ModuleClass::Norm);
  EXPECT_EQ(classify("lm_head"), ModuleClass::LmHead);
  EXPECT_EQ(classify("embed.tok"), ModuleClass::Embed);
  EXPECT_EQ(classify("embed.pos"), ModuleClass::Embed);
}

TEST(TaxonomyTest, UnknownNamesAreOther) {
  EXPECT_EQ(classify("vision.patch_proj"), ModuleClass::Other);
  EXPECT_EQ(classify("layers.x.attn.wq"), ModuleClass::Other);
  EXPECT_EQ(classify("layers.1.attn.bias"), ModuleClass::Other);
  EXPECT_EQ(classify(""), ModuleClass::Other);
}

TEST(TaxonomyTest, LayerIndex) {
  EXPECT_EQ(layer_index("layers.7.mlp.up"), 7);
  EXPECT_EQ(layer_index("layers.10.norm1"), 10);
  EXPECT_FALSE(layer_index("lm_head"));
  EXPECT_FALSE(layer_index("layers.7"));
  EXPECT_FALSE(layer_index("layers..norm1"));
}

TEST(TaxonomyTest, ClassNamesRoundTrip) {
  for (int i = 0; i <= static_cast<int>(ModuleClass::Other); ++i) {
    const auto c = static_cast<ModuleClass>(i);
    EXPECT_EQ(parse_module_class(module_class_name(c)), c);
  }
  EXPECT_FALSE(parse_module_class("Attn"));
}

TEST(TaxonomyTest, CandidateCoverage) {
  const CandidateSet attn_mlp{CandidateGroup::ATTN, CandidateGroup::MLP};
  EXPECT_TRUE(attn_mlp.covers("layers.0.attn.wv"));
  EXPECT_TRUE(attn_mlp.covers("layers.0.mlp.down"));
  EXPECT_FALSE(attn_mlp.covers("layers.0.norm1"));
  EXPECT_FALSE(attn_mlp.covers("lm_head"));
  const CandidateSet all = CandidateSet::all();
  EXPECT_TRUE(all.covers("final_norm"));
  EXPECT_TRUE(all.covers("lm_head"));
  EXPECT_FALSE(all.covers("embed.tok"));
  EXPECT_FALSE(all.covers("something.else"));
}

TEST(TaxonomyTest, CandidateParse) {
  EXPECT_EQ(CandidateSet::parse("ATTN,MLP"), (CandidateSet{CandidateGroup::ATTN, CandidateGroup::MLP}));
  EXPECT_EQ(CandidateSet::parse("{attn, mlp, norm, lmhead}"), CandidateSet::all());
  EXPECT_EQ(CandidateSet::parse("MLP+Norm").to_string(), "MLP,Norm");
  EXPECT_THROW(CandidateSet::parse("ATTN,Embed"), ConfigError);
  EXPECT_TRUE(CandidateSet::parse("").empty());
}

TEST(TaxonomyTest, RestrictKeepsOrderAndMeta) {
  const Transformer m(ModelConfig{});
  ParameterSet p = m.init(1);
  p.set_role(Role::expert_vl);
  const ParameterSet r = restrict(p, CandidateSet{CandidateGroup::ATTN});
  EXPECT_EQ(r.size(), 4u * static_cast<std::size_t>(m.config().n_layers));
  EXPECT_EQ(r.role(), Role::expert_vl);
  EXPECT_EQ(r.meta(), p.meta());
  const auto names = r.names();
  EXPECT_EQ(names.front(), "layers.0.attn.wq");
  EXPECT_EQ(names.back(), "layers.1.attn.wo");
  for (const auto& [name, t] : r) EXPECT_TRUE(t.bit_equal(p.at(name)));
}

TEST(TaxonomyTest, ModelLayoutClassesCoverEverything) {
  const Transformer m(ModelConfig{});
  for (const auto& [name, shape] : m.layout()) EXPECT_NE(classify(name), ModuleClass::Other) << name;
}

}  // namespace
}  // namespace drift
