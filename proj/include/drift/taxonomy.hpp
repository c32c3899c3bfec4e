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

// Parameter-name taxonomy. Names follow a fixed convention:
//
//   embed.tok, embed.pos
//   layers.<i>.attn.{wq,wk,wv,wo}
//   layers.<i>.mlp.{up,down}
//   layers.<i>.{norm1,norm2}
//   final_norm
//   lm_head
//
// Anything else classifies as Other.

#pragma once

#include <cctype>
#include <charconv>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "drift/error.hpp"
#include "drift/parameter_set.hpp"

namespace drift {

enum class ModuleClass { AttnQ, AttnK, AttnV, AttnO, MlpUp, MlpDown, Norm, LmHead, Embed, Other };

inline const char* module_class_name(ModuleClass c) {
  switch (c) {
    case ModuleClass::AttnQ: return "AttnQ";
    case ModuleClass::AttnK: return "AttnK";
    case ModuleClass::AttnV: return "AttnV";
    case ModuleClass::AttnO: return "AttnO";
    case ModuleClass::MlpUp: return "MlpUp";
    case ModuleClass::MlpDown: return "MlpDown";
    case ModuleClass::Norm: return "Norm";
    case ModuleClass::LmHead: return "LmHead";
    case ModuleClass::Embed: return "Embed";
    case ModuleClass::Other: return "Other";
  }
  return "Other";
}

inline std::optional<ModuleClass> parse_module_class(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(ModuleClass::Other); ++i) {
    auto c = static_cast<ModuleClass>(i);
    if (s == module_class_name(c)) return c;
  }
  return std::nullopt;
}

/// Decoder layer index for `layers.<i>.*` names.
inline std::optional<int> layer_index(std::string_view name) {
  constexpr std::string_view prefix = "layers.";
  if (!name.starts_with(prefix)) return std::nullopt;
  name.remove_prefix(prefix.size());
  int idx = 0;
  auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), idx);
  if (ec != std::errc{} || ptr == name.data() || idx < 0) return std::nullopt;
  if (ptr == name.data() + name.size() || *ptr != '.') return std::nullopt;
  return idx;
}

inline ModuleClass classify(std::string_view name) {
  if (name == "embed.tok" || name == "embed.pos") return ModuleClass::Embed;
  if (name == "final_norm") return ModuleClass::Norm;
  if (name == "lm_head") return ModuleClass::LmHead;
  if (!layer_index(name)) return ModuleClass::Other;
  const auto rest = name.substr(name.find('.', 7) + 1);
  if (rest == "attn.wq") return ModuleClass::AttnQ;
  if (rest == "attn.wk") return ModuleClass::AttnK;
  if (rest == "attn.wv") return ModuleClass::AttnV;
  if (rest == "attn.wo") return ModuleClass::AttnO;
  if (rest == "mlp.up") return ModuleClass::MlpUp;
  if (rest == "mlp.down") return ModuleClass::MlpDown;
  if (rest == "norm1" || rest == "norm2") return ModuleClass::Norm;
  return ModuleClass::Other;
}

/// Merge-candidate groups. ATTN covers the four attention projections, MLP
/// the two feed-forward projections. Embed and Other are never candidates.
enum class CandidateGroup { ATTN, MLP, Norm, LmHead };

inline const char* candidate_group_name(CandidateGroup g) {
  switch (g) {
    case CandidateGroup::ATTN: return "ATTN";
    case CandidateGroup::MLP: return "MLP";
    case CandidateGroup::Norm: return "Norm";
    case CandidateGroup::LmHead: return "LmHead";
  }
  return "ATTN";
}

class CandidateSet {
 public:
  CandidateSet() = default;
  CandidateSet(std::initializer_list<CandidateGroup> groups) : groups_(groups) {}

  static CandidateSet all() {
    return {CandidateGroup::ATTN, CandidateGroup::MLP, CandidateGroup::Norm,
            CandidateGroup::LmHead};
  }

  /// Parses "ATTN,MLP,Norm" style lists (case-insensitive, '+' also accepted).
  static CandidateSet parse(std::string_view text) {
    CandidateSet out;
    std::string tok;
    auto flush = [&] {
      if (tok.empty()) return;
      std::string up;
      for (char ch : tok) up += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      if (up == "ATTN") out.groups_.insert(CandidateGroup::ATTN);
      else if (up == "MLP") out.groups_.insert(CandidateGroup::MLP);
      else if (up == "NORM") out.groups_.insert(CandidateGroup::Norm);
      else if (up == "LMHEAD" || up == "LM_HEAD") out.groups_.insert(CandidateGroup::LmHead);
      else throw ConfigError("unknown candidate group '" + tok + "'");
      tok.clear();
    };
    for (char ch : text) {
      if (ch == ',' || ch == '+' || ch == ' ' || ch == '{' || ch == '}') flush();
      else tok += ch;
    }
    flush();
    return out;
  }

  bool empty() const noexcept { return groups_.empty(); }
  const std::set<CandidateGroup>& groups() const noexcept { return groups_; }

  bool covers(ModuleClass c) const {
    switch (c) {
      case ModuleClass::AttnQ:
      case ModuleClass::AttnK:
      case ModuleClass::AttnV:
      case ModuleClass::AttnO: return groups_.count(CandidateGroup::ATTN) != 0;
      case ModuleClass::MlpUp:
      case ModuleClass::MlpDown: return groups_.count(CandidateGroup::MLP) != 0;
      case ModuleClass::Norm: return groups_.count(CandidateGroup::Norm) != 0;
      case ModuleClass::LmHead: return groups_.count(CandidateGroup::LmHead) != 0;
      case ModuleClass::Embed:
      case ModuleClass::Other: return false;
    }
    return false;
  }

  bool covers(std::string_view name) const { return covers(classify(name)); }

  std::string to_string() const {
    std::string s;
    for (CandidateGroup g : groups_) s += (s.empty() ? "" : ",") + std::string(candidate_group_name(g));
    return s;
  }

  bool operator==(const CandidateSet&) const = default;

 private:
  std::set<CandidateGroup> groups_;
};

/// Subset of `p` whose names classify into `c`; order, role and meta kept.
inline ParameterSet restrict(const ParameterSet& p, const CandidateSet& c) {
  ParameterSet out(p.role());
  out.meta() = p.meta();
  for (const auto& [name, t] : p) {
    if (c.covers(name)) out.add(name, t);
  }
  return out;
}

}  // namespace drift
