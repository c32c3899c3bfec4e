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

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drift/error.hpp"
#include "drift/tensor.hpp"

namespace drift {

/// Ordered name -> Tensor map. Iteration follows insertion order.
class NamedTensors {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor t) {
    if (index_.count(name)) throw Error("duplicate tensor name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }
  Tensor* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

  const Tensor& at(const std::string& name) const {
    if (const Tensor* t = find(name)) return *t;
    throw Error("no tensor named '" + name + "'");
  }
  Tensor& at(const std::string& name) {
    if (Tensor* t = find(name)) return *t;
    throw Error("no tensor named '" + name + "'");
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Entry& entry(std::size_t i) { return entries_[i]; }

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [n, _] : entries_) out.push_back(n);
    return out;
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
  }

  bool bit_equal(const NamedTensors& o) const {
    if (size() != o.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].first != o.entries_[i].first) return false;
      if (!entries_[i].second.bit_equal(o.entries_[i].second)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Role { base, expert_reason, expert_vl, merged, snapshot };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::base: return "base";
    case Role::expert_reason: return "expert-reason";
    case Role::expert_vl: return "expert-vl";
    case Role::merged: return "merged";
    case Role::snapshot: return "snapshot";
  }
  return "snapshot";
}

inline std::optional<Role> parse_role(const std::string& s) {
  for (Role r : {Role::base, Role::expert_reason, Role::expert_vl, Role::merged, Role::snapshot}) {
    if (s == role_name(r)) return r;
  }
  return std::nullopt;
}

/// A model checkpoint: named tensors plus a role tag and free-form metadata.
class ParameterSet : public NamedTensors {
 public:
  ParameterSet() = default;
  explicit ParameterSet(Role role) : role_(role) {}

  Role role() const noexcept { return role_; }
  void set_role(Role r) noexcept { role_ = r; }

  std::map<std::string, std::string>& meta() noexcept { return meta_; }
  const std::map<std::string, std::string>& meta() const noexcept { return meta_; }

  bool bit_equal(const ParameterSet& o) const {
    return role_ == o.role_ && meta_ == o.meta_ && NamedTensors::bit_equal(o);
  }

 private:
  Role role_ = Role::snapshot;
  std::map<std::string, std::string> meta_;
};

/// Per-parameter gradients, aligned one-to-one with a ParameterSet.
class GradientSet : public NamedTensors {
 public:
  GradientSet() = default;

  static GradientSet zeros_like(const NamedTensors& p) {
    GradientSet g;
    for (const auto& [name, t] : p) g.add(name, Tensor(t.shape()));
    return g;
  }

  void set_zero() {
    for (auto& [_, t] : *this) std::fill(t.data().begin(), t.data().end(), 0.0);
  }

  double global_norm() const {
    double s = 0.0;
    for (const auto& [_, t] : *this) s += dot(t.data(), t.data());
    return std::sqrt(s);
  }
};

/// Describes why `a` and `b` are not aligned; empty when they are.
inline std::string alignment_problems(const NamedTensors& a, const NamedTensors& b) {
  std::string out;
  auto note = [&out](const std::string& s) { out += (out.empty() ? "" : "; ") + s; };
  for (const auto& [name, t] : a) {
    const Tensor* o = b.find(name);
    if (!o) {
      note("missing in second: " + name);
    } else if (o->shape() != t.shape()) {
      note("shape mismatch: " + name + " " + shape_string(t.shape()) + " vs " +
           shape_string(o->shape()));
    }
  }
  for (const auto& [name, _] : b) {
    if (!a.contains(name)) note("missing in first: " + name);
  }
  return out;
}

inline bool aligned(const NamedTensors& a, const NamedTensors& b) {
  return alignment_problems(a, b).empty();
}

inline void require_aligned(const NamedTensors& a, const NamedTensors& b, const char* context) {
  if (auto p = alignment_problems(a, b); !p.empty()) {
    throw AlignmentError(std::string(context) + ": parameter sets are not aligned: " + p);
  }
}

}  // namespace drift
