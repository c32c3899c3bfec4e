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

// Seeded synthetic tasks.
//
//   R   "R = + a1 s1 + a2 s2 .. + ak sk"        s_i = (a1 + .. + a_i) mod 10
//   V   "V g1 .. g9 = q1 c1 q2 c2"              c_i = count of symbol q_i in the grid
//   VR  "VR g1 .. g9 = q1 c1 s1 q2 c2 s2"       s_i = running sum of the counts mod 10
//
// Operands ('+', a_i, q_i) are given; sums and counts are supervised. VR
// interleaves the V step (count at each query) with the R step (add the
// new count to the sum two positions back). Digits share token ids across
// tasks; each task has its own tag token.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "drift/error.hpp"
#include "drift/example.hpp"
#include "drift/rng.hpp"

namespace drift::tokens {

inline constexpr int kDigit0 = 0;  // digits occupy 0..9
inline constexpr int kSymbol0 = 10;
inline constexpr int kNumSymbols = 4;  // grid symbols occupy 10..13
inline constexpr int kTagR = 20;
inline constexpr int kTagV = 21;
inline constexpr int kTagVR = 22;
inline constexpr int kEq = 23;
inline constexpr int kPlus = 24;
inline constexpr int kGridCells = 9;
inline constexpr int kMaxSteps = 8;

}  // namespace drift::tokens

namespace drift {

enum class Split { any, train, eval };

/// Content-hash split assignment: one in five distinct sequences is eval.
inline Split split_of(const Example& ex) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int t : ex.tokens) {
    h ^= static_cast<std::uint64_t>(t) + 1;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h) % 5 == 0 ? Split::eval : Split::train;
}

/// Running sums mod 10 of `digits`.
inline std::vector<int> running_sum_chain(std::span<const int> digits) {
  std::vector<int> out;
  int s = 0;
  for (int d : digits) {
    s = (s + d) % 10;
    out.push_back(s);
  }
  return out;
}

namespace detail {

template <typename Make>
Dataset draw(std::size_t n, std::uint64_t seed, Split split, Make make) {
  Dataset out;
  out.reserve(n);
  Rng rng(seed);
  while (out.size() < n) {
    Example ex = make(rng);
    if (split == Split::any || split_of(ex) == split) out.push_back(std::move(ex));
  }
  return out;
}

inline std::array<int, tokens::kGridCells> random_grid(Rng& rng) {
  std::array<int, tokens::kGridCells> g{};
  for (int& c : g) c = tokens::kSymbol0 + static_cast<int>(rng.below(tokens::kNumSymbols));
  return g;
}

inline int random_symbol(Rng& rng) { return tokens::kSymbol0 + static_cast<int>(rng.below(tokens::kNumSymbols)); }

}  // namespace detail

namespace detail {

struct Builder {
  Example ex;
  Builder(Task task, int tag) {
    ex.task = task;
    put(tag, false);
  }
  void put(int tok, bool supervised) {
    ex.tokens.push_back(tok);
    ex.mask.push_back(supervised ? 1 : 0);
  }
};

}  // namespace detail

/// Builds one R example from explicit addends.
inline Example make_r(std::span<const int> digits) {
  detail::Builder b(Task::R, tokens::kTagR);
  b.put(tokens::kEq, false);
  const auto sums = running_sum_chain(digits);
  for (std::size_t i = 0; i < digits.size(); ++i) {
    b.put(tokens::kPlus, false);
    b.put(tokens::kDigit0 + digits[i], false);
    b.put(tokens::kDigit0 + sums[i], true);
  }
  return std::move(b.ex);
}

inline int count_symbol(std::span<const int> grid, int symbol) {
  int c = 0;
  for (int g : grid) c += g == symbol;
  return c;
}

namespace detail {

inline Example make_grid_example(Task task, int tag, std::span<const int> grid, int q1, int q2, bool with_sums) {
  Builder b(task, tag);
  for (int g : grid) b.put(g, false);
  b.put(tokens::kEq, false);
  const int counts[2] = {count_symbol(grid, q1), count_symbol(grid, q2)};
  const auto sums = running_sum_chain(counts);
  const int queries[2] = {q1, q2};
  for (int i = 0; i < 2; ++i) {
    b.put(queries[i], false);
    b.put(tokens::kDigit0 + counts[i], true);
    if (with_sums) b.put(tokens::kDigit0 + sums[static_cast<std::size_t>(i)], true);
  }
  return std::move(b.ex);
}

}  // namespace detail

inline Example make_v(std::span<const int> grid, int q1, int q2) {
  return detail::make_grid_example(Task::V, tokens::kTagV, grid, q1, q2, false);
}

inline Example make_vr(std::span<const int> grid, int q1, int q2) {
  return detail::make_grid_example(Task::VR, tokens::kTagVR, grid, q1, q2, true);
}

/// n examples of exactly k_steps addends each.
inline Dataset gen_r(std::size_t n, int k_steps, std::uint64_t seed, Split split = Split::any) {
  if (k_steps < 1 || k_steps > tokens::kMaxSteps) {
    throw ConfigError("gen_r: k_steps must be in [1, " + std::to_string(tokens::kMaxSteps) + "]");
  }
  return detail::draw(n, mix_seed(seed, 0x52), split, [k_steps](Rng& rng) {
    std::vector<int> digits(static_cast<std::size_t>(k_steps));
    for (int& d : digits) d = static_cast<int>(rng.below(10));
    return make_r(digits);
  });
}

inline Dataset gen_v(std::size_t n, std::uint64_t seed, Split split = Split::any) {
  return detail::draw(n, mix_seed(seed, 0x56), split, [](Rng& rng) {
    const auto grid = detail::random_grid(rng);
    const int q1 = detail::random_symbol(rng);
    const int q2 = detail::random_symbol(rng);
    return make_v(grid, q1, q2);
  });
}

inline Dataset gen_vr(std::size_t n, std::uint64_t seed, Split split = Split::any) {
  return detail::draw(n, mix_seed(seed, 0x5652), split, [](Rng& rng) {
    const auto grid = detail::random_grid(rng);
    const int q1 = detail::random_symbol(rng);
    const int q2 = detail::random_symbol(rng);
    return make_vr(grid, q1, q2);
  });
}

inline Dataset generate(Task task, std::size_t n, std::uint64_t seed, Split split, int k_steps = 4) {
  switch (task) {
    case Task::R: return gen_r(n, k_steps, seed, split);
    case Task::V: return gen_v(n, seed, split);
    case Task::VR: return gen_vr(n, seed, split);
  }
  return {};
}

// Line-delimited records: {"tokens":[...],"mask":[...],"task":"VR"}

inline std::string to_jsonl_record(const Example& ex) {
  nlohmann::ordered_json j;
  j["tokens"] = ex.tokens;
  std::vector<bool> m(ex.mask.begin(), ex.mask.end());
  j["mask"] = m;
  j["task"] = task_name(ex.task);
  return j.dump();
}

inline Example from_jsonl_record(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Example ex;
    ex.tokens = j.at("tokens").get<std::vector<int>>();
    for (const auto& m : j.at("mask")) ex.mask.push_back(m.is_boolean() ? m.get<bool>() : m.get<int>() != 0);
    const auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw ParseError("unknown task '" + j.at("task").get<std::string>() + "'");
    ex.task = *task;
    if (ex.mask.size() != ex.tokens.size()) throw ParseError("mask length differs from token length");
    if (ex.supervised() == 0) throw ParseError("record has no supervised position");
    return ex;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad dataset record: ") + e.what());
  }
}

inline void save_jsonl(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  for (const auto& ex : data) f << to_jsonl_record(ex) << '\n';
}

inline Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path.string() + "' for reading");
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_jsonl_record(line));
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()), "line " + std::to_string(lineno));
    }
  }
  return out;
}

}  // namespace drift
