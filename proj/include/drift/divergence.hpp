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

// Layer-wise magnitude and direction gaps between two aligned checkpoints.

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "drift/error.hpp"
#include "drift/parameter_set.hpp"
#include "drift/taxonomy.hpp"

namespace drift {

struct DivergenceRecord {
  std::string name;
  ModuleClass module_class = ModuleClass::Other;
  std::optional<int> layer_index;
  double l2_diff = 0.0;
  std::optional<double> cosine;  // none when either side has zero norm
};

struct GroupStats {
  std::size_t count = 0;
  double mean_l2_diff = 0.0;
  std::optional<double> mean_cosine;  // over records whose cosine exists
};

struct DivergenceReport {
  std::vector<DivergenceRecord> records;
  std::map<std::string, GroupStats> aggregates;
};

/// Aggregate group of a class: each attention projection on its own, the
/// MLP projections pooled, norms pooled. Other classes are not aggregated.
inline std::optional<std::string> divergence_group(ModuleClass c) {
  switch (c) {
    case ModuleClass::AttnQ:
    case ModuleClass::AttnK:
    case ModuleClass::AttnV:
    case ModuleClass::AttnO: return module_class_name(c);
    case ModuleClass::MlpUp:
    case ModuleClass::MlpDown: return "MLP";
    case ModuleClass::Norm: return "Norm";
    default: return std::nullopt;
  }
}

struct CompareOptions {
  // When set, cosines are taken between task vectors (a - base, b - base)
  // instead of the raw weights.
  const ParameterSet* base = nullptr;
  unsigned workers = 1;
};

inline DivergenceRecord compare_tensor(const std::string& name, const Tensor& a, const Tensor& b,
                                       const Tensor* base) {
  DivergenceRecord r;
  r.name = name;
  r.module_class = classify(name);
  r.layer_index = layer_index(name);
  auto x = a.data();
  auto y = b.data();
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += (x[i] - y[i]) * (x[i] - y[i]);
  r.l2_diff = std::sqrt(ss);
  try {
    r.cosine = base ? cosine_sim(sub(a, *base), sub(b, *base)) : cosine_sim(a, b);
  } catch (const DegenerateInputError&) {
    r.cosine.reset();
  }
  return r;
}

inline DivergenceReport compare(const ParameterSet& a, const ParameterSet& b, const CompareOptions& opt = {}) {
  require_aligned(a, b, "compare");
  if (opt.base) require_aligned(a, *opt.base, "compare (task-vector base)");

  DivergenceReport rep;
  rep.records.resize(a.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < a.size(); i += stride) {
      const auto& [name, ta] = a.entry(i);
      rep.records[i] = compare_tensor(name, ta, b.at(name), opt.base ? &opt.base->at(name) : nullptr);
    }
  };
  const unsigned workers = std::max(1u, opt.workers);
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }

  std::map<std::string, std::size_t> cos_count;
  std::map<std::string, double> cos_sum;
  for (const auto& r : rep.records) {
    const auto g = divergence_group(r.module_class);
    if (!g) continue;
    auto& s = rep.aggregates[*g];
    ++s.count;
    s.mean_l2_diff += r.l2_diff;
    if (r.cosine) {
      ++cos_count[*g];
      cos_sum[*g] += *r.cosine;
    }
  }
  for (auto& [g, s] : rep.aggregates) {
    s.mean_l2_diff /= static_cast<double>(s.count);
    if (cos_count[g]) s.mean_cosine = cos_sum[g] / static_cast<double>(cos_count[g]);
  }
  return rep;
}

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("bad number '" + std::string(s) + "'");
  return v;
}

inline constexpr const char* kDivergenceCsvHeader = "name,module_class,layer_index,l2_diff,cosine";

inline void write_divergence_csv(const DivergenceReport& r, std::ostream& os) {
  os << kDivergenceCsvHeader << '\n';
  for (const auto& rec : r.records) {
    os << rec.name << ',' << module_class_name(rec.module_class) << ',';
    if (rec.layer_index) os << *rec.layer_index;
    os << ',' << format_double(rec.l2_diff) << ',';
    if (rec.cosine) os << format_double(*rec.cosine);
    os << '\n';
  }
}

inline void emit_csv(const DivergenceReport& r, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  write_divergence_csv(r, f);
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  for (char c : line) {
    if (c == ',') out.emplace_back();
    else if (c != '\r') out.back() += c;
  }
  return out;
}

/// Records back from emit_csv output (aggregates are not stored).
inline std::vector<DivergenceRecord> read_divergence_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kDivergenceCsvHeader) throw ParseError("missing divergence CSV header");
  std::vector<DivergenceRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw ParseError("expected 5 columns", line);
    DivergenceRecord r;
    r.name = f[0];
    const auto mc = parse_module_class(f[1]);
    if (!mc) throw ParseError("unknown module class '" + f[1] + "'", r.name);
    r.module_class = *mc;
    if (!f[2].empty()) r.layer_index = std::stoi(f[2]);
    r.l2_diff = parse_double(f[3]);
    if (!f[4].empty()) r.cosine = parse_double(f[4]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace drift
