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

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace drift {

enum class Task { R, V, VR };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::R: return "R";
    case Task::V: return "V";
    case Task::VR: return "VR";
  }
  return "R";
}

inline std::optional<Task> parse_task(std::string_view s) {
  if (s == "R") return Task::R;
  if (s == "V") return Task::V;
  if (s == "VR") return Task::VR;
  return std::nullopt;
}

/// One training sequence. mask[t] marks token t as supervised: it is
/// predicted from the logits at position t - 1, so mask[0] is never set.
struct Example {
  std::vector<int> tokens;
  std::vector<std::uint8_t> mask;
  Task task = Task::R;

  std::size_t supervised() const {
    std::size_t n = 0;
    for (auto m : mask) n += m != 0;
    return n;
  }

  bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

}  // namespace drift
