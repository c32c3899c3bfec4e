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

#include <stdexcept>
#include <string>

namespace drift {

// Root of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Zero-norm operand where a direction is required (cosine, normalization).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Two parameter sets do not share names/shapes.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint, CSV or dataset file. `entry()` names the offending
// tensor or record when one is known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string entry = {})
      : Error(entry.empty() ? what : what + " (entry '" + entry + "')"),
        entry_(std::move(entry)) {}
  const std::string& entry() const noexcept { return entry_; }

 private:
  std::string entry_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace drift
