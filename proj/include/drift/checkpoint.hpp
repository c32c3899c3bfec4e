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

// DCKPT v1 checkpoint format:
//
//   bytes 0..4   magic "DCKP1"
//   bytes 5..8   u32 little-endian header length L
//   next L bytes UTF-8 JSON
//                {"role":..., "meta":{...},
//                 "tensors":[{"name":..., "dtype":"f32"|"f64", "shape":[...], "offset":N}]}
//   remainder    little-endian raw tensor data; offsets are relative to the
//                end of the header, ascending and non-overlapping.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "drift/error.hpp"
#include "drift/parameter_set.hpp"

namespace drift {

static_assert(std::endian::native == std::endian::little,
              "DCKPT serialization assumes a little-endian host");

inline constexpr std::string_view kCheckpointMagic = "DCKP1";

inline std::vector<std::uint8_t> serialize_checkpoint(const ParameterSet& p) {
  nlohmann::ordered_json header;
  header["role"] = role_name(p.role());
  header["meta"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.meta()) header["meta"][k] = v;
  header["tensors"] = nlohmann::ordered_json::array();

  std::uint64_t offset = 0;
  for (const auto& [name, t] : p) {
    header["tensors"].push_back({{"name", name},
                                 {"dtype", dtype_name(t.dtype())},
                                 {"shape", t.shape()},
                                 {"offset", offset}});
    offset += t.numel() * (t.dtype() == DType::f32 ? 4 : 8);
  }
  const std::string json = header.dump();
  if (json.size() > UINT32_MAX) throw Error("checkpoint header too large");

  std::vector<std::uint8_t> out;
  out.reserve(kCheckpointMagic.size() + 4 + json.size() + offset);
  out.insert(out.end(), kCheckpointMagic.begin(), kCheckpointMagic.end());
  const auto len = static_cast<std::uint32_t>(json.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), json.begin(), json.end());

  for (const auto& [_, t] : p) {
    for (double v : t.data()) {
      if (t.dtype() == DType::f32) {
        const auto f = static_cast<float>(v);
        std::uint8_t b[4];
        std::memcpy(b, &f, 4);
        out.insert(out.end(), b, b + 4);
      } else {
        std::uint8_t b[8];
        std::memcpy(b, &v, 8);
        out.insert(out.end(), b, b + 8);
      }
    }
  }
  return out;
}

inline ParameterSet deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCheckpointMagic.size() ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw ParseError("bad magic: not a DCKPT v1 file");
  }
  const std::size_t prefix = kCheckpointMagic.size() + 4;
  if (bytes.size() < prefix) throw ParseError("truncated: missing header length");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t{bytes[kCheckpointMagic.size() + i]} << (8 * i);
  if (bytes.size() - prefix < len) {
    throw ParseError("truncated: header claims " + std::to_string(len) + " bytes, " +
                     std::to_string(bytes.size() - prefix) + " present");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + prefix, bytes.begin() + prefix + len);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("header is not valid JSON: ") + e.what());
  }
  const auto data = bytes.subspan(prefix + len);

  ParameterSet out;
  try {
    const auto role = parse_role(header.at("role").get<std::string>());
    if (!role) throw ParseError("unknown role '" + header.at("role").get<std::string>() + "'");
    out.set_role(*role);
    for (const auto& [k, v] : header.at("meta").items()) out.meta()[k] = v.get<std::string>();

    std::uint64_t cursor = 0;
    for (const auto& rec : header.at("tensors")) {
      const auto name = rec.at("name").get<std::string>();
      const auto dtype_s = rec.at("dtype").get<std::string>();
      DType dtype;
      if (dtype_s == "f32") dtype = DType::f32;
      else if (dtype_s == "f64") dtype = DType::f64;
      else throw ParseError("unknown dtype '" + dtype_s + "'", name);

      const auto shape = rec.at("shape").get<Shape>();
      if (shape.empty()) throw ParseError("empty shape", name);
      for (auto e : shape) {
        if (e == 0) throw ParseError("zero extent in shape", name);
      }
      const auto offset = rec.at("offset").get<std::uint64_t>();
      if (offset < cursor) throw ParseError("offset overlaps previous tensor or is not ascending", name);
      const std::size_t width = dtype == DType::f32 ? 4 : 8;
      const std::uint64_t nbytes = shape_numel(shape) * width;
      if (offset > data.size() || data.size() - offset < nbytes) {
        throw ParseError("truncated: tensor needs " + std::to_string(nbytes) + " bytes at offset " +
                             std::to_string(offset) + ", " +
                             std::to_string(offset > data.size() ? 0 : data.size() - offset) +
                             " present",
                         name);
      }
      std::vector<double> values(shape_numel(shape));
      const std::uint8_t* src = data.data() + offset;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (dtype == DType::f32) {
          float f;
          std::memcpy(&f, src + 4 * i, 4);
          values[i] = f;
        } else {
          std::memcpy(&values[i], src + 8 * i, 8);
        }
      }
      if (out.contains(name)) throw ParseError("duplicate tensor name", name);
      out.add(name, Tensor(shape, std::move(values), dtype));
      cursor = offset + nbytes;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed header: ") + e.what());
  }
  return out;
}

inline void save_checkpoint(const ParameterSet& p, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(p);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

inline ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace drift
