// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout:
//   8 bytes   magic "BMCKPT01"
//   8 bytes   header length H, little-endian uint64
//   H bytes   UTF-8 JSON: {"format":"bimatch-checkpoint","version":1,
//             "params":[{"name":..,"shape":[..],"offset":bytes,"count":n},..]}
//   payload   little-endian IEEE-754 float64 values; offsets are relative to
//             the first payload byte

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimatch/numkernel/tensor.hpp"

namespace bimatch::numkernel {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'B', 'M', 'C', 'K', 'P', 'T', '0', '1'};

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const NamedTensors& params) {
  nlohmann::json header;
  header["format"] = "bimatch-checkpoint";
  header["version"] = 1;
  header["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    header["params"].push_back(
        {{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.numel()}});
    offset += 8 * t.numel();
  }
  const std::string head = header.dump();
  std::string out(detail::kCheckpointMagic, 8);
  detail::put_u64_le(out, head.size());
  out += head;
  out.reserve(out.size() + offset);
  for (const auto& entry : params) {
    for (double v : entry.second.data()) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline NamedTensors decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t head_len = detail::get_u64_le(raw + 8);
  if (head_len > bytes.size() - 16) throw FormatError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  if (header.value("format", "") != "bimatch-checkpoint") {
    throw FormatError("checkpoint: unknown format tag");
  }
  const std::size_t payload = 16 + head_len;
  NamedTensors out;
  for (const auto& p : header.at("params")) {
    const auto shape = p.at("shape").get<Shape>();
    const auto offset = p.at("offset").get<std::uint64_t>();
    const auto count = p.at("count").get<std::uint64_t>();
    if (count != numel_of(shape)) throw FormatError("checkpoint: count does not match shape");
    if (offset % 8 != 0 || payload + offset + 8 * count > bytes.size()) {
      throw FormatError("checkpoint: parameter payload out of bounds");
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<double>(detail::get_u64_le(raw + payload + offset + 8 * i));
    }
    out.emplace_back(p.at("name").get<std::string>(), Tensor::from(shape, std::move(values)));
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const NamedTensors& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing " + path.string());
}

inline NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// Copies checkpoint values into existing parameters matched by name.
inline void restore_into(const NamedTensors& stored, NamedTensors& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : stored) by_name[name] = &t;
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks parameter " + name);
    if (it->second->shape() != t.shape()) {
      throw ShapeError("checkpoint parameter " + name + " has shape " +
                       shape_str(it->second->shape()) + ", model expects " + shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    std::copy(it->second->data().begin(), it->second->data().end(), dst.begin());
  }
}

}  // namespace bimatch::numkernel
