// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal PPM/PGM codec. Writes binary P6/P5 with maxval 255; reads binary
// and ASCII (P3/P2) variants so hand-written parse maps can be ingested.

#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <string>

#include "bimatch/common.hpp"
#include "bimatch/image.hpp"

namespace bimatch::synthdata {

namespace detail {

class PnmReader {
 public:
  PnmReader(std::string bytes, std::string origin) : b_(std::move(bytes)), origin_(std::move(origin)) {}

  std::string magic() {
    if (b_.size() < 2 || b_[0] != 'P') fail("missing P-magic");
    pos_ = 2;
    return b_.substr(0, 2);
  }

  std::size_t header_int() {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      fail("expected an integer in header");
    }
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_++] - '0');
      if (v > (1u << 24)) fail("header value too large");
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from binary data.
  void end_header() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      fail("header not terminated by whitespace");
    }
    ++pos_;
  }

  std::uint8_t binary_byte() {
    if (pos_ >= b_.size()) fail("truncated pixel data");
    return static_cast<std::uint8_t>(b_[pos_++]);
  }

  bool at_end() const { return pos_ == b_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(origin_ + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string b_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot open " + p.string());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot open " + p.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing " + p.string());
}

}  // namespace detail

inline std::string encode_ppm(const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline std::string encode_pgm(const LabelMap& map) {
  std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n255\n";
  out.append(map.labels.begin(), map.labels.end());
  return out;
}

inline RgbImage decode_ppm(const std::string& bytes, const std::string& origin = "ppm") {
  detail::PnmReader r(bytes, origin);
  const std::string magic = r.magic();
  if (magic != "P6" && magic != "P3") r.fail("not a PPM (magic " + magic + ")");
  const std::size_t w = r.header_int(), h = r.header_int(), maxval = r.header_int();
  if (w == 0 || h == 0) r.fail("zero image dimension");
  if (maxval != 255) r.fail("only maxval 255 is supported");
  RgbImage img(h, w);
  if (magic == "P6") {
    r.end_header();
    for (auto& v : img.pixels) v = r.binary_byte();
    if (!r.at_end()) r.fail("trailing bytes after pixel data");
  } else {
    for (auto& v : img.pixels) {
      const std::size_t x = r.header_int();
      if (x > maxval) r.fail("sample exceeds maxval");
      v = static_cast<std::uint8_t>(x);
    }
  }
  return img;
}

// Decodes a parse map; every label must be below num_classes.
inline LabelMap decode_pgm(const std::string& bytes, std::size_t num_classes,
                           const std::string& origin = "pgm") {
  detail::PnmReader r(bytes, origin);
  const std::string magic = r.magic();
  if (magic != "P5" && magic != "P2") r.fail("not a PGM (magic " + magic + ")");
  const std::size_t w = r.header_int(), h = r.header_int(), maxval = r.header_int();
  if (w == 0 || h == 0) r.fail("zero image dimension");
  if (maxval == 0 || maxval > 255) r.fail("only 8-bit PGM is supported");
  LabelMap map(h, w);
  if (magic == "P5") r.end_header();
  for (auto& v : map.labels) {
    const std::size_t x = magic == "P5" ? r.binary_byte() : r.header_int();
    if (x > maxval) r.fail("sample exceeds maxval");
    if (x >= num_classes) {
      throw RangeError(origin + ": label " + std::to_string(x) + " outside class range [0, " +
                       std::to_string(num_classes) + ")");
    }
    v = static_cast<std::uint8_t>(x);
  }
  if (magic == "P5" && !r.at_end()) r.fail("trailing bytes after pixel data");
  return map;
}

inline void write_ppm(const std::filesystem::path& p, const RgbImage& img) {
  detail::write_file(p, encode_ppm(img));
}
inline void write_pgm(const std::filesystem::path& p, const LabelMap& map) {
  detail::write_file(p, encode_pgm(map));
}
inline RgbImage read_ppm(const std::filesystem::path& p) {
  return decode_ppm(detail::read_file(p), p.string());
}
inline LabelMap read_pgm(const std::filesystem::path& p, std::size_t num_classes) {
  return decode_pgm(detail::read_file(p), num_classes, p.string());
}

}  // namespace bimatch::synthdata
