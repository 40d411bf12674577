// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace bimatch {

// 8-bit RGB, row-major, channel-interleaved. Float views divide by 255 so
// values round-trip exactly through PPM.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  double value(std::size_t y, std::size_t x, std::size_t c) const { return at(y, x, c) / 255.0; }

  std::vector<double> to_float() const {
    std::vector<double> out(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i] / 255.0;
    return out;
  }

  bool operator==(const RgbImage&) const = default;
};

// Per-pixel semantic class ids.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }

  bool operator==(const LabelMap&) const = default;
};

inline RgbImage flip_horizontal(const RgbImage& img) {
  RgbImage out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

inline LabelMap flip_horizontal(const LabelMap& map) {
  LabelMap out(map.height, map.width);
  for (std::size_t y = 0; y < map.height; ++y)
    for (std::size_t x = 0; x < map.width; ++x) out.at(y, map.width - 1 - x) = map.at(y, x);
  return out;
}

}  // namespace bimatch
