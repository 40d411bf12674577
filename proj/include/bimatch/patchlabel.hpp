// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pixel parse maps to per-patch semantic labels: each P x P block takes its
// most frequent class, ties going to the smallest class id. Background votes
// like any other class.

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "bimatch/common.hpp"
#include "bimatch/image.hpp"
#include "bimatch/synthdata/dataset.hpp"

namespace bimatch::patchlabel {

struct PatchLabelGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t patch_size = 0;
  std::vector<int> labels;  // rows * cols, row-major

  int at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }
  bool operator==(const PatchLabelGrid&) const = default;
};

inline PatchLabelGrid label_patches(const LabelMap& parse_map, std::size_t patch_size,
                                    std::size_t num_classes = 256) {
  if (patch_size == 0) throw InvalidArgument("patch size must be positive");
  if (num_classes == 0 || num_classes > 256) throw InvalidArgument("num_classes must be in [1, 256]");
  if (parse_map.height % patch_size != 0 || parse_map.width % patch_size != 0) {
    throw ShapeError("parse map " + std::to_string(parse_map.height) + "x" +
                     std::to_string(parse_map.width) + " is not divisible by patch size " +
                     std::to_string(patch_size));
  }
  PatchLabelGrid g;
  g.rows = parse_map.height / patch_size;
  g.cols = parse_map.width / patch_size;
  g.patch_size = patch_size;
  g.labels.resize(g.rows * g.cols);
  std::array<std::size_t, 256> hist{};
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      hist.fill(0);
      for (std::size_t y = r * patch_size; y < (r + 1) * patch_size; ++y) {
        for (std::size_t x = c * patch_size; x < (c + 1) * patch_size; ++x) {
          const std::uint8_t v = parse_map.at(y, x);
          if (v >= num_classes) {
            throw RangeError("parse label " + std::to_string(v) + " outside class range [0, " +
                             std::to_string(num_classes) + ")");
          }
          ++hist[v];
        }
      }
      std::size_t best = 0;
      for (std::size_t k = 1; k < num_classes; ++k)
        if (hist[k] > hist[best]) best = k;
      g.labels[r * g.cols + c] = static_cast<int>(best);
    }
  }
  return g;
}

// The grid as a small label map, for writing as PGM.
inline LabelMap grid_to_map(const PatchLabelGrid& g) {
  LabelMap m(g.rows, g.cols);
  for (std::size_t i = 0; i < g.labels.size(); ++i) m.labels[i] = static_cast<std::uint8_t>(g.labels[i]);
  return m;
}

// Fills every image's patch_labels for patch size P.
inline void attach_patch_labels(synthdata::Dataset& d, std::size_t patch_size) {
  for (auto& img : d.images) {
    img.patch_labels = label_patches(img.parse_map, patch_size, d.num_classes).labels;
    img.patch_size = patch_size;
  }
}

}  // namespace bimatch::patchlabel
