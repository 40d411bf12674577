// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bimatch/common.hpp"
#include "bimatch/image.hpp"
#include "bimatch/synthdata/person.hpp"
#include "bimatch/synthdata/vocab.hpp"

namespace bimatch::synthdata {

struct PersonImage {
  int identity_id = 0;
  RgbImage image;
  LabelMap parse_map;
  // Filled by patchlabel::attach_patch_labels; empty until then.
  std::vector<int> patch_labels;
  std::size_t patch_size = 0;

  bool operator==(const PersonImage&) const = default;
};

struct Caption {
  std::size_t image_index = 0;
  std::string text;
  std::vector<int> token_ids;

  bool operator==(const Caption&) const = default;
};

struct Dataset {
  Vocab vocab;
  LabelScheme scheme = LabelScheme::basic8;
  std::size_t num_classes = 8;
  std::size_t max_text_len = 32;
  std::vector<PersonSpec> identities;  // indexed by identity_id
  std::vector<PersonImage> images;
  std::vector<Caption> captions;

  bool operator==(const Dataset&) const = default;
};

// One (image, caption) training record.
struct Sample {
  const RgbImage& image;
  std::span<const int> token_ids;
  int identity_id;
  const LabelMap& parse_map;
  std::span<const int> patch_labels;
};

inline Sample sample_at(const Dataset& d, std::size_t caption_index) {
  const Caption& c = d.captions.at(caption_index);
  const PersonImage& img = d.images.at(c.image_index);
  return Sample{img.image, c.token_ids, img.identity_id, img.parse_map, img.patch_labels};
}

struct GenerateOptions {
  std::uint64_t seed = 0;
  std::size_t num_identities = 64;
  std::size_t images_per_identity = 4;
  std::size_t captions_per_image = 2;
  std::size_t image_height = 64;
  std::size_t image_width = 32;
  std::size_t max_text_len = 32;
  // Only the first palette_size colors are used.
  std::size_t palette_size = kPalette.size();
  LabelScheme scheme = LabelScheme::basic8;
};

inline std::uint64_t attribute_space_size(std::size_t palette_size) {
  std::uint64_t n = 1;
  for (Part p : kAllParts) n *= palette_size * 2 + (part_is_optional(p) ? 1 : 0);
  return n;
}

namespace detail {

struct Canvas {
  RgbImage& img;
  LabelMap& map;
  LabelScheme scheme;
  Rng& rng;

  void fill(int y0, int y1, int x0, int x1, const Color& c, Region r, int shade = 0) {
    for (int y = std::max(y0, 0); y <= std::min(y1, static_cast<int>(img.height) - 1); ++y) {
      for (int x = std::max(x0, 0); x <= std::min(x1, static_cast<int>(img.width) - 1); ++x) {
        put(y, x, c, r, shade);
      }
    }
  }

  void put(int y, int x, const Color& c, Region r, int shade) {
    const int noise = static_cast<int>(rng.below(9)) - 4 + shade;
    const auto ch = [&](std::uint8_t v) {
      return static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + noise, 0, 255));
    };
    img.at(y, x, 0) = ch(c.r);
    img.at(y, x, 1) = ch(c.g);
    img.at(y, x, 2) = ch(c.b);
    map.at(y, x) = region_class(r, scheme);
  }
};

inline constexpr Color kSkin{"skin", 232, 190, 160};
inline constexpr Color kBackground{"background", 118, 128, 140};

// Draws one pose of `spec` onto a canvas laid out for 64x32; other sizes are
// rendered at 64x32 and resampled by nearest neighbour.
inline void render_person(Canvas& cv, const PersonSpec& spec, int dx, int pose) {
  const int cx = 16 + dx;
  cv.fill(0, 63, 0, 31, kBackground, Region::background);

  // face then hair over it, hat on top
  cv.fill(8, 17, cx - 5, cx + 4, kSkin, Region::face);
  const auto& hair = *spec[Part::hair];
  const Color& hc = kPalette[hair.color];
  cv.fill(4, 8, cx - 6, cx + 5, hc, Region::hair);
  cv.fill(9, 11, cx - 6, cx - 5, hc, Region::hair);
  cv.fill(9, 11, cx + 4, cx + 5, hc, Region::hair);
  if (hair.style == 1) {
    cv.fill(12, 22, cx - 7, cx - 5, hc, Region::hair);
    cv.fill(12, 22, cx + 4, cx + 6, hc, Region::hair);
  }

  const auto& top = *spec[Part::top];
  const Color& tc = kPalette[top.color];
  const int top_end = top.style == 1 ? 41 : 37;
  cv.fill(18, top_end, cx - 7, cx + 6, tc, Region::top);
  cv.fill(19, 35, cx - 10, cx - 8, tc, Region::top);
  cv.fill(19, 35, cx + 7, cx + 9, tc, Region::top);
  if (top.style == 1) {
    for (int y = 18; y <= top_end; ++y) cv.put(y, cx, tc, Region::top, -40);
  }

  const auto& bottom = *spec[Part::bottom];
  const Color& bc = kPalette[bottom.color];
  const int bottom_start = top_end + 1;
  cv.fill(bottom_start, 41, cx - 7, cx + 6, bc, Region::bottom);
  for (int y = 42; y <= 55; ++y) {
    const int spread = pose * (y - 42) / 7;
    cv.fill(y, y, cx - 6 - spread, cx - 1 - spread, bc, Region::bottom);
    cv.fill(y, y, cx + 1 + spread, cx + 6 + spread, bc, Region::bottom);
    if (bottom.style == 1) {
      cv.put(y, cx - 3 - spread, bc, Region::bottom, -50);
      cv.put(y, cx + 3 + spread, bc, Region::bottom, -50);
    }
  }

  const auto& shoes = *spec[Part::shoes];
  const Color& sc = kPalette[shoes.color];
  const int shoe_start = shoes.style == 1 ? 51 : 56;
  for (int y = shoe_start; y <= 60; ++y) {
    const int spread = pose * (std::min(y, 55) - 42) / 7;
    cv.fill(y, y, cx - 7 - spread, cx - 1 - spread, sc, Region::shoes);
    cv.fill(y, y, cx + 1 + spread, cx + 7 + spread, sc, Region::shoes);
  }

  if (spec[Part::bag]) {
    const Color& gc = kPalette[spec[Part::bag]->color];
    if (spec[Part::bag]->style == 0) {
      cv.fill(20, 34, cx + 7, cx + 11, gc, Region::bag);
    } else {
      cv.fill(33, 40, cx - 13, cx - 9, gc, Region::bag);
    }
  }

  if (spec[Part::hat]) {
    const Color& ac = kPalette[spec[Part::hat]->color];
    if (spec[Part::hat]->style == 0) {
      cv.fill(2, 5, cx - 6, cx + 5, ac, Region::hat);
      cv.fill(6, 6, cx - 6, cx + 9, ac, Region::hat);
    } else {
      cv.fill(0, 6, cx - 7, cx + 6, ac, Region::hat);
    }
  }
}

inline PersonSpec random_spec(Rng& rng, std::size_t palette_size) {
  PersonSpec s;
  for (Part p : kAllParts) {
    const std::uint64_t options = palette_size * 2 + (part_is_optional(p) ? 1 : 0);
    const std::uint64_t pick = rng.below(options);
    if (pick == palette_size * 2) continue;  // absent
    s[p] = Attribute{static_cast<std::uint8_t>(pick / 2), static_cast<std::uint8_t>(pick % 2)};
  }
  return s;
}

}  // namespace detail

// Renders an image of `spec` with deterministic jitter drawn from `rng`.
inline PersonImage render(const PersonSpec& spec, Rng& rng, std::size_t height, std::size_t width,
                          LabelScheme scheme) {
  RgbImage base(64, 32);
  LabelMap base_map(64, 32);
  detail::Canvas cv{base, base_map, scheme, rng};
  const int dx = static_cast<int>(rng.below(5)) - 2;
  const int pose = static_cast<int>(rng.below(3));
  detail::render_person(cv, spec, dx, pose);

  PersonImage out;
  out.identity_id = spec.identity_id;
  if (height == 64 && width == 32) {
    out.image = std::move(base);
    out.parse_map = std::move(base_map);
    return out;
  }
  out.image = RgbImage(height, width);
  out.parse_map = LabelMap(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sy = y * 64 / height, sx = x * 32 / width;
      for (std::size_t c = 0; c < 3; ++c) out.image.at(y, x, c) = base.at(sy, sx, c);
      out.parse_map.at(y, x) = base_map.at(sy, sx);
    }
  }
  return out;
}

inline Dataset generate_dataset(const GenerateOptions& opt) {
  if (opt.num_identities == 0 || opt.images_per_identity == 0 || opt.captions_per_image == 0) {
    throw InvalidArgument("generate_dataset: all counts must be positive");
  }
  if (opt.palette_size == 0 || opt.palette_size > kPalette.size()) {
    throw InvalidArgument("generate_dataset: palette_size must be in [1, 8]");
  }
  if (attribute_space_size(opt.palette_size) < opt.num_identities) {
    throw InvalidArgument("generate_dataset: attribute space of " +
                          std::to_string(attribute_space_size(opt.palette_size)) +
                          " combinations is smaller than " + std::to_string(opt.num_identities) +
                          " identities");
  }
  Dataset d;
  d.vocab = Vocab(grammar_words());
  d.scheme = opt.scheme;
  d.num_classes = scheme_num_classes(opt.scheme);
  d.max_text_len = opt.max_text_len;

  Rng id_rng(derive_seed(opt.seed, 0));
  std::set<std::vector<int>> used;
  while (d.identities.size() < opt.num_identities) {
    PersonSpec s = detail::random_spec(id_rng, opt.palette_size);
    std::vector<int> key;
    for (const auto& p : s.parts) key.push_back(p ? p->color * 2 + p->style : -1);
    if (!used.insert(key).second) continue;
    s.identity_id = static_cast<int>(d.identities.size());
    d.identities.push_back(s);
  }

  for (const PersonSpec& spec : d.identities) {
    for (std::size_t k = 0; k < opt.images_per_identity; ++k) {
      const std::size_t index = d.images.size();
      Rng rng(derive_seed(opt.seed, 1 + index));
      d.images.push_back(render(spec, rng, opt.image_height, opt.image_width, opt.scheme));
      for (std::size_t c = 0; c < opt.captions_per_image; ++c) {
        const std::size_t variant = (index + c) % kNumTemplates;
        Caption cap;
        cap.image_index = index;
        cap.text = caption_text(spec, variant);
        cap.token_ids = tokenize(cap.text, d.vocab, opt.max_text_len);
        d.captions.push_back(std::move(cap));
      }
    }
  }
  return d;
}

// Identity-disjoint split: the last `test_identities` identities form the test
// set. Identity ids are preserved.
struct Split {
  std::vector<std::size_t> train_captions, test_captions;
  std::vector<std::size_t> train_images, test_images;
};

inline Split split_by_identity(const Dataset& d, std::size_t test_identities) {
  if (test_identities == 0 || test_identities >= d.identities.size()) {
    throw InvalidArgument("split_by_identity: need at least one train and one test identity");
  }
  const int first_test = static_cast<int>(d.identities.size() - test_identities);
  Split s;
  for (std::size_t i = 0; i < d.images.size(); ++i)
    (d.images[i].identity_id >= first_test ? s.test_images : s.train_images).push_back(i);
  for (std::size_t i = 0; i < d.captions.size(); ++i)
    (d.images[d.captions[i].image_index].identity_id >= first_test ? s.test_captions
                                                                    : s.train_captions)
        .push_back(i);
  return s;
}

}  // namespace bimatch::synthdata
