// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Closed attribute vocabulary of the synthetic "sprite person", the caption
// grammar over it, and the semantic class layouts parse maps are written in.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bimatch/common.hpp"

namespace bimatch::synthdata {

enum class Part : std::uint8_t { hair, top, bottom, shoes, bag, hat };
inline constexpr std::size_t kNumParts = 6;
inline constexpr std::array<Part, kNumParts> kAllParts{Part::hair, Part::top,  Part::bottom,
                                                       Part::shoes, Part::bag, Part::hat};

inline const char* part_name(Part p) {
  static constexpr const char* names[] = {"hair", "top", "bottom", "shoes", "bag", "hat"};
  return names[static_cast<std::size_t>(p)];
}

inline Part part_from_name(const std::string& s) {
  for (Part p : kAllParts)
    if (s == part_name(p)) return p;
  throw FormatError("unknown part '" + s + "'");
}

inline bool part_is_optional(Part p) { return p == Part::bag || p == Part::hat; }

struct Color {
  const char* name;
  std::uint8_t r, g, b;
};

inline constexpr std::array<Color, 8> kPalette{{
    {"black", 30, 30, 34},
    {"white", 236, 236, 232},
    {"red", 204, 32, 36},
    {"green", 36, 160, 64},
    {"blue", 40, 72, 204},
    {"yellow", 232, 212, 40},
    {"purple", 132, 48, 164},
    {"orange", 244, 140, 28},
}};

// Two styles per part; index 0/1.
inline const std::array<const char*, 2>& style_names(Part p) {
  static const std::array<std::array<const char*, 2>, kNumParts> names{{
      {"short", "long"},
      {"shirt", "coat"},
      {"pants", "jeans"},
      {"shoes", "boots"},
      {"backpack", "handbag"},
      {"cap", "beanie"},
  }};
  return names[static_cast<std::size_t>(p)];
}

struct Attribute {
  std::uint8_t color = 0;
  std::uint8_t style = 0;
  bool operator==(const Attribute&) const = default;
};

struct PersonSpec {
  int identity_id = 0;
  std::array<std::optional<Attribute>, kNumParts> parts{};

  const std::optional<Attribute>& operator[](Part p) const {
    return parts[static_cast<std::size_t>(p)];
  }
  std::optional<Attribute>& operator[](Part p) { return parts[static_cast<std::size_t>(p)]; }

  bool same_attributes(const PersonSpec& o) const { return parts == o.parts; }
  bool operator==(const PersonSpec&) const = default;
};

// Semantic part ids used by the renderer before a label scheme maps them to
// parse-map classes.
enum class Region : std::uint8_t { background, hair, face, top, bottom, shoes, bag, hat };
inline constexpr std::size_t kNumRegions = 8;

enum class LabelScheme : std::uint8_t { basic8, atr18, lip20, ppp7 };

inline std::size_t scheme_num_classes(LabelScheme s) {
  switch (s) {
    case LabelScheme::basic8: return 8;
    case LabelScheme::atr18: return 18;
    case LabelScheme::lip20: return 20;
    case LabelScheme::ppp7: return 7;
  }
  return 8;
}

inline const char* scheme_name(LabelScheme s) {
  switch (s) {
    case LabelScheme::basic8: return "basic8";
    case LabelScheme::atr18: return "atr18";
    case LabelScheme::lip20: return "lip20";
    case LabelScheme::ppp7: return "ppp7";
  }
  return "basic8";
}

inline LabelScheme scheme_from_name(const std::string& s) {
  for (LabelScheme v : {LabelScheme::basic8, LabelScheme::atr18, LabelScheme::lip20, LabelScheme::ppp7})
    if (s == scheme_name(v)) return v;
  throw ConfigError("unknown label scheme '" + s + "'");
}

// Class id of a rendered region under a scheme. ATR/LIP ids follow the
// public parser label lists; LIP has no bag class and the person-part
// layout only knows body parts, so those regions fall back to background
// or the nearest body part.
inline std::uint8_t region_class(Region r, LabelScheme s) {
  const auto i = static_cast<std::size_t>(r);
  static constexpr std::uint8_t atr[] = {0, 2, 11, 4, 6, 9, 16, 1};
  static constexpr std::uint8_t lip[] = {0, 2, 13, 5, 9, 18, 0, 1};
  static constexpr std::uint8_t ppp[] = {0, 1, 1, 2, 5, 6, 0, 1};
  switch (s) {
    case LabelScheme::basic8: return static_cast<std::uint8_t>(i);
    case LabelScheme::atr18: return atr[i];
    case LabelScheme::lip20: return lip[i];
    case LabelScheme::ppp7: return ppp[i];
  }
  return static_cast<std::uint8_t>(i);
}

// The fixed word list of the caption grammar, in vocabulary order.
inline std::vector<std::string> grammar_words() {
  std::vector<std::string> words{"a",     "person", "with",     "hair", "and",   "smiling",
                                 "face",  "wearing", "carrying", "under", "in"};
  for (const Color& c : kPalette) words.emplace_back(c.name);
  for (Part p : kAllParts)
    for (const char* s : style_names(p))
      if (std::find(words.begin(), words.end(), s) == words.end()) words.emplace_back(s);
  return words;
}

inline std::string attr_phrase(Part p, const Attribute& a) {
  return std::string(kPalette[a.color].name) + " " + style_names(p)[a.style];
}

inline constexpr std::size_t kNumTemplates = 3;

// Realizes caption template `variant` naming every present attribute.
inline std::string caption_text(const PersonSpec& s, std::size_t variant) {
  const auto& hair = *s[Part::hair];
  const auto& top = *s[Part::top];
  const auto& bottom = *s[Part::bottom];
  const auto& shoes = *s[Part::shoes];
  const std::string hair_p = attr_phrase(Part::hair, hair) + " hair";
  const std::string clothes = "a " + attr_phrase(Part::top, top) + " and " +
                              attr_phrase(Part::bottom, bottom) + " and " +
                              attr_phrase(Part::shoes, shoes);
  std::string out;
  switch (variant % kNumTemplates) {
    case 0:
      out = "a person with " + hair_p + " and a smiling face wearing " + clothes;
      if (s[Part::bag]) out += " carrying a " + attr_phrase(Part::bag, *s[Part::bag]);
      if (s[Part::hat]) out += " and a " + attr_phrase(Part::hat, *s[Part::hat]);
      break;
    case 1:
      out = "a smiling face under " + hair_p;
      if (s[Part::hat]) out += " and a " + attr_phrase(Part::hat, *s[Part::hat]);
      out += " with " + clothes;
      if (s[Part::bag]) out += " carrying a " + attr_phrase(Part::bag, *s[Part::bag]);
      break;
    default:
      out = "a person in " + clothes;
      if (s[Part::bag]) out += " with a " + attr_phrase(Part::bag, *s[Part::bag]);
      out += " and " + hair_p;
      if (s[Part::hat]) out += " under a " + attr_phrase(Part::hat, *s[Part::hat]);
      out += " and a smiling face";
      break;
  }
  return out;
}

}  // namespace bimatch::synthdata
