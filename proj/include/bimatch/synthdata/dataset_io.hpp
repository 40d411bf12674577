// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk layout of a dataset directory:
//   images/NNNN.ppm   binary PPM, one per image
//   parse/NNNN.pgm    binary PGM parse map, labels < num_classes
//   meta.jsonl        one record per caption:
//                     {"image":"images/NNNN.ppm","parse":"parse/NNNN.pgm",
//                      "text":"...","identity":id}
//   vocab.json        {"tokens":[...],"special":{...}}
//   dataset.json      image size, class scheme, text length, identity attributes
// Patch labels are derived data and are not stored.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "bimatch/synthdata/dataset.hpp"
#include "bimatch/synthdata/netpbm.hpp"

namespace bimatch::synthdata {

namespace detail {

inline std::string indexed_name(const char* dir, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/%04zu.%s", dir, i, ext);
  return buf;
}

inline nlohmann::json spec_to_json(const PersonSpec& s) {
  nlohmann::json j;
  j["identity"] = s.identity_id;
  for (Part p : kAllParts) {
    if (s[p]) {
      j[part_name(p)] = {{"color", kPalette[s[p]->color].name},
                         {"style", style_names(p)[s[p]->style]}};
    } else {
      j[part_name(p)] = nullptr;
    }
  }
  return j;
}

inline PersonSpec spec_from_json(const nlohmann::json& j) {
  PersonSpec s;
  s.identity_id = j.at("identity").get<int>();
  for (Part p : kAllParts) {
    const auto& e = j.at(part_name(p));
    if (e.is_null()) {
      if (!part_is_optional(p)) throw FormatError(std::string("identity lacks required part ") + part_name(p));
      continue;
    }
    Attribute a;
    const auto color = e.at("color").get<std::string>();
    const auto style = e.at("style").get<std::string>();
    bool found = false;
    for (std::size_t c = 0; c < kPalette.size(); ++c)
      if (color == kPalette[c].name) a.color = static_cast<std::uint8_t>(c), found = true;
    if (!found) throw FormatError("unknown color '" + color + "'");
    found = false;
    for (std::size_t k = 0; k < 2; ++k)
      if (style == style_names(p)[k]) a.style = static_cast<std::uint8_t>(k), found = true;
    if (!found) throw FormatError("unknown style '" + style + "' for " + part_name(p));
    s[p] = a;
  }
  return s;
}

}  // namespace detail

inline void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "parse");
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    write_ppm(dir / detail::indexed_name("images", i, "ppm"), d.images[i].image);
    write_pgm(dir / detail::indexed_name("parse", i, "pgm"), d.images[i].parse_map);
  }
  std::string meta;
  for (const Caption& c : d.captions) {
    nlohmann::json rec{{"image", detail::indexed_name("images", c.image_index, "ppm")},
                       {"parse", detail::indexed_name("parse", c.image_index, "pgm")},
                       {"text", c.text},
                       {"identity", d.images.at(c.image_index).identity_id}};
    meta += rec.dump() + "\n";
  }
  detail::write_file(dir / "meta.jsonl", meta);
  detail::write_file(dir / "vocab.json", d.vocab.to_json().dump(2) + "\n");

  nlohmann::json info;
  const auto& first = d.images.empty() ? PersonImage{} : d.images.front();
  info["image_height"] = first.image.height;
  info["image_width"] = first.image.width;
  info["num_images"] = d.images.size();
  info["num_classes"] = d.num_classes;
  info["label_scheme"] = scheme_name(d.scheme);
  info["max_text_len"] = d.max_text_len;
  info["identities"] = nlohmann::json::array();
  for (const PersonSpec& s : d.identities) info["identities"].push_back(detail::spec_to_json(s));
  detail::write_file(dir / "dataset.json", info.dump(2) + "\n");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset d;
  nlohmann::json info;
  try {
    info = nlohmann::json::parse(detail::read_file(dir / "dataset.json"));
    d.vocab = Vocab::from_json(nlohmann::json::parse(detail::read_file(dir / "vocab.json")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset metadata: ") + e.what());
  }
  const auto height = info.at("image_height").get<std::size_t>();
  const auto width = info.at("image_width").get<std::size_t>();
  const auto num_images = info.at("num_images").get<std::size_t>();
  d.scheme = scheme_from_name(info.at("label_scheme").get<std::string>());
  d.num_classes = info.at("num_classes").get<std::size_t>();
  d.max_text_len = info.at("max_text_len").get<std::size_t>();
  if (d.num_classes == 0 || d.num_classes > 256) throw FormatError("num_classes out of range");
  for (const auto& j : info.at("identities")) {
    PersonSpec s = detail::spec_from_json(j);
    if (s.identity_id != static_cast<int>(d.identities.size())) {
      throw FormatError("identities must be listed in id order");
    }
    d.identities.push_back(s);
  }

  d.images.resize(num_images);
  std::vector<bool> loaded(num_images, false);
  std::istringstream meta(detail::read_file(dir / "meta.jsonl"));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("meta.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto image_file = rec.at("image").get<std::string>();
    std::size_t index = 0;
    if (std::sscanf(image_file.c_str(), "images/%zu.ppm", &index) != 1 || index >= num_images) {
      throw FormatError("meta.jsonl line " + std::to_string(line_no) + ": bad image reference " + image_file);
    }
    const int identity = rec.at("identity").get<int>();
    if (identity < 0 || static_cast<std::size_t>(identity) >= d.identities.size()) {
      throw RangeError("meta.jsonl line " + std::to_string(line_no) + ": identity out of range");
    }
    PersonImage& img = d.images[index];
    if (!loaded[index]) {
      img.identity_id = identity;
      img.image = read_ppm(dir / image_file);
      img.parse_map = read_pgm(dir / rec.at("parse").get<std::string>(), d.num_classes);
      if (img.image.height != height || img.image.width != width ||
          img.parse_map.height != height || img.parse_map.width != width) {
        throw FormatError(image_file + ": size does not match dataset metadata");
      }
      loaded[index] = true;
    } else if (img.identity_id != identity) {
      throw FormatError("meta.jsonl line " + std::to_string(line_no) + ": identity disagrees with earlier record");
    }
    Caption c;
    c.image_index = index;
    c.text = rec.at("text").get<std::string>();
    c.token_ids = tokenize(c.text, d.vocab, d.max_text_len);
    d.captions.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < num_images; ++i) {
    if (!loaded[i]) throw FormatError("image " + std::to_string(i) + " has no caption record");
  }
  return d;
}

}  // namespace bimatch::synthdata
