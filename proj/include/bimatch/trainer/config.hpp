// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value training configuration. A file may start from a named
// profile ("desk" or "paper") and override individual keys; unknown or
// repeated keys are errors.

#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bimatch/common.hpp"
#include "bimatch/crossmodal.hpp"
#include "bimatch/encoders.hpp"

namespace bimatch::trainer {

struct TrainConfig {
  std::string profile = "desk";

  // encoders
  std::size_t hidden_size = 64;
  std::size_t encoder_layers = 2;
  std::size_t encoder_heads = 4;
  std::size_t patch_size = 8;
  std::size_t text_tokens = 48;
  std::size_t image_height = 64;
  std::size_t image_width = 32;
  std::string text_global = "sos";

  // cross-modal encoder
  std::size_t cme_layers = 2;
  std::size_t cme_heads = 4;

  // optimization
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  double base_lr = 5e-4;
  double warmup_start_lr = 5e-5;
  std::size_t warmup_epochs = 2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // objective
  double temperature = 0.02;
  double sdm_epsilon = 1e-8;
  double m_t = 0.15;
  double alpha = 1.0;
  double m_p = 0.15;
  double beta = 1.0;
  std::string mim_method = "semantic";
  bool mlm_enabled = true;

  // data and run
  std::string dataset = "data";
  std::string output_dir = "runs/default";
  std::size_t test_identities = 16;
  bool flip_augment = true;
  std::uint64_t seed = 0;

  crossmodal::MimMethod mim() const { return crossmodal::mim_method_from_name(mim_method); }

  void validate() const;
};

inline TrainConfig desk_profile() { return TrainConfig{}; }

// Hyperparameter table values of the full-size model. Runnable, but slow.
inline TrainConfig paper_profile() {
  TrainConfig c;
  c.profile = "paper";
  c.hidden_size = 512;
  c.encoder_layers = 12;
  c.encoder_heads = 8;
  c.patch_size = 16;
  c.text_tokens = 77;
  c.image_height = 384;
  c.image_width = 128;
  c.cme_layers = 4;
  c.cme_heads = 8;
  c.batch_size = 32;
  c.epochs = 60;
  c.warmup_epochs = 5;
  c.base_lr = 1e-5;
  c.warmup_start_lr = 1e-6;
  return c;
}

inline TrainConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "' (desk|paper)");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// One accessor per key: a setter from text and a canonical printer.
struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class M>
Field field(M TrainConfig::*member, const std::string& key) {
  Field f;
  f.set = [member, key](TrainConfig& c, const std::string& v) {
    using T = std::remove_cvref_t<decltype(c.*member)>;
    if constexpr (std::is_same_v<T, std::string>) c.*member = v;
    else if constexpr (std::is_same_v<T, bool>) c.*member = parse_bool(key, v);
    else c.*member = parse_number<T>(key, v);
  };
  f.get = [member](const TrainConfig& c) {
    using T = std::remove_cvref_t<decltype(c.*member)>;
    if constexpr (std::is_same_v<T, std::string>) return c.*member;
    else if constexpr (std::is_same_v<T, bool>) return std::string(c.*member ? "true" : "false");
    else if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
    else return std::to_string(c.*member);
  };
  return f;
}

}  // namespace detail

// Ordered key table; the order is the canonical serialization order.
inline const std::vector<std::pair<std::string, detail::Field>>& config_fields() {
  using detail::field;
  static const std::vector<std::pair<std::string, detail::Field>> fields = [] {
    std::vector<std::pair<std::string, detail::Field>> f;
    auto add = [&f](const std::string& k, detail::Field x) { f.emplace_back(k, std::move(x)); };
    add("hidden_size", field(&TrainConfig::hidden_size, "hidden_size"));
    add("encoder_layers", field(&TrainConfig::encoder_layers, "encoder_layers"));
    add("encoder_heads", field(&TrainConfig::encoder_heads, "encoder_heads"));
    add("patch_size", field(&TrainConfig::patch_size, "patch_size"));
    add("text_tokens", field(&TrainConfig::text_tokens, "text_tokens"));
    add("image_height", field(&TrainConfig::image_height, "image_height"));
    add("image_width", field(&TrainConfig::image_width, "image_width"));
    add("text_global", field(&TrainConfig::text_global, "text_global"));
    add("cme_layers", field(&TrainConfig::cme_layers, "cme_layers"));
    add("cme_heads", field(&TrainConfig::cme_heads, "cme_heads"));
    add("batch_size", field(&TrainConfig::batch_size, "batch_size"));
    add("epochs", field(&TrainConfig::epochs, "epochs"));
    add("base_lr", field(&TrainConfig::base_lr, "base_lr"));
    add("warmup_start_lr", field(&TrainConfig::warmup_start_lr, "warmup_start_lr"));
    add("warmup_epochs", field(&TrainConfig::warmup_epochs, "warmup_epochs"));
    add("adam_beta1", field(&TrainConfig::adam_beta1, "adam_beta1"));
    add("adam_beta2", field(&TrainConfig::adam_beta2, "adam_beta2"));
    add("adam_eps", field(&TrainConfig::adam_eps, "adam_eps"));
    add("temperature", field(&TrainConfig::temperature, "temperature"));
    add("sdm_epsilon", field(&TrainConfig::sdm_epsilon, "sdm_epsilon"));
    add("m_t", field(&TrainConfig::m_t, "m_t"));
    add("alpha", field(&TrainConfig::alpha, "alpha"));
    add("m_p", field(&TrainConfig::m_p, "m_p"));
    add("beta", field(&TrainConfig::beta, "beta"));
    add("mim_method", field(&TrainConfig::mim_method, "mim_method"));
    add("mlm_enabled", field(&TrainConfig::mlm_enabled, "mlm_enabled"));
    add("dataset", field(&TrainConfig::dataset, "dataset"));
    add("output_dir", field(&TrainConfig::output_dir, "output_dir"));
    add("test_identities", field(&TrainConfig::test_identities, "test_identities"));
    add("flip_augment", field(&TrainConfig::flip_augment, "flip_augment"));
    add("seed", field(&TrainConfig::seed, "seed"));
    return f;
  }();
  return fields;
}

inline void TrainConfig::validate() const {
  auto rate = [](const char* k, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(k) + " must lie in [0, 1]");
  };
  rate("m_t", m_t);
  rate("m_p", m_p);
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(sdm_epsilon > 0.0)) throw ConfigError("sdm_epsilon must be positive");
  if (!(base_lr > 0.0) || !(warmup_start_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (epochs == 0 || warmup_epochs >= epochs) throw ConfigError("need warmup_epochs < epochs");
  if (cme_heads == 0 || hidden_size % cme_heads != 0) throw ConfigError("hidden_size must be a multiple of cme_heads");
  if (test_identities == 0) throw ConfigError("test_identities must be positive");
  encoders::text_global_from_name(text_global);
  mim();
}

// Canonical text of every key, in table order. Stable across runs.
inline std::string canonical_text(const TrainConfig& c) {
  std::string out = "profile = " + c.profile + "\n";
  for (const auto& [k, f] : config_fields()) out += k + " = " + f.get(c) + "\n";
  return out;
}

// Settings identity: the canonical text without the output location.
inline std::string config_hash(const TrainConfig& c) {
  TrainConfig copy = c;
  copy.output_dir.clear();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(copy))));
  return buf;
}

inline void set_key(TrainConfig& c, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : config_fields()) {
    if (k == key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

// Parses key=value lines. '#' starts a comment; "profile" selects the base
// values and may appear anywhere in the file.
inline TrainConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, int> seen;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  std::string profile = "desk";
  while (std::getline(is, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (seen.count(key)) {
      throw ConfigError("config key '" + key + "' repeated on lines " + std::to_string(seen[key]) + " and " +
                        std::to_string(line_no));
    }
    seen[key] = line_no;
    if (key == "profile") profile = value;
    else entries.emplace_back(std::move(key), std::move(value));
  }
  TrainConfig c = profile_by_name(profile);
  for (const auto& [k, v] : entries) set_key(c, k, v);
  c.validate();
  return c;
}

// A parsed config together with the exact text it came from.
struct LoadedConfig {
  TrainConfig config;
  std::string source;
};

inline LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return {parse_config(text), text};
}

inline LoadedConfig from_config(const TrainConfig& c) {
  c.validate();
  return {c, canonical_text(c)};
}

}  // namespace bimatch::trainer
