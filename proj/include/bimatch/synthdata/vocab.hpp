// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Word-level vocabulary with four reserved ids. Special tokens are spelled
// with angle brackets, which the tokenizer never accepts as words, so the
// mask id cannot come out of tokenizing text.

#pragma once

#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimatch/common.hpp"

namespace bimatch::synthdata {

struct SpecialIds {
  int pad = 0;
  int sos = 1;
  int eos = 2;
  int mask = 3;
};

class Vocab {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kSos = "<sos>";
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kMask = "<mask>";

  Vocab() : Vocab(std::vector<std::string>{}) {}

  // Ids: pad=0, sos=1, eos=2, mask=3, then `words` in the given order.
  explicit Vocab(const std::vector<std::string>& words) {
    for (std::string_view s : {kPad, kSos, kEos, kMask}) add(std::string(s));
    for (const std::string& w : words) {
      if (w.empty() || w.front() == '<') throw InvalidArgument("invalid vocabulary word '" + w + "'");
      if (ids_.count(w)) throw InvalidArgument("duplicate vocabulary word '" + w + "'");
      add(w);
    }
  }

  std::size_t size() const { return words_.size(); }
  const SpecialIds& special() const { return special_; }
  const std::string& word(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
      throw RangeError("token id " + std::to_string(id) + " outside vocabulary");
    }
    return words_[static_cast<std::size_t>(id)];
  }
  bool contains(const std::string& w) const { return ids_.count(w) != 0; }
  int id(const std::string& w) const {
    auto it = ids_.find(w);
    if (it == ids_.end() || w.front() == '<') throw InvalidArgument("unknown word '" + w + "'");
    return it->second;
  }
  const std::vector<std::string>& words() const { return words_; }

  nlohmann::json to_json() const {
    return {{"tokens", words_},
            {"special",
             {{"pad", special_.pad}, {"sos", special_.sos}, {"eos", special_.eos}, {"mask", special_.mask}}}};
  }

  static Vocab from_json(const nlohmann::json& j) {
    const auto tokens = j.at("tokens").get<std::vector<std::string>>();
    if (tokens.size() < 4 || tokens[0] != kPad || tokens[1] != kSos || tokens[2] != kEos ||
        tokens[3] != kMask) {
      throw FormatError("vocab.json: special tokens missing or out of order");
    }
    return Vocab(std::vector<std::string>(tokens.begin() + 4, tokens.end()));
  }

  bool operator==(const Vocab& o) const { return words_ == o.words_; }

 private:
  void add(const std::string& w) {
    ids_[w] = static_cast<int>(words_.size());
    words_.push_back(w);
  }

  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
  SpecialIds special_;
};

inline std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

// [SOS] + word ids + [EOS], padded with [PAD] to max_len.
inline std::vector<int> tokenize(const std::string& text, const Vocab& vocab, std::size_t max_len) {
  const auto words = split_words(text);
  if (max_len < 2 || words.size() > max_len - 2) {
    throw RangeError("caption of " + std::to_string(words.size()) + " words overflows max_len " +
                     std::to_string(max_len));
  }
  std::vector<int> ids;
  ids.reserve(max_len);
  ids.push_back(vocab.special().sos);
  for (const auto& w : words) ids.push_back(vocab.id(w));
  ids.push_back(vocab.special().eos);
  ids.resize(max_len, vocab.special().pad);
  return ids;
}

// Checks SOS first, exactly one EOS, only PAD after it, and ids in range.
// Returns the EOS position.
inline std::size_t validate_token_ids(const std::vector<int>& ids, const SpecialIds& sp,
                                      std::size_t vocab_size) {
  if (ids.size() < 2 || ids[0] != sp.sos) throw InvalidArgument("token sequence must start with SOS");
  std::size_t eos = ids.size();
  for (std::size_t i = 1; i < ids.size(); ++i) {
    const int t = ids[i];
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
      throw RangeError("token id " + std::to_string(t) + " outside vocabulary");
    }
    if (eos == ids.size()) {
      if (t == sp.eos) eos = i;
      else if (t == sp.sos || t == sp.pad) throw InvalidArgument("SOS/PAD before EOS");
    } else if (t != sp.pad) {
      throw InvalidArgument("non-PAD token after EOS");
    }
  }
  if (eos == ids.size()) throw InvalidArgument("token sequence has no EOS");
  return eos;
}

inline std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  const std::size_t eos = validate_token_ids(ids, vocab.special(), vocab.size());
  std::string out;
  for (std::size_t i = 1; i < eos; ++i) {
    if (i > 1) out += ' ';
    out += vocab.word(ids[i]);
  }
  return out;
}

}  // namespace bimatch::synthdata
