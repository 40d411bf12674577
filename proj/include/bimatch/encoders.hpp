// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dual encoders: a patch-embedding ViT for images and a token-embedding
// transformer for captions. Both return batches of token sequences stacked
// row-wise, [batch * seq, d].

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "bimatch/common.hpp"
#include "bimatch/image.hpp"
#include "bimatch/nn.hpp"
#include "bimatch/synthdata/vocab.hpp"

namespace bimatch::encoders {

using numkernel::Tensor;
using nn::NamedTensors;

enum class TextGlobal { sos, eos };

inline const char* text_global_name(TextGlobal g) { return g == TextGlobal::sos ? "sos" : "eos"; }

inline TextGlobal text_global_from_name(const std::string& s) {
  if (s == "sos") return TextGlobal::sos;
  if (s == "eos") return TextGlobal::eos;
  throw ConfigError("text global position must be sos or eos, got '" + s + "'");
}

struct EncoderConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t patch_size = 8;
  std::size_t max_text_len = 32;
  std::size_t vocab_size = 0;
  std::size_t image_height = 64;
  std::size_t image_width = 32;
  TextGlobal text_global = TextGlobal::sos;

  std::size_t grid_rows() const { return image_height / patch_size; }
  std::size_t grid_cols() const { return image_width / patch_size; }
  std::size_t num_image_patches() const { return grid_rows() * grid_cols(); }
  std::size_t num_text_tokens() const { return max_text_len; }
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }

  void validate() const {
    if (hidden_dim == 0 || num_heads == 0 || hidden_dim % num_heads != 0) {
      throw ConfigError("hidden_dim must be a positive multiple of num_heads");
    }
    if (num_layers == 0) throw ConfigError("encoders need at least one layer");
    if (patch_size == 0 || image_height % patch_size != 0 || image_width % patch_size != 0) {
      throw ConfigError("image size " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                        " not divisible by patch size " + std::to_string(patch_size));
    }
    if (max_text_len < 2) throw ConfigError("max_text_len must be at least 2");
    if (vocab_size < 5) throw ConfigError("vocab_size must cover the special tokens and one word");
  }
};

// A batch of encoded sequences. For text, key_valid marks SOS..EOS and eos
// holds each sequence's EOS index; both are empty for images, whose CLS sits
// at index 0 of every sequence.
struct EncoderOutput {
  Tensor tokens;
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::uint8_t> key_valid;
  std::vector<std::size_t> eos;

  std::size_t row(std::size_t b, std::size_t i) const { return b * seq + i; }
  std::size_t dim() const { return tokens.cols(); }
};

// Non-overlapping P x P x 3 patches in raster order; within a patch the
// values run over (row, column, channel).
inline std::vector<double> patchify(const RgbImage& img, std::size_t p) {
  if (p == 0 || img.height % p != 0 || img.width % p != 0) {
    throw ShapeError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                     " not divisible by patch size " + std::to_string(p));
  }
  const std::size_t gr = img.height / p, gc = img.width / p;
  std::vector<double> out;
  out.reserve(gr * gc * 3 * p * p);
  for (std::size_t r = 0; r < gr; ++r)
    for (std::size_t c = 0; c < gc; ++c)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) out.push_back(img.value(r * p + y, c * p + x, ch));
  return out;
}

class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const std::size_t d = cfg.hidden_dim;
    patch_embed_ = nn::Linear(cfg.patch_dim(), d, rng);
    cls_ = nn::init_param({1, d}, rng);
    pos_ = nn::init_param({cfg.num_image_patches() + 1, d}, rng);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) blocks_.emplace_back(d, cfg.num_heads, rng);
    final_ln_ = nn::LayerNorm(d);
  }

  const EncoderConfig& config() const { return cfg_; }
  std::size_t seq_len() const { return cfg_.num_image_patches() + 1; }

  EncoderOutput encode(const std::vector<const RgbImage*>& images) const {
    if (images.empty()) throw InvalidArgument("encode_image: empty batch");
    const std::size_t n = cfg_.num_image_patches(), pd = cfg_.patch_dim();
    std::vector<double> raw;
    raw.reserve(images.size() * n * pd);
    for (const RgbImage* img : images) {
      if (img->height != cfg_.image_height || img->width != cfg_.image_width) {
        throw ShapeError("encode_image: expected " + std::to_string(cfg_.image_height) + "x" +
                         std::to_string(cfg_.image_width) + " image, got " + std::to_string(img->height) +
                         "x" + std::to_string(img->width));
      }
      const auto p = patchify(*img, cfg_.patch_size);
      raw.insert(raw.end(), p.begin(), p.end());
    }
    return encode_patches(Tensor::matrix(images.size() * n, pd, std::move(raw)), images.size());
  }

  EncoderOutput encode(const RgbImage& image) const { return encode(std::vector<const RgbImage*>{&image}); }

  // Core path on pre-patchified rows [batch * N_v, 3P^2]; differentiable in
  // `patches` as well as in the parameters.
  EncoderOutput encode_patches(const Tensor& patches, std::size_t batch) const {
    using namespace numkernel;
    const std::size_t n = cfg_.num_image_patches(), seq = n + 1;
    if (patches.rank() != 2 || patches.rows() != batch * n || patches.cols() != cfg_.patch_dim()) {
      throw ShapeError("encode_patches: expected [" + std::to_string(batch * n) + ", " +
                       std::to_string(cfg_.patch_dim()) + "], got " + shape_str(patches.shape()));
    }
    const Tensor emb = patch_embed_(patches);
    // rows 0..B*n-1 are patches, row B*n is CLS
    std::vector<std::size_t> order, pos_idx;
    order.reserve(batch * seq);
    pos_idx.reserve(batch * seq);
    for (std::size_t b = 0; b < batch; ++b) {
      order.push_back(batch * n);
      for (std::size_t i = 0; i < n; ++i) order.push_back(b * n + i);
      for (std::size_t i = 0; i < seq; ++i) pos_idx.push_back(i);
    }
    Tensor x = add(gather_rows(concat_rows({emb, cls_}), order), gather_rows(pos_, pos_idx));
    for (const auto& blk : blocks_) x = blk(x, batch, seq);
    EncoderOutput out;
    out.tokens = final_ln_(x);
    out.batch = batch;
    out.seq = seq;
    return out;
  }

  // Positional table, exposed for probes that need to zero it.
  Tensor& positional() { return pos_; }

  NamedTensors params() const {
    NamedTensors out;
    nn::add_params(out, "patch_embed.", patch_embed_.params());
    out.emplace_back("cls", cls_);
    out.emplace_back("pos", pos_);
    for (std::size_t l = 0; l < blocks_.size(); ++l)
      nn::add_params(out, "blocks." + std::to_string(l) + ".", blocks_[l].params());
    nn::add_params(out, "final_ln.", final_ln_.params());
    return out;
  }

 private:
  EncoderConfig cfg_;
  nn::Linear patch_embed_;
  Tensor cls_, pos_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_ln_;
};

class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const std::size_t d = cfg.hidden_dim;
    token_embed_ = nn::init_param({cfg.vocab_size, d}, rng);
    pos_ = nn::init_param({cfg.max_text_len, d}, rng);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) blocks_.emplace_back(d, cfg.num_heads, rng);
    final_ln_ = nn::LayerNorm(d);
  }

  const EncoderConfig& config() const { return cfg_; }

  // Validates each caption and pads it to max_text_len. Captions may be
  // shorter than max_text_len; the padding never reaches attention. With
  // trim_padding the batch is padded only to its longest caption, which
  // leaves every valid row unchanged.
  EncoderOutput encode(const std::vector<std::vector<int>>& captions,
                       const synthdata::SpecialIds& special = {}, bool trim_padding = false) const {
    if (captions.empty()) throw InvalidArgument("encode_text: empty batch");
    std::vector<std::size_t> valid_len;
    for (const auto& ids : captions) {
      if (ids.size() > cfg_.max_text_len) {
        throw ShapeError("encode_text: sequence of " + std::to_string(ids.size()) +
                         " tokens exceeds max_text_len " + std::to_string(cfg_.max_text_len));
      }
      valid_len.push_back(synthdata::validate_token_ids(ids, special, cfg_.vocab_size) + 1);
    }
    const std::size_t len =
        trim_padding ? *std::max_element(valid_len.begin(), valid_len.end()) : cfg_.max_text_len;
    std::vector<int> flat;
    flat.reserve(captions.size() * len);
    for (const auto& ids : captions) {
      const std::size_t keep = std::min(ids.size(), len);
      flat.insert(flat.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));
      flat.resize(flat.size() + (len - keep), special.pad);
    }
    return encode_tokens(flat, captions.size(), valid_len, len);
  }

  // Unchecked core: `ids` is [batch * len] with len defaulting to
  // max_text_len; only the first valid_len[b] positions of sequence b act as
  // attention keys, whatever ids sit after them.
  EncoderOutput encode_tokens(const std::vector<int>& ids, std::size_t batch,
                              const std::vector<std::size_t>& valid_len, std::size_t len = 0) const {
    using namespace numkernel;
    if (len == 0) len = cfg_.max_text_len;
    if (len > cfg_.max_text_len) throw ShapeError("encode_tokens: sequence longer than max_text_len");
    if (ids.size() != batch * len || valid_len.size() != batch) {
      throw ShapeError("encode_tokens: id buffer does not match batch x sequence length");
    }
    std::vector<std::size_t> tok_idx(ids.size()), pos_idx(ids.size());
    EncoderOutput out;
    out.key_valid.assign(ids.size(), 0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (valid_len[b] < 2 || valid_len[b] > len) throw RangeError("encode_tokens: bad valid length");
      out.eos.push_back(valid_len[b] - 1);
      for (std::size_t i = 0; i < len; ++i) {
        const int t = ids[b * len + i];
        if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) {
          throw RangeError("token id " + std::to_string(t) + " outside vocabulary");
        }
        tok_idx[b * len + i] = static_cast<std::size_t>(t);
        pos_idx[b * len + i] = i;
        out.key_valid[b * len + i] = i < valid_len[b];
      }
    }
    Tensor x = add(gather_rows(token_embed_, tok_idx), gather_rows(pos_, pos_idx));
    for (const auto& blk : blocks_) x = blk(x, batch, len, out.key_valid);
    out.tokens = final_ln_(x);
    out.batch = batch;
    out.seq = len;
    return out;
  }

  Tensor& token_embedding() { return token_embed_; }

  NamedTensors params() const {
    NamedTensors out;
    out.emplace_back("token_embed", token_embed_);
    out.emplace_back("pos", pos_);
    for (std::size_t l = 0; l < blocks_.size(); ++l)
      nn::add_params(out, "blocks." + std::to_string(l) + ".", blocks_[l].params());
    nn::add_params(out, "final_ln.", final_ln_.params());
    return out;
  }

 private:
  EncoderConfig cfg_;
  Tensor token_embed_, pos_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_ln_;
};

// Unnormalized global rows: CLS for images, SOS or EOS for text.
struct GlobalEmbeddings {
  Tensor image;  // [B, d]
  Tensor text;   // [B, d]
};

inline Tensor image_global(const EncoderOutput& img) {
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < img.batch; ++b) idx.push_back(img.row(b, 0));
  return numkernel::gather_rows(img.tokens, idx);
}

inline Tensor text_global(const EncoderOutput& txt, TextGlobal which) {
  if (which == TextGlobal::eos && txt.eos.size() != txt.batch) {
    throw InvalidArgument("text_global: EOS positions unknown");
  }
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < txt.batch; ++b)
    idx.push_back(txt.row(b, which == TextGlobal::sos ? 0 : txt.eos[b]));
  return numkernel::gather_rows(txt.tokens, idx);
}

inline GlobalEmbeddings global_embeddings(const EncoderOutput& img, const EncoderOutput& txt,
                                          TextGlobal which = TextGlobal::sos) {
  return {image_global(img), text_global(txt, which)};
}

// L2-normalized global features.
inline GlobalEmbeddings global_features(const EncoderOutput& img, const EncoderOutput& txt,
                                        TextGlobal which = TextGlobal::sos) {
  return {numkernel::l2_normalize_rows(image_global(img)),
          numkernel::l2_normalize_rows(text_global(txt, which))};
}

// Text-to-image similarity [Q, G] of normalized features.
inline Tensor similarity(const Tensor& text_features, const Tensor& image_features) {
  return numkernel::matmul(text_features, numkernel::transpose(image_features));
}

}  // namespace bimatch::encoders
