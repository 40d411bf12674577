// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Token masking and the cross-modal encoder (CME). The CME fuses the clean
// tokens of one modality with the masked tokens of the other and predicts
// what was masked. It exists only for training; retrieval never calls it.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bimatch/common.hpp"
#include "bimatch/encoders.hpp"
#include "bimatch/nn.hpp"
#include "bimatch/synthdata/vocab.hpp"

namespace bimatch::crossmodal {

using encoders::EncoderOutput;
using numkernel::Tensor;
using nn::NamedTensors;

enum class MimMethod { none, semantic, pixel, patch, feature };

inline const char* mim_method_name(MimMethod m) {
  switch (m) {
    case MimMethod::none: return "none";
    case MimMethod::semantic: return "semantic";
    case MimMethod::pixel: return "pixel";
    case MimMethod::patch: return "patch";
    case MimMethod::feature: return "feature";
  }
  return "none";
}

inline MimMethod mim_method_from_name(const std::string& s) {
  for (MimMethod m : {MimMethod::none, MimMethod::semantic, MimMethod::pixel, MimMethod::patch,
                      MimMethod::feature})
    if (s == mim_method_name(m)) return m;
  throw ConfigError("unknown mim_method '" + s + "' (none|semantic|pixel|patch|feature)");
}

struct CmeConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  std::size_t vocab_size = 0;
  std::size_t num_classes = 8;
  std::size_t patch_size = 8;
  // Longest fused sequence accepted; 0 means unlimited.
  std::size_t max_len = 0;
  MimMethod mim_method = MimMethod::semantic;

  // Output width of the MIM head for the configured method.
  std::size_t mim_out_dim() const {
    switch (mim_method) {
      case MimMethod::semantic: return num_classes;
      case MimMethod::pixel: return 3 * patch_size * patch_size;
      case MimMethod::patch: return 1;
      case MimMethod::feature: return hidden_dim;
      case MimMethod::none: return num_classes;
    }
    return num_classes;
  }
};

// ---------------------------------------------------------------- masking

struct MaskedText {
  std::vector<int> ids;                // copy with masked positions set to MASK
  std::vector<std::size_t> positions;  // ascending
  std::vector<int> true_ids;           // original id at each position
};

// Each content position (strictly between SOS and EOS) is masked with
// probability m_t; if none is drawn, one is picked uniformly.
inline MaskedText mask_text(const std::vector<int>& ids, double m_t, Rng& rng,
                            const synthdata::SpecialIds& special = {}) {
  if (!(m_t >= 0.0 && m_t <= 1.0)) throw RangeError("mask_text: rate outside [0, 1]");
  std::size_t eos = 1;
  while (eos < ids.size() && ids[eos] != special.eos) ++eos;
  if (ids.empty() || ids[0] != special.sos || eos >= ids.size()) {
    throw InvalidArgument("mask_text: malformed token sequence");
  }
  if (eos < 2) throw InvalidArgument("mask_text: no maskable positions");
  MaskedText out;
  out.ids = ids;
  for (std::size_t i = 1; i < eos; ++i)
    if (rng.bernoulli(m_t)) out.positions.push_back(i);
  if (out.positions.empty()) out.positions.push_back(1 + rng.below(eos - 1));
  for (std::size_t i : out.positions) {
    out.true_ids.push_back(ids[i]);
    out.ids[i] = special.mask;
  }
  return out;
}

// Non-CLS positions 1..num_patches, each kept for masking with probability
// m_p, with the same one-position floor as text.
inline std::vector<std::size_t> draw_image_mask(std::size_t num_patches, double m_p, Rng& rng) {
  if (!(m_p >= 0.0 && m_p <= 1.0)) throw RangeError("mask_image: rate outside [0, 1]");
  if (num_patches == 0) throw InvalidArgument("mask_image: no patches");
  std::vector<std::size_t> pos;
  for (std::size_t i = 1; i <= num_patches; ++i)
    if (rng.bernoulli(m_p)) pos.push_back(i);
  if (pos.empty()) pos.push_back(1 + rng.below(num_patches));
  return pos;
}

// Masked positions of a whole batch. Text positions index the text sequence
// (SOS = 0); image positions index the image sequence (CLS = 0).
struct MaskPlan {
  double m_t = 0.0, m_p = 0.0;
  std::vector<std::size_t> text_batch, text_pos;
  std::vector<int> text_true;
  std::vector<std::vector<int>> masked_captions;
  std::vector<std::size_t> image_batch, image_pos;
  std::vector<int> image_true;  // semantic class of each masked patch, when known
};

inline void plan_text(MaskPlan& plan, const std::vector<std::vector<int>>& captions, double m_t,
                      Rng& rng, const synthdata::SpecialIds& special = {}) {
  plan.m_t = m_t;
  for (std::size_t b = 0; b < captions.size(); ++b) {
    MaskedText mt = mask_text(captions[b], m_t, rng, special);
    for (std::size_t k = 0; k < mt.positions.size(); ++k) {
      plan.text_batch.push_back(b);
      plan.text_pos.push_back(mt.positions[k]);
      plan.text_true.push_back(mt.true_ids[k]);
    }
    plan.masked_captions.push_back(std::move(mt.ids));
  }
}

// `patch_labels[b]` holds the per-patch classes of image b in raster order,
// or is empty when the semantic labels are not needed.
inline void plan_image(MaskPlan& plan, std::size_t batch, std::size_t num_patches, double m_p, Rng& rng,
                       const std::vector<std::vector<int>>& patch_labels = {}) {
  plan.m_p = m_p;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p : draw_image_mask(num_patches, m_p, rng)) {
      plan.image_batch.push_back(b);
      plan.image_pos.push_back(p);
      if (!patch_labels.empty()) {
        if (patch_labels[b].size() != num_patches) {
          throw ShapeError("plan_image: patch label grid does not match patch count");
        }
        plan.image_true.push_back(patch_labels[b][p - 1]);
      }
    }
  }
}

// h^V with every planned row replaced by the shared mask embedding.
inline Tensor mask_image(const EncoderOutput& img, const Tensor& mask_embedding, const MaskPlan& plan) {
  std::vector<std::size_t> rows;
  rows.reserve(plan.image_pos.size());
  for (std::size_t k = 0; k < plan.image_pos.size(); ++k) {
    if (plan.image_pos[k] == 0 || plan.image_pos[k] >= img.seq) {
      throw RangeError("mask_image: position outside the patch range");
    }
    rows.push_back(img.row(plan.image_batch[k], plan.image_pos[k]));
  }
  return numkernel::replace_rows(img.tokens, mask_embedding, rows);
}

// ------------------------------------------------------------------ CME

// Output of one fused pass: per sample, `first_seq` rows of the first
// segment followed by the second segment.
struct CmeOutput {
  Tensor tokens;
  std::size_t batch = 0, seq = 0, first_seq = 0;

  std::size_t second_row(std::size_t b, std::size_t i) const { return b * seq + first_seq + i; }
};

class CrossModalEncoder {
 public:
  CrossModalEncoder() = default;
  CrossModalEncoder(const CmeConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.hidden_dim == 0 || cfg.num_heads == 0 || cfg.hidden_dim % cfg.num_heads != 0) {
      throw ConfigError("CME hidden size must be a positive multiple of its head count");
    }
    if (cfg.vocab_size == 0 || cfg.num_classes == 0) throw ConfigError("CME needs vocab and class sizes");
    const std::size_t d = cfg.hidden_dim;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) blocks_.emplace_back(d, cfg.num_heads, rng);
    final_ln_ = nn::LayerNorm(d);
    mlm_head_ = nn::MlpHead(d, cfg.vocab_size, rng);
    mim_head_ = nn::MlpHead(d, cfg.mim_out_dim(), rng);
    mask_embed_ = nn::init_param({1, d}, rng);
  }

  const CmeConfig& config() const { return cfg_; }
  const Tensor& mask_embedding() const { return mask_embed_; }
  std::size_t calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }

  // Full attention over [first ‖ second] per sample. Key flags default to
  // all-valid for a segment whose `valid` vector is empty.
  CmeOutput forward(const Tensor& first, std::size_t first_seq, const std::vector<std::uint8_t>& first_valid,
                    const Tensor& second, std::size_t second_seq,
                    const std::vector<std::uint8_t>& second_valid, std::size_t batch) const {
    using namespace numkernel;
    const std::size_t seq = first_seq + second_seq;
    if (cfg_.max_len && seq > cfg_.max_len) {
      throw RangeError("CME input of " + std::to_string(seq) + " tokens exceeds maximum " +
                       std::to_string(cfg_.max_len));
    }
    if (first.rows() != batch * first_seq || second.rows() != batch * second_seq) {
      throw ShapeError("CME segment rows do not match batch x sequence length");
    }
    ++calls_;
    std::vector<std::size_t> order;
    std::vector<std::uint8_t> valid;
    order.reserve(batch * seq);
    valid.reserve(batch * seq);
    const std::size_t offset = batch * first_seq;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < first_seq; ++i) {
        order.push_back(b * first_seq + i);
        valid.push_back(first_valid.empty() ? 1 : first_valid[b * first_seq + i]);
      }
      for (std::size_t i = 0; i < second_seq; ++i) {
        order.push_back(offset + b * second_seq + i);
        valid.push_back(second_valid.empty() ? 1 : second_valid[b * second_seq + i]);
      }
    }
    Tensor x = gather_rows(concat_rows({first, second}), order);
    for (const auto& blk : blocks_) x = blk(x, batch, seq, valid);
    return CmeOutput{final_ln_(x), batch, seq, first_seq};
  }

  // MLM pass: clean image tokens, then the masked caption's text tokens.
  CmeOutput mlm_pass(const EncoderOutput& image, const EncoderOutput& masked_text) const {
    return forward(image.tokens, image.seq, {}, masked_text.tokens, masked_text.seq, masked_text.key_valid,
                   image.batch);
  }

  // MIM pass: clean text tokens, then image tokens with masked rows replaced.
  CmeOutput mim_pass(const EncoderOutput& text, const Tensor& masked_image, std::size_t image_seq) const {
    return forward(text.tokens, text.seq, text.key_valid, masked_image, image_seq, {}, text.batch);
  }

  // Head applied only at the planned positions of the second segment.
  Tensor mlm_logits(const CmeOutput& out, const MaskPlan& plan) const {
    return mlm_head_(numkernel::gather_rows(out.tokens, second_rows(out, plan.text_batch, plan.text_pos)));
  }
  Tensor mim_logits(const CmeOutput& out, const MaskPlan& plan) const {
    return mim_head_(numkernel::gather_rows(out.tokens, second_rows(out, plan.image_batch, plan.image_pos)));
  }

  nn::MlpHead& mlm_head() { return mlm_head_; }
  nn::MlpHead& mim_head() { return mim_head_; }
  std::vector<nn::TransformerBlock>& blocks() { return blocks_; }

  NamedTensors params() const {
    NamedTensors out;
    for (std::size_t l = 0; l < blocks_.size(); ++l)
      nn::add_params(out, "blocks." + std::to_string(l) + ".", blocks_[l].params());
    nn::add_params(out, "final_ln.", final_ln_.params());
    nn::add_params(out, "mlm_head.", mlm_head_.params());
    if (cfg_.mim_method != MimMethod::none) nn::add_params(out, "mim_head.", mim_head_.params());
    out.emplace_back("mask_embed", mask_embed_);
    return out;
  }

 private:
  static std::vector<std::size_t> second_rows(const CmeOutput& out, const std::vector<std::size_t>& batch,
                                              const std::vector<std::size_t>& pos) {
    if (batch.empty()) throw InvalidArgument("CME head: empty mask set");
    std::vector<std::size_t> rows;
    rows.reserve(pos.size());
    for (std::size_t k = 0; k < pos.size(); ++k) {
      if (batch[k] >= out.batch || pos[k] >= out.seq - out.first_seq) {
        throw RangeError("CME head: masked position out of range");
      }
      rows.push_back(out.second_row(batch[k], pos[k]));
    }
    return rows;
  }

  CmeConfig cfg_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_ln_;
  nn::MlpHead mlm_head_, mim_head_;
  Tensor mask_embed_;
  mutable std::size_t calls_ = 0;
};

// Regression targets of the baseline MIM methods, one row per masked patch.
// `patches` is the patchified batch, [B * N_v, 3P^2].
inline Tensor pixel_targets(const std::vector<double>& patches, std::size_t num_patches, std::size_t patch_dim,
                            const MaskPlan& plan) {
  std::vector<double> out;
  out.reserve(plan.image_pos.size() * patch_dim);
  for (std::size_t k = 0; k < plan.image_pos.size(); ++k) {
    const std::size_t row = plan.image_batch[k] * num_patches + plan.image_pos[k] - 1;
    out.insert(out.end(), patches.begin() + static_cast<std::ptrdiff_t>(row * patch_dim),
               patches.begin() + static_cast<std::ptrdiff_t>((row + 1) * patch_dim));
  }
  return Tensor::matrix(plan.image_pos.size(), patch_dim, std::move(out));
}

// Mean over every pixel and channel of each masked patch.
inline Tensor patch_mean_targets(const std::vector<double>& patches, std::size_t num_patches,
                                 std::size_t patch_dim, const MaskPlan& plan) {
  std::vector<double> out;
  for (std::size_t k = 0; k < plan.image_pos.size(); ++k) {
    const std::size_t row = plan.image_batch[k] * num_patches + plan.image_pos[k] - 1;
    double s = 0.0;
    for (std::size_t j = 0; j < patch_dim; ++j) s += patches[row * patch_dim + j];
    out.push_back(s / static_cast<double>(patch_dim));
  }
  return Tensor::matrix(plan.image_pos.size(), 1, std::move(out));
}

// Pre-masking encoder embeddings at the masked positions, as constants.
inline Tensor feature_targets(const EncoderOutput& image, const MaskPlan& plan) {
  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < plan.image_pos.size(); ++k) rows.push_back(image.row(plan.image_batch[k], plan.image_pos[k]));
  numkernel::NoGradGuard guard;
  return numkernel::gather_rows(image.tokens, rows).detach();
}

}  // namespace bimatch::crossmodal
