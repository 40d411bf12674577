// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// The trained model: two encoders, the training-only cross-modal encoder and
// the shared identity classifier.

#pragma once

#include "bimatch/crossmodal.hpp"
#include "bimatch/encoders.hpp"
#include "bimatch/nn.hpp"
#include "bimatch/synthdata/dataset.hpp"
#include "bimatch/trainer/config.hpp"

namespace bimatch::trainer {

using numkernel::NamedTensors;
using numkernel::Tensor;

inline encoders::EncoderConfig encoder_config(const TrainConfig& c, const synthdata::Dataset& d) {
  encoders::EncoderConfig e;
  e.hidden_dim = c.hidden_size;
  e.num_layers = c.encoder_layers;
  e.num_heads = c.encoder_heads;
  e.patch_size = c.patch_size;
  e.max_text_len = c.text_tokens;
  e.vocab_size = d.vocab.size();
  e.image_height = c.image_height;
  e.image_width = c.image_width;
  e.text_global = encoders::text_global_from_name(c.text_global);
  e.validate();
  if (d.max_text_len > c.text_tokens) {
    throw ConfigError("dataset captions hold " + std::to_string(d.max_text_len) + " tokens but text_tokens is " +
                      std::to_string(c.text_tokens));
  }
  return e;
}

inline crossmodal::CmeConfig cme_config(const TrainConfig& c, const synthdata::Dataset& d) {
  crossmodal::CmeConfig m;
  m.hidden_dim = c.hidden_size;
  m.num_layers = c.cme_layers;
  m.num_heads = c.cme_heads;
  m.vocab_size = d.vocab.size();
  m.num_classes = d.num_classes;
  m.patch_size = c.patch_size;
  m.mim_method = c.mim();
  return m;
}

struct Model {
  encoders::EncoderConfig enc_cfg;
  encoders::ImageEncoder image;
  encoders::TextEncoder text;
  crossmodal::CrossModalEncoder cme;
  Tensor w_id;  // [train identities, d]

  // Each part draws from its own stream so that re-drawing one part leaves
  // the others untouched.
  Model(const TrainConfig& c, const synthdata::Dataset& d, std::size_t num_train_ids)
      : enc_cfg(encoder_config(c, d)) {
    Rng ri(derive_seed(c.seed, 1)), rt(derive_seed(c.seed, 2)), rc(derive_seed(c.seed, 3)),
        rw(derive_seed(c.seed, 4));
    image = encoders::ImageEncoder(enc_cfg, ri);
    text = encoders::TextEncoder(enc_cfg, rt);
    cme = crossmodal::CrossModalEncoder(cme_config(c, d), rc);
    w_id = nn::init_param({num_train_ids, c.hidden_size}, rw);
  }

  NamedTensors params() const {
    NamedTensors out;
    nn::add_params(out, "image.", image.params());
    nn::add_params(out, "text.", text.params());
    nn::add_params(out, "cme.", cme.params());
    out.emplace_back("w_id", w_id);
    return out;
  }

  // Parameters that take part in retrieval.
  NamedTensors inference_params() const {
    NamedTensors out;
    nn::add_params(out, "image.", image.params());
    nn::add_params(out, "text.", text.params());
    return out;
  }

  // Parameters used only while training.
  NamedTensors training_only_params() const {
    NamedTensors out;
    nn::add_params(out, "cme.", cme.params());
    out.emplace_back("w_id", w_id);
    return out;
  }
};

}  // namespace bimatch::trainer
