// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient checks over every loss and every trainable
// block, each on a number of small random instances.

#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "bimatch/crossmodal.hpp"
#include "bimatch/encoders.hpp"
#include "bimatch/losses.hpp"
#include "bimatch/numkernel.hpp"

namespace bimatch::trainer {

struct GradCase {
  std::string name;
  std::size_t instances = 0;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  double seconds = 0.0;
};

inline constexpr double kGradTolerance = 1e-4;

namespace detail {

using numkernel::Tensor;

inline Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = scale * rng.normal();
  return Tensor::matrix(r, c, std::move(v));
}

inline std::vector<int> random_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<int> out(n);
  for (int& y : out) y = static_cast<int>(rng.below(k));
  return out;
}

// Small model shared by the block checks: d=8, two heads, 8x4 images cut
// into two 4x4 patches, six-token captions over ten ids.
struct TinyModel {
  encoders::EncoderConfig ecfg;
  crossmodal::CmeConfig ccfg;
  encoders::ImageEncoder image;
  encoders::TextEncoder text;
  crossmodal::CrossModalEncoder cme;

  explicit TinyModel(Rng& rng) {
    ecfg.hidden_dim = 8;
    ecfg.num_layers = 1;
    ecfg.num_heads = 2;
    ecfg.patch_size = 4;
    ecfg.image_height = 8;
    ecfg.image_width = 4;
    ecfg.max_text_len = 6;
    ecfg.vocab_size = 10;
    ccfg.hidden_dim = 8;
    ccfg.num_layers = 2;
    ccfg.num_heads = 2;
    ccfg.vocab_size = 10;
    ccfg.num_classes = 4;
    ccfg.patch_size = 4;
    image = encoders::ImageEncoder(ecfg, rng);
    text = encoders::TextEncoder(ecfg, rng);
    cme = crossmodal::CrossModalEncoder(ccfg, rng);
  }
};

inline void append(std::vector<Tensor>& out, const numkernel::NamedTensors& named) {
  for (const auto& [n, t] : named) out.push_back(t);
}

}  // namespace detail

// Runs every case over `instances` seeds. Large parameter tensors are
// sampled at a fixed stride to keep the suite fast.
inline std::vector<GradCase> run_gradient_suite(std::size_t instances = 10) {
  using detail::random_labels;
  using detail::random_matrix;
  using numkernel::Tensor;
  using Builder = std::function<std::pair<std::function<Tensor()>, std::vector<Tensor>>(Rng&)>;
  struct Spec {
    std::string name;
    Builder build;
    std::size_t max_elements;
  };
  std::vector<Spec> specs;

  specs.push_back({"mlm_loss", [](Rng& rng) {
                     const Tensor z = random_matrix(5, 7, rng);
                     const auto y = random_labels(5, 7, rng);
                     return std::pair{std::function<Tensor()>([=] { return losses::mlm_loss(z, y, 7); }),
                                      std::vector<Tensor>{z}};
                   }, 0});
  specs.push_back({"semmim_loss", [](Rng& rng) {
                     const Tensor z = random_matrix(6, 8, rng);
                     const auto y = random_labels(6, 8, rng);
                     return std::pair{std::function<Tensor()>([=] { return losses::semmim_loss(z, y, 8); }),
                                      std::vector<Tensor>{z}};
                   }, 0});
  specs.push_back({"sdm_loss", [](Rng& rng) {
                     const Tensor v = random_matrix(4, 5, rng), t = random_matrix(4, 5, rng);
                     const std::vector<int> ids{0, 1, 1, 2};
                     return std::pair{std::function<Tensor()>([=] {
                                        return losses::sdm_loss(numkernel::l2_normalize_rows(v),
                                                                numkernel::l2_normalize_rows(t), ids);
                                      }),
                                      std::vector<Tensor>{v, t}};
                   }, 0});
  specs.push_back({"sdm_loss_raw_tau0.2", [](Rng& rng) {
                     const Tensor v = random_matrix(5, 4, rng), t = random_matrix(5, 4, rng);
                     const std::vector<int> ids{0, 0, 1, 2, 2};
                     losses::SdmConfig cfg;
                     cfg.temperature = 0.2;
                     return std::pair{std::function<Tensor()>([=] { return losses::sdm_loss(v, t, ids, cfg); }),
                                      std::vector<Tensor>{v, t}};
                   }, 0});
  specs.push_back({"id_loss", [](Rng& rng) {
                     const Tensor v = random_matrix(4, 5, rng), t = random_matrix(4, 5, rng);
                     const Tensor w = random_matrix(3, 5, rng);
                     const std::vector<int> ids{0, 2, 1, 2};
                     return std::pair{std::function<Tensor()>([=] { return losses::id_loss(v, t, ids, w); }),
                                      std::vector<Tensor>{v, t, w}};
                   }, 0});
  specs.push_back({"pixel_mim_loss", [](Rng& rng) {
                     const Tensor p = random_matrix(3, 12, rng), t = random_matrix(3, 12, rng);
                     return std::pair{std::function<Tensor()>([=] { return losses::pixel_mim_loss(p, t); }),
                                      std::vector<Tensor>{p}};
                   }, 0});
  specs.push_back({"patch_mim_loss", [](Rng& rng) {
                     const Tensor p = random_matrix(4, 1, rng), t = random_matrix(4, 1, rng);
                     return std::pair{std::function<Tensor()>([=] { return losses::patch_mim_loss(p, t); }),
                                      std::vector<Tensor>{p}};
                   }, 0});
  specs.push_back({"feature_mim_loss", [](Rng& rng) {
                     const Tensor p = random_matrix(3, 6, rng), t = random_matrix(3, 6, rng);
                     return std::pair{std::function<Tensor()>([=] { return losses::feature_mim_loss(p, t); }),
                                      std::vector<Tensor>{p}};
                   }, 0});
  specs.push_back({"total_loss", [](Rng& rng) {
                     const Tensor z = random_matrix(4, 6, rng), v = random_matrix(4, 5, rng),
                                  t = random_matrix(4, 5, rng), w = random_matrix(3, 5, rng);
                     const auto y = random_labels(4, 6, rng);
                     const std::vector<int> ids{0, 1, 1, 2};
                     return std::pair{std::function<Tensor()>([=] {
                                        const auto vn = numkernel::l2_normalize_rows(v);
                                        const auto tn = numkernel::l2_normalize_rows(t);
                                        return losses::total_loss(losses::id_loss(v, t, ids, w),
                                                                  losses::sdm_loss(vn, tn, ids),
                                                                  losses::mlm_loss(z, y, 6),
                                                                  losses::semmim_loss(z, y, 6), 0.7, 1.3)
                                            .total;
                                      }),
                                      std::vector<Tensor>{z, v, t, w}};
                   }, 0});
  specs.push_back({"image_encoder", [](Rng& rng) {
                     auto m = std::make_shared<detail::TinyModel>(rng);
                     const Tensor patches = random_matrix(2 * m->ecfg.num_image_patches(), m->ecfg.patch_dim(), rng);
                     const Tensor w = random_matrix(2 * (m->ecfg.num_image_patches() + 1), 8, rng);
                     std::vector<Tensor> in{patches};
                     detail::append(in, m->image.params());
                     return std::pair{std::function<Tensor()>([=] {
                                        return numkernel::sum(numkernel::mul(m->image.encode_patches(patches, 2).tokens, w));
                                      }),
                                      in};
                   }, 12});
  specs.push_back({"text_encoder", [](Rng& rng) {
                     auto m = std::make_shared<detail::TinyModel>(rng);
                     const Tensor w = random_matrix(2 * 6, 8, rng);
                     const std::vector<std::vector<int>> caps{{1, 4, 5, 2}, {1, 9, 3, 7, 2}};
                     std::vector<Tensor> in;
                     detail::append(in, m->text.params());
                     return std::pair{std::function<Tensor()>([=] {
                                        return numkernel::sum(numkernel::mul(m->text.encode(caps).tokens, w));
                                      }),
                                      in};
                   }, 12});
  specs.push_back({"cme_forward", [](Rng& rng) {
                     auto m = std::make_shared<detail::TinyModel>(rng);
                     const Tensor a = random_matrix(2 * 3, 8, rng), b = random_matrix(2 * 4, 8, rng);
                     const Tensor w = random_matrix(2 * 7, 8, rng);
                     const std::vector<std::uint8_t> valid{1, 1, 1, 0, 1, 1, 0, 0};
                     std::vector<Tensor> in{a, b};
                     for (const auto& [n, p] : m->cme.params())
                       if (n.rfind("blocks.", 0) == 0 || n.rfind("final_ln", 0) == 0) in.push_back(p);
                     return std::pair{std::function<Tensor()>([=] {
                                        return numkernel::sum(
                                            numkernel::mul(m->cme.forward(a, 3, {}, b, 4, valid, 2).tokens, w));
                                      }),
                                      in};
                   }, 16});
  specs.push_back({"cme_heads", [](Rng& rng) {
                     auto m = std::make_shared<detail::TinyModel>(rng);
                     const Tensor img = random_matrix(2 * 3, 8, rng), txt = random_matrix(2 * 6, 8, rng);
                     crossmodal::MaskPlan plan;
                     plan.text_batch = {0, 1, 1};
                     plan.text_pos = {1, 2, 3};
                     plan.text_true = random_labels(3, 10, rng);
                     plan.image_batch = {0, 1};
                     plan.image_pos = {1, 2};
                     plan.image_true = random_labels(2, 4, rng);
                     std::vector<Tensor> in{img, txt};
                     for (const auto& [n, p] : m->cme.params())
                       if (n.rfind("mlm_head", 0) == 0 || n.rfind("mim_head", 0) == 0) in.push_back(p);
                     return std::pair{std::function<Tensor()>([=] {
                                        const auto mlm = m->cme.forward(img, 3, {}, txt, 6, {}, 2);
                                        const auto mim = m->cme.forward(txt, 6, {}, img, 3, {}, 2);
                                        return numkernel::add(
                                            losses::mlm_loss(m->cme.mlm_logits(mlm, plan), plan.text_true, 10),
                                            losses::semmim_loss(m->cme.mim_logits(mim, plan), plan.image_true, 4));
                                      }),
                                      in};
                   }, 16});

  std::vector<GradCase> out;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCase gc;
    gc.name = specs[k].name;
    for (std::size_t s = 0; s < instances; ++s) {
      Rng rng(derive_seed(0x67726164ULL + k, s));
      auto [fn, inputs] = specs[k].build(rng);
      numkernel::GradCheckOptions opt;
      opt.max_elements_per_input = specs[k].max_elements;
      const auto r = numkernel::check_gradients(fn, inputs, opt);
      gc.max_rel_error = std::max(gc.max_rel_error, r.max_rel_error);
      gc.elements += r.checked;
      ++gc.instances;
    }
    gc.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(gc);
  }
  return out;
}

}  // namespace bimatch::trainer
