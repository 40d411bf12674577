// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop, test-split evaluation and run artifacts.

#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <nlohmann/json.hpp>

#include "bimatch/evalmetrics.hpp"
#include "bimatch/losses.hpp"
#include "bimatch/numkernel.hpp"
#include "bimatch/patchlabel.hpp"
#include "bimatch/synthdata/dataset_io.hpp"
#include "bimatch/trainer/model.hpp"

namespace bimatch::trainer {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw FormatError("failed writing " + p.string());
}

// Every step allocates and frees the same large buffers. Keeping freed
// memory in the heap instead of returning it to the OS avoids re-faulting
// those pages each step.
inline void retain_freed_memory() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

// --------------------------------------------------------------- data

// The dataset, its identity-disjoint split and patch labels at the
// configured patch size.
struct TrainData {
  synthdata::Dataset data;
  synthdata::Split split;
  std::size_t num_train_ids = 0;

  TrainData(synthdata::Dataset d, const TrainConfig& c) : data(std::move(d)) {
    if (data.images.empty()) throw InvalidArgument("dataset has no images");
    if (data.images.front().patch_size != c.patch_size) patchlabel::attach_patch_labels(data, c.patch_size);
    split = synthdata::split_by_identity(data, c.test_identities);
    num_train_ids = data.identities.size() - c.test_identities;
  }
};

inline TrainData load_train_data(const TrainConfig& c) {
  return TrainData(synthdata::read_dataset(c.dataset), c);
}

struct Batch {
  std::vector<RgbImage> flipped;  // owns flipped copies
  std::vector<const RgbImage*> images;
  std::vector<std::vector<int>> captions;
  std::vector<int> ids;
  std::vector<std::vector<int>> patch_labels;
};

inline std::vector<int> flip_grid(const std::vector<int>& labels, std::size_t cols) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t r = i / cols, c = i % cols;
    out[r * cols + (cols - 1 - c)] = labels[i];
  }
  return out;
}

// `flip[k]` mirrors sample k horizontally, parse labels included.
inline Batch make_batch(const TrainData& td, const std::vector<std::size_t>& caption_idx,
                        const std::vector<bool>& flip, std::size_t grid_cols) {
  Batch b;
  b.flipped.reserve(caption_idx.size());
  for (std::size_t k = 0; k < caption_idx.size(); ++k) {
    const auto& cap = td.data.captions[caption_idx[k]];
    const auto& img = td.data.images[cap.image_index];
    if (!flip.empty() && flip[k]) {
      b.flipped.push_back(flip_horizontal(img.image));
      b.images.push_back(&b.flipped.back());
      b.patch_labels.push_back(flip_grid(img.patch_labels, grid_cols));
    } else {
      b.images.push_back(&img.image);
      b.patch_labels.push_back(img.patch_labels);
    }
    b.captions.push_back(cap.token_ids);
    b.ids.push_back(img.identity_id);
  }
  return b;
}

// --------------------------------------------------------------- step

// Builds the whole objective for one batch. `mask_rng` drives both masks.
inline losses::LossBundle batch_objective(const Model& m, const Batch& b, const TrainConfig& c,
                                          const synthdata::Dataset& d, Rng& mask_rng) {
  using namespace numkernel;
  const auto& ec = m.enc_cfg;
  const std::size_t n = b.images.size(), np = ec.num_image_patches(), pd = ec.patch_dim();
  std::vector<double> raw;
  raw.reserve(n * np * pd);
  for (const RgbImage* img : b.images) {
    if (img->height != ec.image_height || img->width != ec.image_width) {
      throw ShapeError("dataset image size does not match image_height x image_width");
    }
    const auto p = encoders::patchify(*img, ec.patch_size);
    raw.insert(raw.end(), p.begin(), p.end());
  }
  const auto io = m.image.encode_patches(Tensor::matrix(n * np, pd, raw), n);
  const auto special = d.vocab.special();
  const auto to = m.text.encode(b.captions, special, true);

  const auto g = encoders::global_embeddings(io, to, ec.text_global);
  const Tensor id = losses::id_loss(g.image, g.text, b.ids, m.w_id);
  losses::SdmConfig sc;
  sc.temperature = c.temperature;
  sc.epsilon = c.sdm_epsilon;
  const Tensor sdm = losses::sdm_loss(l2_normalize_rows(g.image), l2_normalize_rows(g.text), b.ids, sc);

  Tensor mlm, mim;
  crossmodal::MaskPlan plan;
  if (c.mlm_enabled) {
    crossmodal::plan_text(plan, b.captions, c.m_t, mask_rng, special);
    const auto masked_text = m.text.encode(plan.masked_captions, special, true);
    const auto out = m.cme.mlm_pass(io, masked_text);
    mlm = losses::mlm_loss(m.cme.mlm_logits(out, plan), plan.text_true, d.vocab.size());
  }
  const auto method = c.mim();
  if (method != crossmodal::MimMethod::none) {
    const bool semantic = method == crossmodal::MimMethod::semantic;
    crossmodal::plan_image(plan, n, np, c.m_p, mask_rng,
                           semantic ? b.patch_labels : std::vector<std::vector<int>>{});
    const Tensor masked = crossmodal::mask_image(io, m.cme.mask_embedding(), plan);
    const auto out = m.cme.mim_pass(to, masked, io.seq);
    const Tensor pred = m.cme.mim_logits(out, plan);
    switch (method) {
      case crossmodal::MimMethod::semantic:
        mim = losses::semmim_loss(pred, plan.image_true, d.num_classes);
        break;
      case crossmodal::MimMethod::pixel:
        mim = losses::pixel_mim_loss(pred, crossmodal::pixel_targets(raw, np, pd, plan));
        break;
      case crossmodal::MimMethod::patch:
        mim = losses::patch_mim_loss(pred, crossmodal::patch_mean_targets(raw, np, pd, plan));
        break;
      case crossmodal::MimMethod::feature:
        mim = losses::feature_mim_loss(pred, crossmodal::feature_targets(io, plan));
        break;
      case crossmodal::MimMethod::none:
        break;
    }
  }
  return losses::total_loss(id, sdm, mlm, mim, c.alpha, c.beta);
}

// --------------------------------------------------------------- eval

struct TestScores {
  std::vector<double> sim;  // [queries, gallery]
  std::vector<int> query_ids, gallery_ids;
};

// Text-to-image scores on the test split. Uses the two encoders only.
inline TestScores test_scores(const Model& m, const TrainData& td, std::size_t chunk = 64) {
  numkernel::NoGradGuard guard;
  const auto& ec = m.enc_cfg;
  std::vector<double> img_f, txt_f;
  TestScores s;
  const auto& imgs = td.split.test_images;
  for (std::size_t start = 0; start < imgs.size(); start += chunk) {
    std::vector<const RgbImage*> ptrs;
    for (std::size_t i = start; i < std::min(imgs.size(), start + chunk); ++i) {
      ptrs.push_back(&td.data.images[imgs[i]].image);
      s.gallery_ids.push_back(td.data.images[imgs[i]].identity_id);
    }
    const Tensor f = numkernel::l2_normalize_rows(encoders::image_global(m.image.encode(ptrs)));
    img_f.insert(img_f.end(), f.data().begin(), f.data().end());
  }
  const auto& caps = td.split.test_captions;
  for (std::size_t start = 0; start < caps.size(); start += chunk) {
    std::vector<std::vector<int>> ids;
    for (std::size_t i = start; i < std::min(caps.size(), start + chunk); ++i) {
      const auto& cap = td.data.captions[caps[i]];
      ids.push_back(cap.token_ids);
      s.query_ids.push_back(td.data.images[cap.image_index].identity_id);
    }
    const Tensor f = numkernel::l2_normalize_rows(
        encoders::text_global(m.text.encode(ids, td.data.vocab.special(), true), ec.text_global));
    txt_f.insert(txt_f.end(), f.data().begin(), f.data().end());
  }
  const std::size_t d = ec.hidden_dim, nq = caps.size(), ng = imgs.size();
  const Tensor sim = encoders::similarity(Tensor::matrix(nq, d, std::move(txt_f)), Tensor::matrix(ng, d, std::move(img_f)));
  s.sim.assign(sim.data().begin(), sim.data().end());
  return s;
}

inline evalmetrics::RetrievalResult evaluate_model(const Model& m, const TrainData& td) {
  const TestScores s = test_scores(m, td);
  auto r = evalmetrics::evaluate(s.sim, s.query_ids.size(), s.gallery_ids.size(), s.query_ids, s.gallery_ids);
  if (!evalmetrics::is_consistent(r)) throw NumericError("retrieval metrics violate Rank@K monotonicity");
  return r;
}

// --------------------------------------------------------------- run

struct EpochRecord {
  std::size_t epoch = 0;
  double id = 0, sdm = 0, mlm = 0, mim = 0, total = 0;
  double lr = 0;  // at the epoch's last step
  evalmetrics::RetrievalResult test;
};

struct RunReport {
  std::string config_source;  // verbatim input text
  std::string config_hash;
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  evalmetrics::RetrievalResult final_result;
  double wall_seconds = 0.0;
  std::size_t cme_calls = 0;
  std::size_t steps = 0;
  std::size_t train_captions = 0, test_queries = 0, test_gallery = 0;

  bool all_finite() const {
    for (const auto& e : epochs)
      for (double v : {e.id, e.sdm, e.mlm, e.mim, e.total})
        if (!std::isfinite(v)) return false;
    return true;
  }

  // Wall-clock is left out unless asked for, so that reports of identical
  // runs compare equal byte for byte.
  nlohmann::json to_json(bool with_timing = false) const {
    nlohmann::json j;
    j["config_echo"] = config_source;
    j["config_hash"] = config_hash;
    j["config"] = canonical_text(config);
    j["steps"] = steps;
    j["cme_calls"] = cme_calls;
    j["train_captions"] = train_captions;
    j["test_queries"] = test_queries;
    j["test_gallery"] = test_gallery;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : epochs) {
      j["epochs"].push_back({{"epoch", e.epoch},
                             {"id", e.id},
                             {"sdm", e.sdm},
                             {"mlm", e.mlm},
                             {"mim", e.mim},
                             {"total", e.total},
                             {"lr", e.lr},
                             {"test", evalmetrics::to_json(e.test)}});
    }
    j["final"] = evalmetrics::to_json(final_result);
    if (with_timing) j["wall_seconds"] = wall_seconds;
    return j;
  }
};

inline std::string metrics_csv(const RunReport& r) {
  std::string out = "epoch,id,sdm,mlm,mim,total,lr," + evalmetrics::csv_header() + "\n";
  char buf[256];
  for (const auto& e : r.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.6g,", e.epoch, e.id, e.sdm, e.mlm, e.mim,
                  e.total, e.lr);
    out += buf + evalmetrics::csv_row(e.test) + "\n";
  }
  return out;
}

struct TrainOptions {
  std::ostream* log = nullptr;
  bool write_outputs = true;
  // Evaluate on the test split after every epoch, not just the last.
  bool eval_every_epoch = true;
};

struct TrainResult {
  RunReport report;
  Model model;
};

inline TrainResult train(const LoadedConfig& lc, const TrainData& td, const TrainOptions& opt = {}) {
  const TrainConfig& c = lc.config;
  c.validate();
  retain_freed_memory();
  const auto t0 = std::chrono::steady_clock::now();
  Model model(c, td.data, td.num_train_ids);
  model.cme.reset_calls();
  NamedTensors named = model.params();
  std::vector<Tensor> params = nn::tensors_of(named);
  numkernel::AdamState adam = numkernel::make_adam_state(params, c.adam_beta1, c.adam_beta2, c.adam_eps);

  const std::size_t n_train = td.split.train_captions.size();
  const std::size_t steps_per_epoch = n_train / c.batch_size;
  if (steps_per_epoch == 0) throw ConfigError("batch_size exceeds the number of training captions");
  numkernel::LrSchedule sched;
  sched.base_lr = c.base_lr;
  sched.warmup_start_lr = c.warmup_start_lr;
  sched.warmup_epochs = c.warmup_epochs;
  sched.total_epochs = c.epochs;
  sched.steps_per_epoch = steps_per_epoch;

  RunReport rep;
  rep.config_source = lc.source;
  rep.config = c;
  rep.config_hash = config_hash(c);
  rep.train_captions = n_train;
  rep.test_queries = td.split.test_captions.size();
  rep.test_gallery = td.split.test_images.size();

  const std::size_t grid_cols = model.enc_cfg.grid_cols();
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    Rng order_rng(derive_seed(c.seed, 1000 + epoch));
    Rng flip_rng(derive_seed(c.seed, 2000 + epoch));
    Rng mask_rng(derive_seed(c.seed, 3000 + epoch));
    std::vector<std::size_t> order = td.split.train_captions;
    order_rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++step) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s * c.batch_size),
                                   order.begin() + static_cast<std::ptrdiff_t>((s + 1) * c.batch_size));
      std::vector<bool> flip;
      if (c.flip_augment)
        for (std::size_t k = 0; k < idx.size(); ++k) flip.push_back(flip_rng.bernoulli(0.5));
      const Batch b = make_batch(td, idx, flip, grid_cols);
      const auto bundle = batch_objective(model, b, c, td.data, mask_rng);
      const double total = bundle.total.item();
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(s));
      }
      for (Tensor& p : params) p.zero_grad();
      numkernel::backward(bundle.total);
      rec.lr = numkernel::lr_at(step, sched);
      numkernel::adam_step(params, adam, rec.lr);
      rec.id += bundle.value(bundle.id);
      rec.sdm += bundle.value(bundle.sdm);
      rec.mlm += bundle.value(bundle.mlm);
      rec.mim += bundle.value(bundle.mim);
      rec.total += total;
    }
    const double inv = 1.0 / static_cast<double>(steps_per_epoch);
    for (double* v : {&rec.id, &rec.sdm, &rec.mlm, &rec.mim, &rec.total}) *v *= inv;
    if (opt.eval_every_epoch || epoch + 1 == c.epochs) rec.test = evaluate_model(model, td);
    if (opt.log) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "epoch %3zu  total %.4f  id %.4f  sdm %.4f  mlm %.4f  mim %.4f  R@1 %.3f\n",
                    rec.epoch, rec.total, rec.id, rec.sdm, rec.mlm, rec.mim,
                    rec.test.rank_at.empty() ? 0.0 : rec.test.r(1));
      *opt.log << buf << std::flush;
    }
    rep.epochs.push_back(std::move(rec));
  }
  for (Tensor& p : params) p.zero_grad();
  rep.final_result = rep.epochs.back().test;
  rep.steps = step;
  rep.cme_calls = model.cme.calls();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (opt.write_outputs) {
    namespace fs = std::filesystem;
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.txt", lc.source);
    write_text(dir / "report.json", rep.to_json().dump(2) + "\n");
    write_text(dir / "timing.json", nlohmann::json{{"wall_seconds", rep.wall_seconds}}.dump(2) + "\n");
    write_text(dir / "metrics.csv", metrics_csv(rep));
    numkernel::save_checkpoint(dir / "checkpoint.bin", model.params());
  }
  return {std::move(rep), std::move(model)};
}

// Rebuilds a model from a saved checkpoint.
inline Model load_model(const TrainConfig& c, const TrainData& td, const std::filesystem::path& checkpoint) {
  Model m(c, td.data, td.num_train_ids);
  NamedTensors named = m.params();
  numkernel::restore_into(numkernel::load_checkpoint(checkpoint), named);
  return m;
}

}  // namespace bimatch::trainer
