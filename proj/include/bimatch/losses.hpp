// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives. Masked-token classification losses divide the mean
// cross-entropy by the number of classes as well, unless per_token is set.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bimatch/common.hpp"
#include "bimatch/numkernel.hpp"

namespace bimatch::losses {

using numkernel::Tensor;

namespace detail {

inline std::vector<std::size_t> checked_labels(std::span<const int> labels, std::size_t rows,
                                               std::size_t classes, const char* what) {
  if (labels.size() != rows) {
    throw ShapeError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw RangeError(std::string(what) + ": label " + std::to_string(l) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    out.push_back(static_cast<std::size_t>(l));
  }
  return out;
}

// mean_i -log softmax(logits_i)[label_i]
inline Tensor mean_cross_entropy(const Tensor& logits, std::span<const int> labels, const char* what) {
  if (logits.rank() != 2) throw ShapeError(std::string(what) + ": logits must be a matrix");
  if (labels.empty()) throw InvalidArgument(std::string(what) + ": empty mask set");
  const auto idx = checked_labels(labels, logits.rows(), logits.cols(), what);
  return numkernel::scale(numkernel::mean(numkernel::pick(numkernel::log_softmax_rows(logits), idx)), -1.0);
}

inline Tensor masked_classification(const Tensor& logits, std::span<const int> labels,
                                    std::size_t num_classes, bool per_token, const char* what) {
  if (logits.rank() == 2 && logits.cols() != num_classes) {
    throw ShapeError(std::string(what) + ": logits width " + std::to_string(logits.cols()) +
                     " differs from class count " + std::to_string(num_classes));
  }
  const Tensor ce = mean_cross_entropy(logits, labels, what);
  return per_token ? ce : numkernel::scale(ce, 1.0 / static_cast<double>(num_classes));
}

inline Tensor mse(const Tensor& pred, const Tensor& target, const char* what) {
  if (pred.shape() != target.shape()) {
    throw ShapeError(std::string(what) + ": prediction " + numkernel::shape_str(pred.shape()) +
                     " vs target " + numkernel::shape_str(target.shape()));
  }
  const Tensor diff = numkernel::sub(pred, target);
  return numkernel::mean(numkernel::mul(diff, diff));
}

}  // namespace detail

// (1 / (|M_t| |V|)) sum_i -log p(true_i); per_token drops the 1/|V|.
inline Tensor mlm_loss(const Tensor& logits, std::span<const int> true_ids, std::size_t vocab_size,
                       bool per_token = false) {
  return detail::masked_classification(logits, true_ids, vocab_size, per_token, "mlm_loss");
}

inline Tensor semmim_loss(const Tensor& logits, std::span<const int> true_classes, std::size_t num_classes,
                          bool per_token = false) {
  return detail::masked_classification(logits, true_classes, num_classes, per_token, "semmim_loss");
}

inline Tensor pixel_mim_loss(const Tensor& pred, const Tensor& targets) {
  return detail::mse(pred, targets, "pixel_mim_loss");
}

inline Tensor patch_mim_loss(const Tensor& pred, const Tensor& targets) {
  if (pred.rank() != 2 || pred.cols() != 1) throw ShapeError("patch_mim_loss: expects one value per patch");
  return detail::mse(pred, targets, "patch_mim_loss");
}

// mean over rows of KL(softmax(target) || softmax(pred)); the target is a
// constant.
inline Tensor feature_mim_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape() || pred.rank() != 2) {
    throw ShapeError("feature_mim_loss: prediction and target shapes differ");
  }
  const std::size_t m = pred.rows(), n = pred.cols();
  std::vector<double> pt(m * n);
  double neg_entropy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = target.data().data() + i * n;
    double mx = r[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(r[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) {
      const double lp = r[j] - lse;
      pt[i * n + j] = std::exp(lp);
      neg_entropy += pt[i * n + j] * lp;
    }
  }
  const Tensor weights = Tensor::matrix(m, n, std::move(pt));
  const Tensor cross = numkernel::sum(numkernel::mul(weights, numkernel::log_softmax_rows(pred)));
  return numkernel::scale(numkernel::add_constant(numkernel::scale(cross, -1.0), neg_entropy),
                          1.0 / static_cast<double>(m));
}

struct SdmConfig {
  double temperature = 0.02;
  double epsilon = 1e-8;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("SDM temperature must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("SDM epsilon must be positive");
  }
};

namespace detail {

// (1/N) sum_i sum_j p_ij log(p_ij / (q_ij + eps)) with p = softmax(logits_i).
inline Tensor kl_to_matches(const Tensor& logits, const std::vector<double>& log_q_eps) {
  const Tensor logp = numkernel::log_softmax_rows(logits);
  const Tensor p = numkernel::exp(logp);
  const Tensor c = Tensor::matrix(logits.rows(), logits.cols(), log_q_eps);
  return numkernel::scale(numkernel::sum(numkernel::mul(p, numkernel::sub(logp, c))),
                          1.0 / static_cast<double>(logits.rows()));
}

}  // namespace detail

// Similarity-distribution matching between image and text globals. q is the
// identity-match indicator normalized per row.
inline Tensor sdm_loss(const Tensor& v, const Tensor& t, std::span<const int> identity_ids,
                       const SdmConfig& cfg = {}) {
  cfg.validate();
  if (v.rank() != 2 || v.shape() != t.shape()) throw ShapeError("sdm_loss: v and t must be equal-shape matrices");
  const std::size_t n = v.rows();
  if (identity_ids.size() != n) throw ShapeError("sdm_loss: one identity per row required");
  std::vector<double> log_q(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t matches = 0;
    for (std::size_t j = 0; j < n; ++j) matches += identity_ids[i] == identity_ids[j];
    for (std::size_t j = 0; j < n; ++j) {
      const double q = identity_ids[i] == identity_ids[j] ? 1.0 / static_cast<double>(matches) : 0.0;
      log_q[i * n + j] = std::log(q + cfg.epsilon);
    }
  }
  // identity matching is symmetric, so the same q serves both directions
  const Tensor s = numkernel::scale(numkernel::cosine_similarity(v, t), 1.0 / cfg.temperature);
  const Tensor i2t = detail::kl_to_matches(s, log_q);
  const Tensor t2i = detail::kl_to_matches(numkernel::transpose(s), log_q);
  return numkernel::add(i2t, t2i);
}

// Shared-classifier identity loss: mean CE(W v_i) + mean CE(W t_i).
inline Tensor id_loss(const Tensor& v, const Tensor& t, std::span<const int> identity_ids, const Tensor& w_id) {
  if (v.rank() != 2 || v.shape() != t.shape()) throw ShapeError("id_loss: v and t must be equal-shape matrices");
  if (w_id.rank() != 2 || w_id.cols() != v.cols()) throw ShapeError("id_loss: classifier width mismatch");
  const Tensor wt = numkernel::transpose(w_id);
  return numkernel::add(detail::mean_cross_entropy(numkernel::matmul(v, wt), identity_ids, "id_loss"),
                        detail::mean_cross_entropy(numkernel::matmul(t, wt), identity_ids, "id_loss"));
}

struct LossBundle {
  Tensor id, sdm, mlm, mim, total;
  double alpha = 1.0, beta = 1.0;

  double value(const Tensor& t) const { return t.defined() ? t.item() : 0.0; }
};

// total = id + sdm + alpha * mlm + beta * mim; undefined components count as 0.
inline LossBundle total_loss(const Tensor& id, const Tensor& sdm, const Tensor& mlm, const Tensor& mim,
                             double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("loss weights must be non-negative");
  LossBundle b;
  b.id = id.defined() ? id : Tensor::scalar(0.0);
  b.sdm = sdm.defined() ? sdm : Tensor::scalar(0.0);
  b.mlm = mlm.defined() ? mlm : Tensor::scalar(0.0);
  b.mim = mim.defined() ? mim : Tensor::scalar(0.0);
  b.alpha = alpha;
  b.beta = beta;
  b.total = numkernel::add(numkernel::add(b.id, b.sdm),
                           numkernel::add(numkernel::scale(b.mlm, alpha), numkernel::scale(b.mim, beta)));
  return b;
}

}  // namespace bimatch::losses
