// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bimatch/numkernel/ops.hpp"

namespace bimatch::numkernel {

// Multi-head scaled dot-product attention over `batch` independent sequences
// of `seq` rows each. q, k, v are [batch*seq, d] with d split evenly across
// heads by column blocks. `key_valid` (optional, one flag per row) removes
// keys from every query's softmax; each sequence needs at least one valid key.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                        std::size_t seq, std::size_t heads,
                        std::span<const std::uint8_t> key_valid = {}) {
  detail::require_same_shape(q, k, "attention");
  detail::require_same_shape(q, v, "attention");
  detail::require_matrix(q, "attention");
  const std::size_t rows = q.rows(), d = q.cols();
  if (batch * seq != rows) throw ShapeError("attention: batch*seq does not match row count");
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: width not divisible by heads");
  if (!key_valid.empty() && key_valid.size() != rows) {
    throw ShapeError("attention: key mask length mismatch");
  }
  std::vector<std::uint8_t> valid(key_valid.begin(), key_valid.end());
  if (valid.empty()) valid.assign(rows, 1);
  for (std::size_t b = 0; b < batch; ++b) {
    bool any = false;
    for (std::size_t s = 0; s < seq; ++s) any = any || valid[b * seq + s];
    if (!any) throw InvalidArgument("attention: sequence with no valid keys");
  }

  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[(b*heads + h)*seq*seq + i*seq + j]
  std::vector<double> probs(batch * heads * seq * seq, 0.0);
  std::vector<double> out(rows * d, 0.0);
  const double* qd = q.data().data();
  const double* kd = k.data().data();
  const double* vd = v.data().data();

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + (b * heads + h) * seq * seq;
      const std::size_t col = h * dh;
      for (std::size_t i = 0; i < seq; ++i) {
        const double* qi = qd + (b * seq + i) * d + col;
        double* pi = p + i * seq;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < seq; ++j) {
          if (!valid[b * seq + j]) continue;
          const double* kj = kd + (b * seq + j) * d + col;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          pi[j] = s * scale;
          mx = std::max(mx, pi[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          if (!valid[b * seq + j]) continue;
          pi[j] = std::exp(pi[j] - mx);
          z += pi[j];
        }
        double* oi = out.data() + (b * seq + i) * d + col;
        for (std::size_t j = 0; j < seq; ++j) {
          if (!valid[b * seq + j]) continue;
          pi[j] /= z;
          const double* vj = vd + (b * seq + j) * d + col;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += pi[j] * vj[c];
        }
      }
    }
  }

  return make_result(
      "attention", {rows, d}, std::move(out), {q, k, v},
      [batch, seq, heads, d, dh, scale, probs = std::move(probs)](Node& self) {
        auto& qn = *self.inputs[0];
        auto& kn = *self.inputs[1];
        auto& vn = *self.inputs[2];
        std::vector<double> dq(qn.data.size(), 0.0), dk(kn.data.size(), 0.0),
            dv(vn.data.size(), 0.0);
        std::vector<double> dp(seq);
        const double* go = self.grad.data();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + (b * heads + h) * seq * seq;
            const std::size_t col = h * dh;
            for (std::size_t i = 0; i < seq; ++i) {
              const double* gi = go + (b * seq + i) * d + col;
              const double* pi = p + i * seq;
              double dot = 0.0;
              for (std::size_t j = 0; j < seq; ++j) {
                if (pi[j] == 0.0) {
                  dp[j] = 0.0;
                  continue;
                }
                const double* vj = vn.data.data() + (b * seq + j) * d + col;
                double* dvj = dv.data() + (b * seq + j) * d + col;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                  s += gi[c] * vj[c];
                  dvj[c] += pi[j] * gi[c];
                }
                dp[j] = s;
                dot += s * pi[j];
              }
              const double* qi = qn.data.data() + (b * seq + i) * d + col;
              double* dqi = dq.data() + (b * seq + i) * d + col;
              for (std::size_t j = 0; j < seq; ++j) {
                if (pi[j] == 0.0) continue;
                const double ds = pi[j] * (dp[j] - dot) * scale;
                const double* kj = kn.data.data() + (b * seq + j) * d + col;
                double* dkj = dk.data() + (b * seq + j) * d + col;
                for (std::size_t c = 0; c < dh; ++c) {
                  dqi[c] += ds * kj[c];
                  dkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
        auto accumulate = [](Node& n, const std::vector<double>& g) {
          if (!n.requires_grad) return;
          auto buf = n.grad_buffer();
          for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
        };
        accumulate(qn, dq);
        accumulate(kn, dk);
        accumulate(vn, dv);
      });
}

}  // namespace bimatch::numkernel
