// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops. All operate on rank-2 row-major matrices unless
// noted; shapes are checked on every call and never broadcast, except that a
// one-element tensor may scale another tensor in mul().

#pragma once

#include <cmath>
#include <cstring>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bimatch/numkernel/tensor.hpp"

namespace bimatch::numkernel {

namespace kernel {

// c[m,n] += a[m,k] * b[k,n]. A 4x8 tile of outputs lives in eight 4-wide
// vector registers for the whole k loop; edges take a scalar path.
using v4d = double __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
  v4d r;
  std::memcpy(&r, p, sizeof r);
  return r;
}
inline void add_store4(double* p, v4d v) {
  v4d r = load4(p) + v;
  std::memcpy(p, &r, sizeof r);
}

inline void gemm_edge(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                      std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1) {
  for (std::size_t i = i0; i < i1; ++i) {
    for (std::size_t j = j0; j < j1; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] += s;
    }
  }
}

inline void gemm_nn(const double* __restrict a, const double* __restrict b, double* __restrict c,
                    std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t mt = m - m % 4, nt = n - n % 8;
  for (std::size_t i = 0; i < mt; i += 4) {
    const double *a0 = a + i * k, *a1 = a0 + k, *a2 = a1 + k, *a3 = a2 + k;
    for (std::size_t j = 0; j < nt; j += 8) {
      v4d c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
      for (std::size_t p = 0; p < k; ++p) {
        const double* br = b + p * n + j;
        const v4d b0 = load4(br), b1 = load4(br + 4);
        c00 += a0[p] * b0;
        c01 += a0[p] * b1;
        c10 += a1[p] * b0;
        c11 += a1[p] * b1;
        c20 += a2[p] * b0;
        c21 += a2[p] * b1;
        c30 += a3[p] * b0;
        c31 += a3[p] * b1;
      }
      double* cr = c + i * n + j;
      add_store4(cr, c00);
      add_store4(cr + 4, c01);
      add_store4(cr + n, c10);
      add_store4(cr + n + 4, c11);
      add_store4(cr + 2 * n, c20);
      add_store4(cr + 2 * n + 4, c21);
      add_store4(cr + 3 * n, c30);
      add_store4(cr + 3 * n + 4, c31);
    }
    gemm_edge(a, b, c, k, n, i, i + 4, nt, n);
  }
  gemm_edge(a, b, c, k, n, mt, m, 0, n);
}

inline std::vector<double> transposed(const double* a, std::size_t m, std::size_t n) {
  std::vector<double> t(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

// c[m,n] += a[m,k] * b[n,k]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  const std::vector<double> bt = transposed(b, n, k);
  gemm_nn(a, bt.data(), c, m, k, n);
}

// c[k,n] += a[m,k]^T * b[m,n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  const std::vector<double> at = transposed(a, m, k);
  gemm_nn(at.data(), b, c, k, m, n);
}

}  // namespace kernel

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  kernel::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* g = self.grad.data();
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (an.requires_grad) kernel::gemm_nt(g, bn.data.data(), an.grad_buffer().data(), m, n, k);
    if (bn.requires_grad) kernel::gemm_tn(an.data.data(), g, bn.grad_buffer().data(), m, k, n);
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  return make_result("transpose", {n, m}, kernel::transposed(a.data().data(), m, n), {a},
                     [m, n](Node& self) {
                       auto g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
                     });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) {
      auto g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

// Elementwise product. A one-element operand scales the other.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.numel() == 1 && b.numel() != 1) return mul(b, a);
  if (b.numel() == 1 && a.numel() != 1) {
    const double s = b.item();
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
    return make_result("mul_scalar", a.shape(), std::move(out), {a, b}, [s](Node& self) {
      auto& an = *self.inputs[0];
      auto& bn = *self.inputs[1];
      if (an.requires_grad) {
        auto g = an.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
      }
      if (bn.requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * an.data[i];
        bn.grad_buffer()[0] += acc;
      }
    });
  }
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (an.requires_grad) {
      auto g = an.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.data[i];
    }
    if (bn.requires_grad) {
      auto g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.data[i];
    }
  });
}

// x * c for a constant c.
inline Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * c;
  return make_result("scale", x.shape(), std::move(out), {x}, [c](Node& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
  });
}

// x + c for a constant c.
inline Tensor add_constant(const Tensor& x, double c) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + c;
  return make_result("add_constant", x.shape(), std::move(out), {x}, [](Node& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// x[m,n] + b[n] added to every row.
inline Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  detail::require_matrix(x, "add_rowvec");
  const std::size_t m = x.rows(), n = x.cols();
  if (b.numel() != n) {
    throw ShapeError("add_rowvec: row vector " + shape_str(b.shape()) + " vs matrix " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + b[j];
  return make_result("add_rowvec", {m, n}, std::move(out), {x, b}, [m, n](Node& self) {
    if (self.inputs[0]->requires_grad) {
      auto g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

// x[m,n] * g[n] applied to every row.
inline Tensor mul_rowvec(const Tensor& x, const Tensor& gvec) {
  detail::require_matrix(x, "mul_rowvec");
  const std::size_t m = x.rows(), n = x.cols();
  if (gvec.numel() != n) {
    throw ShapeError("mul_rowvec: row vector " + shape_str(gvec.shape()) + " vs matrix " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * gvec[j];
  return make_result("mul_rowvec", {m, n}, std::move(out), {x, gvec}, [m, n](Node& self) {
    auto& xn = *self.inputs[0];
    auto& vn = *self.inputs[1];
    if (xn.requires_grad) {
      auto g = xn.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] * vn.data[j];
    }
    if (vn.requires_grad) {
      auto g = vn.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j] * xn.data[i * n + j];
    }
  });
}

inline Tensor exp(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
  return make_result("exp", x.shape(), std::move(out), {x}, [](Node& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.data[i];
  });
}

inline Tensor log(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > 0.0)) throw NumericError("log of non-positive value " + std::to_string(x[i]));
    out[i] = std::log(x[i]);
  }
  return make_result("log", x.shape(), std::move(out), {x}, [](Node& self) {
    auto& xn = *self.inputs[0];
    auto g = xn.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / xn.data[i];
  });
}

// Tanh approximation of GELU.
inline Tensor gelu(const Tensor& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v)));
  }
  return make_result("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    auto& xn = *self.inputs[0];
    auto g = xn.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xn.data[i];
      const double t = std::tanh(k * (v + c * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
      g[i] += self.grad[i] * d;
    }
  });
}

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result("sum", {}, {acc}, {x}, [](Node& self) {
    auto g = self.inputs[0]->grad_buffer();
    const double s = self.grad[0];
    for (double& v : g) v += s;
  });
}

inline Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  return make_result("mean", {}, {acc / n}, {x}, [n](Node& self) {
    auto g = self.inputs[0]->grad_buffer();
    const double s = self.grad[0] / n;
    for (double& v : g) v += s;
  });
}

inline Tensor softmax_rows(const Tensor& x) {
  detail::require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = x.data().data() + i * n;
    double mx = r[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(r[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return make_result("softmax_rows", {m, n}, std::move(out), {x}, [m, n](Node& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* p = self.data.data() + i * n;
      const double* go = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += go[j] * p[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += p[j] * (go[j] - dot);
    }
  });
}

inline Tensor log_softmax_rows(const Tensor& x) {
  detail::require_matrix(x, "log_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = x.data().data() + i * n;
    double mx = r[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(r[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = r[j] - lse;
  }
  return make_result("log_softmax_rows", {m, n}, std::move(out), {x}, [m, n](Node& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* lp = self.data.data() + i * n;
      const double* go = self.grad.data() + i * n;
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += go[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += go[j] - std::exp(lp[j]) * total;
    }
  });
}

// Per-row (x - mean) / sqrt(var + eps) with the population variance.
inline Tensor standardize_rows(const Tensor& x, double eps = 1e-12) {
  detail::require_matrix(x, "standardize_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = x.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += r[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (r[j] - mu) * inv_std[i];
  }
  return make_result("standardize_rows", {m, n}, std::move(out), {x},
                     [m, n, inv_std = std::move(inv_std)](Node& self) {
                       auto g = self.inputs[0]->grad_buffer();
                       const double dn = static_cast<double>(n);
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* y = self.data.data() + i * n;
                         const double* go = self.grad.data() + i * n;
                         double mg = 0.0, mgy = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           mg += go[j];
                           mgy += go[j] * y[j];
                         }
                         mg /= dn;
                         mgy /= dn;
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] += inv_std[i] * (go[j] - mg - y[j] * mgy);
                       }
                     });
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-12) {
  return add_rowvec(mul_rowvec(standardize_rows(x, eps), gamma), beta);
}

// Each row divided by its L2 norm.
inline Tensor l2_normalize_rows(const Tensor& x) {
  detail::require_matrix(x, "l2_normalize_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = x.data().data() + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += r[j] * r[j];
    if (!(s > 0.0)) throw NumericError("l2_normalize_rows: zero row");
    norms[i] = std::sqrt(s);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = r[j] / norms[i];
  }
  return make_result("l2_normalize_rows", {m, n}, std::move(out), {x},
                     [m, n, norms = std::move(norms)](Node& self) {
                       auto g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* y = self.data.data() + i * n;
                         const double* go = self.grad.data() + i * n;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += go[j] * y[j];
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] += (go[j] - y[j] * dot) / norms[i];
                       }
                     });
}

// s[i,j] = cos(a_i, b_j) for a[m,d], b[n,d].
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("cosine_similarity: embedding widths differ " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  return matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b)));
}

// Rows of x picked by index; repeated indices are allowed.
inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (indices.empty()) throw ShapeError("gather_rows: empty index set");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) {
      throw RangeError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                       std::to_string(m) + " rows");
    }
    std::copy_n(x.data().data() + idx[r] * n, n, out.data() + r * n);
  }
  const std::size_t len = idx.size();
  return make_result("gather_rows", {len, n}, std::move(out), {x},
                     [n, idx = std::move(idx)](Node& self) {
                       auto g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
                     });
}

// out[i] = x[i, cols[i]].
inline Tensor pick(const Tensor& x, std::span<const std::size_t> cols) {
  detail::require_matrix(x, "pick");
  const std::size_t m = x.rows(), n = x.cols();
  if (cols.size() != m) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " column indices for " +
                     std::to_string(m) + " rows");
  }
  std::vector<std::size_t> c(cols.begin(), cols.end());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (c[i] >= n) {
      throw RangeError("pick: column " + std::to_string(c[i]) + " out of range for width " +
                       std::to_string(n));
    }
    out[i] = x[i * n + c[i]];
  }
  return make_result("pick", {m}, std::move(out), {x}, [n, c = std::move(c)](Node& self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < c.size(); ++i) g[i * n + c[i]] += self.grad[i];
  });
}

// Stacks matrices of equal width vertically.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.cols() != n) throw ShapeError("concat_rows: width mismatch");
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result("concat_rows", {m, n}, std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t len = in->data.size();
      if (in->requires_grad) {
        auto g = in->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

// Copy of x with the listed rows replaced by `row` (shape [1,n] or [n]).
inline Tensor replace_rows(const Tensor& x, const Tensor& row, std::span<const std::size_t> indices) {
  detail::require_matrix(x, "replace_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (row.numel() != n) throw ShapeError("replace_rows: replacement width mismatch");
  std::vector<char> replaced(m, 0);
  for (std::size_t i : indices) {
    if (i >= m) throw RangeError("replace_rows: index out of range");
    replaced[i] = 1;
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i)
    if (replaced[i]) std::copy_n(row.data().data(), n, out.data() + i * n);
  return make_result("replace_rows", {m, n}, std::move(out), {x, row},
                     [m, n, replaced = std::move(replaced)](Node& self) {
                       auto& xn = *self.inputs[0];
                       auto& rn = *self.inputs[1];
                       if (xn.requires_grad) {
                         auto g = xn.grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           if (!replaced[i])
                             for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j];
                       }
                       if (rn.requires_grad) {
                         auto g = rn.grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           if (replaced[i])
                             for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                       }
                     });
}

}  // namespace bimatch::numkernel
