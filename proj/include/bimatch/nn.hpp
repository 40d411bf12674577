// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameterized layers built from numkernel ops. Every layer owns leaf
// tensors and can list them under dotted names for checkpoints and Adam.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bimatch/common.hpp"
#include "bimatch/numkernel.hpp"

namespace bimatch::nn {

using numkernel::NamedTensors;
using numkernel::Shape;
using numkernel::Tensor;

inline constexpr double kInitStd = 0.02;

inline Tensor init_param(Shape shape, Rng& rng, double std = kInitStd) {
  std::vector<double> v(numkernel::numel_of(shape));
  for (double& x : v) x = rng.truncated_normal(std);
  return Tensor::from(std::move(shape), std::move(v), true);
}

inline void add_params(NamedTensors& out, const std::string& prefix, const NamedTensors& params) {
  for (const auto& [name, t] : params) out.emplace_back(prefix + name, t);
}

inline std::vector<Tensor> tensors_of(const NamedTensors& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

// Overwrites every parameter with a fresh truncated-normal draw.
inline void reinitialize(const NamedTensors& named, Rng& rng, double std = kInitStd) {
  for (auto [name, t] : named)
    for (double& x : t.mutable_data()) x = rng.truncated_normal(std);
}

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : weight(init_param({in, out}, rng)), bias(Tensor::zeros({out}, true)) {}

  Tensor operator()(const Tensor& x) const {
    return numkernel::add_rowvec(numkernel::matmul(x, weight), bias);
  }
  NamedTensors params() const { return {{"weight", weight}, {"bias", bias}}; }
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d)
      : gamma(Tensor::filled({d}, 1.0, true)), beta(Tensor::zeros({d}, true)) {}

  Tensor operator()(const Tensor& x) const { return numkernel::layer_norm(x, gamma, beta); }
  NamedTensors params() const { return {{"gamma", gamma}, {"beta", beta}}; }
};

// Pre-norm transformer block: x + attn(ln(x)), then + mlp(ln(.)).
struct TransformerBlock {
  std::size_t heads = 1;
  LayerNorm ln1, ln2;
  Linear q, k, v, o;
  Linear fc1, fc2;

  TransformerBlock() = default;
  TransformerBlock(std::size_t d, std::size_t num_heads, Rng& rng)
      : heads(num_heads),
        ln1(d),
        ln2(d),
        q(d, d, rng),
        k(d, d, rng),
        v(d, d, rng),
        o(d, d, rng),
        fc1(d, 4 * d, rng),
        fc2(4 * d, d, rng) {
    if (num_heads == 0 || d % num_heads != 0) {
      throw ConfigError("hidden size " + std::to_string(d) + " not divisible by " +
                        std::to_string(num_heads) + " heads");
    }
  }

  // x holds `batch` sequences of `seq` rows stacked vertically.
  Tensor operator()(const Tensor& x, std::size_t batch, std::size_t seq,
                    std::span<const std::uint8_t> key_valid = {}) const {
    using namespace numkernel;
    const Tensor a = ln1(x);
    const Tensor h = add(x, o(attention(q(a), k(a), v(a), batch, seq, heads, key_valid)));
    return add(h, fc2(gelu(fc1(ln2(h)))));
  }

  NamedTensors params() const {
    NamedTensors out;
    add_params(out, "ln1.", ln1.params());
    add_params(out, "ln2.", ln2.params());
    add_params(out, "q.", q.params());
    add_params(out, "k.", k.params());
    add_params(out, "v.", v.params());
    add_params(out, "o.", o.params());
    add_params(out, "fc1.", fc1.params());
    add_params(out, "fc2.", fc2.params());
    return out;
  }
};

// Two-layer prediction head: Linear(d,d) -> GELU -> LayerNorm -> Linear(d,out).
struct MlpHead {
  Linear dense;
  LayerNorm norm;
  Linear out;

  MlpHead() = default;
  MlpHead(std::size_t d, std::size_t out_dim, Rng& rng) : dense(d, d, rng), norm(d), out(d, out_dim, rng) {}

  Tensor operator()(const Tensor& x) const {
    return out(norm(numkernel::gelu(dense(x))));
  }
  NamedTensors params() const {
    NamedTensors p;
    add_params(p, "dense.", dense.params());
    add_params(p, "norm.", norm.params());
    add_params(p, "out.", out.params());
    return p;
  }
};

}  // namespace bimatch::nn
