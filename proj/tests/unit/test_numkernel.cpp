// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bimatch/numkernel.hpp"

using namespace bimatch;
using namespace bimatch::numkernel;

namespace {

Tensor random_matrix(Rng& rng, std::size_t m, std::size_t n, double scale = 1.0) {
  std::vector<double> v(m * n);
  for (double& x : v) x = rng.normal() * scale;
  return Tensor::matrix(m, n, std::move(v));
}

Tensor random_positive(Rng& rng, std::size_t m, std::size_t n) {
  std::vector<double> v(m * n);
  for (double& x : v) x = rng.uniform(0.5, 2.0);
  return Tensor::matrix(m, n, std::move(v));
}

// Contracts an arbitrary-shaped output with fixed random weights so every
// output element contributes to the scalar being checked.
Tensor readout(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (double& x : w) x = rng.normal();
  return sum(mul(y, Tensor::from(y.shape(), std::move(w))));
}

struct OpCase {
  std::string name;
  std::function<std::vector<Tensor>(Rng&)> make_inputs;
  std::function<Tensor(const std::vector<Tensor>&)> apply;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"matmul", [](Rng& r) { return std::vector{random_matrix(r, 3, 4), random_matrix(r, 4, 5)}; },
                   [](const auto& x) { return matmul(x[0], x[1]); }});
  cases.push_back({"transpose", [](Rng& r) { return std::vector{random_matrix(r, 3, 4)}; },
                   [](const auto& x) { return transpose(x[0]); }});
  cases.push_back({"add", [](Rng& r) { return std::vector{random_matrix(r, 3, 4), random_matrix(r, 3, 4)}; },
                   [](const auto& x) { return add(x[0], x[1]); }});
  cases.push_back({"sub", [](Rng& r) { return std::vector{random_matrix(r, 3, 4), random_matrix(r, 3, 4)}; },
                   [](const auto& x) { return sub(x[0], x[1]); }});
  cases.push_back({"mul", [](Rng& r) { return std::vector{random_matrix(r, 3, 4), random_matrix(r, 3, 4)}; },
                   [](const auto& x) { return mul(x[0], x[1]); }});
  cases.push_back({"mul_scalar",
                   [](Rng& r) { return std::vector{random_matrix(r, 3, 4), Tensor::scalar(r.normal())}; },
                   [](const auto& x) { return mul(x[1], x[0]); }});
  cases.push_back({"scale", [](Rng& r) { return std::vector{random_matrix(r, 2, 5)}; },
                   [](const auto& x) { return scale(x[0], -1.7); }});
  cases.push_back({"add_constant", [](Rng& r) { return std::vector{random_matrix(r, 2, 5)}; },
                   [](const auto& x) { return add_constant(x[0], 0.3); }});
  cases.push_back({"add_rowvec",
                   [](Rng& r) { return std::vector{random_matrix(r, 3, 4), random_matrix(r, 1, 4)}; },
                   [](const auto& x) { return add_rowvec(x[0], x[1]); }});
  cases.push_back({"mul_rowvec",
                   [](Rng& r) { return std::vector{random_matrix(r, 3, 4), random_matrix(r, 1, 4)}; },
                   [](const auto& x) { return mul_rowvec(x[0], x[1]); }});
  cases.push_back({"exp", [](Rng& r) { return std::vector{random_matrix(r, 3, 3)}; },
                   [](const auto& x) { return exp(x[0]); }});
  cases.push_back({"log", [](Rng& r) { return std::vector{random_positive(r, 3, 3)}; },
                   [](const auto& x) { return log(x[0]); }});
  cases.push_back({"gelu", [](Rng& r) { return std::vector{random_matrix(r, 3, 5, 2.0)}; },
                   [](const auto& x) { return gelu(x[0]); }});
  cases.push_back({"sum", [](Rng& r) { return std::vector{random_matrix(r, 3, 5)}; },
                   [](const auto& x) { return sum(x[0]); }});
  cases.push_back({"mean", [](Rng& r) { return std::vector{random_matrix(r, 3, 5)}; },
                   [](const auto& x) { return mean(x[0]); }});
  cases.push_back({"softmax_rows", [](Rng& r) { return std::vector{random_matrix(r, 3, 6)}; },
                   [](const auto& x) { return softmax_rows(x[0]); }});
  cases.push_back({"log_softmax_rows", [](Rng& r) { return std::vector{random_matrix(r, 3, 6)}; },
                   [](const auto& x) { return log_softmax_rows(x[0]); }});
  cases.push_back({"standardize_rows", [](Rng& r) { return std::vector{random_matrix(r, 3, 6)}; },
                   [](const auto& x) { return standardize_rows(x[0]); }});
  cases.push_back({"layer_norm",
                   [](Rng& r) {
                     return std::vector{random_matrix(r, 3, 6), random_matrix(r, 1, 6), random_matrix(r, 1, 6)};
                   },
                   [](const auto& x) { return layer_norm(x[0], x[1], x[2]); }});
  cases.push_back({"l2_normalize_rows", [](Rng& r) { return std::vector{random_matrix(r, 3, 6)}; },
                   [](const auto& x) { return l2_normalize_rows(x[0]); }});
  cases.push_back({"cosine_similarity",
                   [](Rng& r) { return std::vector{random_matrix(r, 3, 5), random_matrix(r, 4, 5)}; },
                   [](const auto& x) { return cosine_similarity(x[0], x[1]); }});
  cases.push_back({"gather_rows", [](Rng& r) { return std::vector{random_matrix(r, 4, 3)}; },
                   [](const auto& x) {
                     const std::vector<std::size_t> idx{2, 0, 2, 3};
                     return gather_rows(x[0], idx);
                   }});
  cases.push_back({"pick", [](Rng& r) { return std::vector{random_matrix(r, 3, 4)}; },
                   [](const auto& x) {
                     const std::vector<std::size_t> cols{1, 3, 0};
                     return pick(x[0], cols);
                   }});
  cases.push_back({"concat_rows",
                   [](Rng& r) { return std::vector{random_matrix(r, 2, 3), random_matrix(r, 3, 3)}; },
                   [](const auto& x) { return concat_rows({x[0], x[1], x[0]}); }});
  cases.push_back({"replace_rows",
                   [](Rng& r) { return std::vector{random_matrix(r, 5, 3), random_matrix(r, 1, 3)}; },
                   [](const auto& x) {
                     const std::vector<std::size_t> idx{1, 4};
                     return replace_rows(x[0], x[1], idx);
                   }});
  cases.push_back({"attention",
                   [](Rng& r) {
                     return std::vector{random_matrix(r, 8, 4), random_matrix(r, 8, 4), random_matrix(r, 8, 4)};
                   },
                   [](const auto& x) {
                     static const std::vector<std::uint8_t> valid{1, 1, 0, 1, 1, 1, 1, 0};
                     return attention(x[0], x[1], x[2], 2, 4, 2, valid);
                   }});
  return cases;
}

}  // namespace

TEST_CASE("backward of x*x and x*y", "[numkernel]") {
  Tensor x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  CHECK(x.grad()[0] == 6.0);

  Tensor a = Tensor::scalar(2.0, true);
  Tensor b = Tensor::scalar(5.0, true);
  const auto leaves = backward(mul(a, b));
  CHECK(leaves.size() == 2);
  CHECK(a.grad()[0] == 5.0);
  CHECK(b.grad()[0] == 2.0);
}

TEST_CASE("repeated backward accumulates into leaves", "[numkernel]") {
  Tensor x = Tensor::scalar(3.0, true);
  const Tensor y = mul(x, x);
  backward(y);
  backward(y);
  CHECK(x.grad()[0] == 12.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("softmax cross-entropy gradient matches central differences", "[numkernel]") {
  Rng rng(11);
  Tensor logits = random_matrix(rng, 4, 7);
  const std::vector<std::size_t> targets{0, 6, 3, 3};
  const auto r = check_gradients(
      [&] { return scale(mean(pick(log_softmax_rows(logits), targets)), -1.0); }, {logits},
      {.step = 1e-5, .floor = 1e-6});
  CHECK(r.checked == 28);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("every op passes randomized finite-difference checks", "[numkernel]") {
  for (const OpCase& c : op_cases()) {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
      Rng rng(derive_seed(1234, trial));
      std::vector<Tensor> inputs = c.make_inputs(rng);
      const auto r = check_gradients([&] { return readout(c.apply(inputs), 77 + trial); }, inputs);
      INFO(c.name << " trial " << trial << " rel err " << r.max_rel_error);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("ops never mutate their inputs", "[numkernel]") {
  Rng rng(5);
  for (const OpCase& c : op_cases()) {
    std::vector<Tensor> inputs = c.make_inputs(rng);
    for (Tensor& t : inputs) t.set_requires_grad(true);
    std::vector<std::vector<double>> before;
    for (const Tensor& t : inputs) before.emplace_back(t.data().begin(), t.data().end());
    backward(readout(c.apply(inputs), 3));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      INFO(c.name);
      CHECK(std::vector<double>(inputs[i].data().begin(), inputs[i].data().end()) == before[i]);
    }
  }
}

TEST_CASE("backward is linear over summed graphs", "[numkernel]") {
  Rng rng(8);
  Tensor a = random_matrix(rng, 3, 4);
  Tensor b = random_matrix(rng, 4, 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto f = [&] { return readout(gelu(matmul(a, b)), 1); };
  auto g = [&] { return readout(softmax_rows(matmul(a, b)), 2); };

  backward(f());
  std::vector<double> ga(a.grad().begin(), a.grad().end());
  std::vector<double> gb(b.grad().begin(), b.grad().end());
  a.zero_grad();
  b.zero_grad();
  backward(g());
  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += a.grad()[i];
  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += b.grad()[i];
  a.zero_grad();
  b.zero_grad();
  backward(add(f(), g()));
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(a.grad()[i] == Catch::Approx(ga[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < gb.size(); ++i) CHECK(b.grad()[i] == Catch::Approx(gb[i]).epsilon(1e-12));
}

TEST_CASE("standardized rows have zero mean and unit variance", "[numkernel]") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_matrix(rng, 5, 16, 3.0);
    const Tensor y = standardize_rows(x);
    for (std::size_t i = 0; i < 5; ++i) {
      double mu = 0.0, var = 0.0;
      for (std::size_t j = 0; j < 16; ++j) mu += y.at(i, j);
      mu /= 16.0;
      for (std::size_t j = 0; j < 16; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu);
      var /= 16.0;
      CHECK(std::fabs(mu) < 1e-9);
      CHECK(std::fabs(var - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("tensor construction enforces its invariants", "[numkernel]") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, std::vector<double>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor::from({0, 3}, {}), ShapeError);
  CHECK(Tensor::from({2, 3}, std::vector<double>(6)).numel() == 6);
  Tensor bad = Tensor::matrix(1, 2, {1.0, std::nan("")});
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("shape mismatches are hard errors", "[numkernel]") {
  Rng rng(1);
  const Tensor a = random_matrix(rng, 2, 3);
  const Tensor b = random_matrix(rng, 3, 2);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(mul(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(add_rowvec(a, random_matrix(rng, 1, 2)), ShapeError);
}

TEST_CASE("backward error paths", "[numkernel]") {
  SECTION("non-scalar loss") {
    Tensor x = Tensor::matrix(1, 2, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(scale(x, 2.0)), ShapeError);
  }
  SECTION("unsupported op") {
    Tensor x = Tensor::scalar(1.5, true);
    const Tensor rounded = make_result("round", {}, {std::round(x.item())}, {x}, nullptr);
    CHECK_THROWS_AS(backward(rounded), InvalidArgument);
  }
  SECTION("NaN during propagation") {
    Tensor x = Tensor::matrix(1, 1, {800.0}, true);
    const Tensor loss = sum(scale(exp(x), 0.0));
    CHECK_THROWS_AS(backward(loss), NumericError);
  }
}

TEST_CASE("no-grad mode records no graph", "[numkernel]") {
  Tensor x = Tensor::scalar(2.0, true);
  NoGradGuard guard;
  const Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("adam with zero gradient leaves parameters unchanged", "[numkernel]") {
  std::vector<Tensor> params{Tensor::matrix(2, 2, {1.0, -2.0, 3.0, 0.5}, true)};
  backward(scale(sum(params[0]), 0.0));
  AdamState st = make_adam_state(params);
  adam_step(params, st, 1e-3);
  CHECK(std::vector<double>(params[0].data().begin(), params[0].data().end()) ==
        std::vector<double>{1.0, -2.0, 3.0, 0.5});
  for (double m : st.first_moment[0]) CHECK(m == 0.0);
  for (double v : st.second_moment[0]) CHECK(v == 0.0);
  CHECK(st.step_count == 1);
}

TEST_CASE("adam first step moves by lr/(1+eps)", "[numkernel]") {
  std::vector<Tensor> params{Tensor::scalar(0.25, true)};
  backward(params[0]);  // d/dp p = 1
  AdamState st = make_adam_state(params);
  adam_step(params, st, 1e-5);
  CHECK(params[0].item() == Catch::Approx(0.25 - 1e-5 / (1.0 + 1e-8)).epsilon(0).margin(1e-18));
}

TEST_CASE("adam trajectory matches a reference implementation", "[numkernel]") {
  // Reference: textbook Adam written against plain doubles.
  struct RefAdam {
    double m = 0, v = 0;
    int t = 0;
    double step(double p, double g, double lr) {
      ++t;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1 - std::pow(0.9, t));
      const double vh = v / (1 - std::pow(0.999, t));
      return p - lr * mh / (std::sqrt(vh) + 1e-8);
    }
  };
  Rng rng(99);
  std::vector<double> init{rng.normal(), rng.normal(), rng.normal()};
  std::vector<Tensor> params{Tensor::matrix(1, 3, init, true)};
  AdamState st = make_adam_state(params);
  std::vector<RefAdam> ref(3);
  std::vector<double> ref_p = init;
  for (int step = 0; step < 10; ++step) {
    // loss = sum(c_i * p_i^2) so grads depend on the trajectory
    const Tensor c = Tensor::matrix(1, 3, {0.5, 1.5, -0.7});
    params[0].zero_grad();
    backward(sum(mul(c, mul(params[0], params[0]))));
    adam_step(params, st, 1e-2);
    for (int i = 0; i < 3; ++i) {
      const double g = 2.0 * c[i] * ref_p[i];
      ref_p[i] = ref[i].step(ref_p[i], g, 1e-2);
    }
  }
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(params[0][i] - ref_p[i]) < 1e-12);
  CHECK(st.step_count == 10);
}

TEST_CASE("adam rejects mismatched state and non-finite gradients", "[numkernel]") {
  std::vector<Tensor> params{Tensor::matrix(1, 2, {1.0, 2.0}, true)};
  AdamState st = make_adam_state(params);
  std::vector<Tensor> other{Tensor::matrix(2, 1, {1.0, 2.0}, true)};
  CHECK_THROWS_AS(adam_step(other, st, 1e-3), ShapeError);
  CHECK_THROWS_AS(adam_step(params, st, 0.0), InvalidArgument);
}

TEST_CASE("learning-rate schedule", "[numkernel]") {
  LrSchedule s;
  s.steps_per_epoch = 10;  // warmup 50 steps, 600 total
  CHECK(lr_at(0, s) == Catch::Approx(1e-6).epsilon(1e-12));
  CHECK(lr_at(50, s) == Catch::Approx(1e-5).epsilon(1e-12));
  CHECK(lr_at(50 + 275, s) == Catch::Approx(5e-6).epsilon(1e-12));
  // Warmup approaches base_lr; decay is monotone.
  CHECK(std::fabs(lr_at(49, s) - 1e-5) < (1e-5 - 1e-6) / 50 + 1e-18);
  for (std::size_t i = 51; i < 600; ++i) CHECK(lr_at(i, s) <= lr_at(i - 1, s));
  CHECK_THROWS_AS(lr_at(600, s), RangeError);
}

TEST_CASE("checkpoint round trip is bit-exact", "[numkernel]") {
  Rng rng(3);
  NamedTensors params{{"a.weight", random_matrix(rng, 3, 4)},
                      {"b", Tensor::from({5}, {0.0, -0.0, 1e-310, 1.0 / 3.0, -7.5})},
                      {"scalar", Tensor::scalar(M_PI)}};
  const std::string bytes = encode_checkpoint(params);
  const NamedTensors back = decode_checkpoint(bytes);
  REQUIRE(back.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(back[i].first == params[i].first);
    CHECK(back[i].second.shape() == params[i].second.shape());
    for (std::size_t j = 0; j < params[i].second.numel(); ++j) {
      CHECK(std::bit_cast<std::uint64_t>(back[i].second[j]) ==
            std::bit_cast<std::uint64_t>(params[i].second[j]));
    }
  }
  CHECK(encode_checkpoint(back) == bytes);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 20)), FormatError);
  CHECK_THROWS_AS(decode_checkpoint("not a checkpoint at all"), FormatError);
}
