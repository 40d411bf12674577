// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "bimatch/encoders.hpp"

using namespace bimatch;
using namespace bimatch::encoders;
using numkernel::Tensor;

namespace {

RgbImage random_image(std::size_t h, std::size_t w, Rng& rng) {
  RgbImage img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = scale * rng.normal();
  return Tensor::matrix(r, c, std::move(v));
}

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.hidden_dim = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.patch_size = 4;
  c.image_height = 8;
  c.image_width = 4;
  c.max_text_len = 6;
  c.vocab_size = 10;
  return c;
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * t.cols()),
          t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols())};
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("image encoder output length is patches plus CLS", "[encoders]") {
  EncoderConfig cfg;
  cfg.vocab_size = 40;
  Rng rng(1);
  const ImageEncoder enc(cfg, rng);
  const RgbImage img = random_image(64, 32, rng);
  const auto out = enc.encode(img);
  CHECK(out.seq == 33);
  CHECK(out.tokens.rows() == 33);
  CHECK(out.tokens.cols() == 64);
  CHECK(out.tokens.all_finite());
  CHECK_THROWS_AS(enc.encode(random_image(60, 32, rng)), ShapeError);
  CHECK_THROWS_AS(patchify(random_image(60, 32, rng), 8), ShapeError);
}

TEST_CASE("distinct images give distinct CLS embeddings", "[encoders]") {
  EncoderConfig cfg;
  cfg.vocab_size = 40;
  Rng rng(2);
  const ImageEncoder enc(cfg, rng);
  const RgbImage a = random_image(64, 32, rng), b = random_image(64, 32, rng);
  const auto out = enc.encode({&a, &b});
  CHECK(max_abs_diff(row_of(out.tokens, 0), row_of(out.tokens, out.seq)) > 1e-6);
}

TEST_CASE("patch permutation permutes outputs without positional embeddings", "[encoders]") {
  EncoderConfig cfg;
  cfg.hidden_dim = 16;
  cfg.num_layers = 1;
  cfg.num_heads = 4;
  cfg.patch_size = 8;
  cfg.image_height = 16;
  cfg.image_width = 16;  // 4 patches
  cfg.vocab_size = 10;
  Rng rng(3);
  ImageEncoder enc(cfg, rng);
  for (double& x : enc.positional().mutable_data()) x = 0.0;
  const Tensor patches = random_matrix(4, cfg.patch_dim(), rng);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  const Tensor permuted = numkernel::gather_rows(patches, perm);
  const auto a = enc.encode_patches(patches, 1);
  const auto b = enc.encode_patches(permuted, 1);
  CHECK(max_abs_diff(row_of(a.tokens, 0), row_of(b.tokens, 0)) < 1e-12);
  for (std::size_t i = 0; i < 4; ++i) {
    // output token i+1 of the permuted run came from input patch perm[i]
    CHECK(max_abs_diff(row_of(b.tokens, 1 + i), row_of(a.tokens, 1 + perm[i])) < 1e-12);
  }
}

TEST_CASE("text encoder output length is max_text_len", "[encoders]") {
  EncoderConfig cfg = tiny_config();
  Rng rng(4);
  const TextEncoder enc(cfg, rng);
  for (const auto& ids : std::vector<std::vector<int>>{{1, 2}, {1, 5, 2}, {1, 5, 6, 7, 8, 2}}) {
    const auto out = enc.encode({ids});
    CHECK(out.tokens.rows() == cfg.max_text_len);
    CHECK(out.eos[0] == ids.size() - 1);
  }
  CHECK_THROWS(enc.encode({{1, 5, 0, 2}}));
  CHECK_THROWS(enc.encode({{5, 2}}));
  CHECK_THROWS(enc.encode({{1, 5, 6, 7, 8, 9, 2}}));
  CHECK_THROWS(enc.encode({{1, 12, 2}}));
}

TEST_CASE("trimmed padding keeps every valid row", "[encoders]") {
  EncoderConfig cfg = tiny_config();
  Rng rng(41);
  const TextEncoder enc(cfg, rng);
  const std::vector<std::vector<int>> caps{{1, 5, 2, 0, 0, 0}, {1, 7, 8, 9, 2}, {1, 6, 2}};
  const auto full = enc.encode(caps);
  const auto trimmed = enc.encode(caps, {}, true);
  REQUIRE(trimmed.seq == 5);
  CHECK(trimmed.eos == full.eos);
  for (std::size_t b = 0; b < caps.size(); ++b) {
    for (std::size_t i = 0; i <= full.eos[b]; ++i) {
      CHECK(max_abs_diff(row_of(trimmed.tokens, trimmed.row(b, i)), row_of(full.tokens, full.row(b, i))) < 1e-12);
      CHECK(trimmed.key_valid[trimmed.row(b, i)] == 1);
    }
  }
}

TEST_CASE("PAD-region ids never reach non-PAD outputs", "[encoders]") {
  EncoderConfig cfg = tiny_config();
  Rng rng(5);
  const TextEncoder enc(cfg, rng);
  const std::vector<int> clean{1, 5, 6, 2, 0, 0};
  const std::vector<int> noisy{1, 5, 6, 2, 9, 4};
  const auto a = enc.encode_tokens(clean, 1, {4});
  const auto b = enc.encode_tokens(noisy, 1, {4});
  for (std::size_t i = 0; i < 4; ++i) CHECK(row_of(a.tokens, i) == row_of(b.tokens, i));
}

TEST_CASE("padding length does not change the SOS embedding", "[encoders]") {
  EncoderConfig cfg = tiny_config();
  Rng rng(6);
  const TextEncoder enc(cfg, rng);
  const std::vector<int> shortform{1, 7, 8, 2};
  const std::vector<int> padded{1, 7, 8, 2, 0, 0};
  const auto a = enc.encode({shortform});
  const auto b = enc.encode({padded});
  // batched next to a longer caption, which shifts nothing either
  const auto c = enc.encode({{1, 5, 5, 5, 5, 2}, shortform});
  CHECK(max_abs_diff(row_of(a.tokens, 0), row_of(b.tokens, 0)) < 1e-12);
  CHECK(max_abs_diff(row_of(a.tokens, 0), row_of(c.tokens, c.row(1, 0))) < 1e-12);
}

TEST_CASE("global features are unit-norm and similarities match a loop oracle", "[encoders]") {
  EncoderConfig cfg = tiny_config();
  Rng rng(7);
  const ImageEncoder ie(cfg, rng);
  const TextEncoder te(cfg, rng);
  std::vector<RgbImage> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back(random_image(8, 4, rng));
  std::vector<const RgbImage*> ptrs;
  for (const auto& im : imgs) ptrs.push_back(&im);
  const std::vector<std::vector<int>> caps{{1, 4, 2}, {1, 5, 6, 2}, {1, 7, 2}, {1, 8, 9, 4, 2}, {1, 2}};
  const auto io = ie.encode(ptrs);
  const auto to = te.encode(caps);
  for (TextGlobal which : {TextGlobal::sos, TextGlobal::eos}) {
    const auto g = global_features(io, to, which);
    for (const Tensor* t : {&g.image, &g.text}) {
      for (std::size_t r = 0; r < 5; ++r) {
        double n = 0.0;
        for (double x : row_of(*t, r)) n += x * x;
        CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-12);
      }
    }
    const Tensor self = numkernel::cosine_similarity(g.image, g.image);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::fabs(self.at(i, i) - 1.0) < 1e-12);

    const Tensor sim = similarity(g.text, g.image);
    const auto raw = global_embeddings(io, to, which);
    for (std::size_t q = 0; q < 5; ++q) {
      for (std::size_t k = 0; k < 5; ++k) {
        double dot = 0.0, nq = 0.0, nk = 0.0;
        for (std::size_t c = 0; c < cfg.hidden_dim; ++c) {
          dot += raw.text.at(q, c) * raw.image.at(k, c);
          nq += raw.text.at(q, c) * raw.text.at(q, c);
          nk += raw.image.at(k, c) * raw.image.at(k, c);
        }
        CHECK(std::fabs(sim.at(q, k) - dot / std::sqrt(nq * nk)) < 1e-12);
      }
    }
  }
  // EOS and SOS rows really are different positions
  CHECK(max_abs_diff(row_of(text_global(to, TextGlobal::sos), 0), row_of(text_global(to, TextGlobal::eos), 0)) >
        1e-9);
}

TEST_CASE("encoders are deterministic and share no parameters", "[encoders]") {
  EncoderConfig cfg = tiny_config();
  Rng r1(8), r2(8);
  const ImageEncoder a(cfg, r1), b(cfg, r2);
  Rng rng(9);
  const RgbImage img = random_image(8, 4, rng);
  const auto ta = a.encode(img).tokens, tb = b.encode(img).tokens;
  CHECK(std::vector<double>(ta.data().begin(), ta.data().end()) ==
        std::vector<double>(tb.data().begin(), tb.data().end()));

  const TextEncoder t(cfg, r1);
  std::set<const void*> nodes;
  for (const auto& [n, p] : a.params()) nodes.insert(p.node().get());
  for (const auto& [n, p] : t.params()) CHECK(nodes.count(p.node().get()) == 0);
}

TEST_CASE("encoder gradients match finite differences", "[encoders]") {
  EncoderConfig cfg = tiny_config();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const ImageEncoder ie(cfg, rng);
    const TextEncoder te(cfg, rng);
    const Tensor patches = random_matrix(2 * cfg.num_image_patches(), cfg.patch_dim(), rng);
    const Tensor wi = random_matrix(2 * (cfg.num_image_patches() + 1), cfg.hidden_dim, rng);
    const Tensor wt = random_matrix(2 * cfg.max_text_len, cfg.hidden_dim, rng);
    const std::vector<std::vector<int>> caps{{1, 4, 5, 2}, {1, 9, 2}};

    std::vector<Tensor> inputs{patches};
    for (const auto& [n, p] : ie.params()) inputs.push_back(p);
    for (const auto& [n, p] : te.params()) inputs.push_back(p);
    auto loss = [&] {
      const auto io = ie.encode_patches(patches, 2);
      const auto to = te.encode(caps);
      return numkernel::add(numkernel::sum(numkernel::mul(io.tokens, wi)),
                            numkernel::sum(numkernel::mul(to.tokens, wt)));
    };
    numkernel::GradCheckOptions opt;
    opt.max_elements_per_input = 12;
    const auto r = numkernel::check_gradients(loss, inputs, opt);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.checked > 100);
  }
}
