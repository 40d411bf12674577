// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "bimatch/evalmetrics.hpp"
#include "oracles.hpp"

using namespace bimatch;
using namespace bimatch::evalmetrics;
using namespace bimatch::oracle;

TEST_CASE("perfect ranking", "[evalmetrics]") {
  std::vector<double> sim(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) sim[i * 4 + (3 - i)] = 1.0;
  const std::vector<int> q{0, 1, 2, 3}, g{3, 2, 1, 0};
  const auto r = evaluate(sim, 4, 4, q, g);
  CHECK(r.r(1) == 1.0);
  CHECK(r.mean_ap == 1.0);
  CHECK(is_consistent(r));
}

TEST_CASE("true match ranked second", "[evalmetrics]") {
  const std::vector<double> sim{0.9, 0.4};
  const auto r = evaluate(sim, 1, 2, std::vector<int>{7}, std::vector<int>{1, 7});
  CHECK(r.r(1) == 0.0);
  CHECK(r.r(5) == 1.0);
  CHECK(r.mean_ap == 0.5);
}

TEST_CASE("ties break toward the lower gallery index", "[evalmetrics]") {
  const std::vector<double> sim{0.5, 0.5};
  CHECK(evaluate(sim, 1, 2, std::vector<int>{1}, std::vector<int>{1, 0}).r(1) == 1.0);
  CHECK(evaluate(sim, 1, 2, std::vector<int>{1}, std::vector<int>{0, 1}).r(1) == 0.0);
}

TEST_CASE("random matrices agree with the brute-force oracle", "[evalmetrics]") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nq = 8, ng = 20;
    std::vector<int> gid(ng);
    for (std::size_t g = 0; g < ng; ++g) gid[g] = static_cast<int>(g % 5);  // 4 images per identity
    rng.shuffle(gid);
    std::vector<int> qid(nq);
    for (int& q : qid) q = static_cast<int>(rng.below(5));
    std::vector<double> sim(nq * ng);
    // quantized scores so ties actually occur
    for (double& s : sim) s = static_cast<double>(rng.below(trial % 2 ? 6 : 1000000)) / 7.0;
    const auto got = evaluate(sim, nq, ng, qid, gid);
    const auto want = retrieval_oracle(sim, nq, ng, qid, gid);
    for (std::size_t k : {1, 5, 10}) CHECK(std::fabs(got.r(k) - want.r(k)) <= 1e-12);
    CHECK(std::fabs(got.mean_ap - want.mean_ap) <= 1e-12);
    CHECK(is_consistent(got));

    // strictly increasing transform
    std::vector<double> warped(sim);
    for (double& s : warped) s = s * s * s + 2.0 * s - 5.0;
    CHECK(evaluate(warped, nq, ng, qid, gid) == got);

    // an always-lowest irrelevant gallery item changes nothing
    std::vector<double> extended;
    for (std::size_t q = 0; q < nq; ++q) {
      extended.insert(extended.end(), sim.begin() + static_cast<std::ptrdiff_t>(q * ng),
                      sim.begin() + static_cast<std::ptrdiff_t>((q + 1) * ng));
      extended.push_back(-1e9);
    }
    std::vector<int> gid2(gid);
    gid2.push_back(99);
    const auto ext = evaluate(extended, nq, ng + 1, qid, gid2);
    for (std::size_t k : {1, 5, 10}) CHECK(ext.r(k) == got.r(k));
    CHECK(std::fabs(ext.mean_ap - got.mean_ap) <= 1e-15);
  }
}

TEST_CASE("evaluate error paths", "[evalmetrics]") {
  const std::vector<double> sim{0.1, 0.2};
  CHECK_THROWS_AS(evaluate(sim, 1, 2, std::vector<int>{3}, std::vector<int>{0, 1}), InvalidArgument);
  const std::vector<double> nan{0.1, std::nan("")};
  CHECK_THROWS_AS(evaluate(nan, 1, 2, std::vector<int>{0}, std::vector<int>{0, 1}), NumericError);
  CHECK_THROWS_AS(evaluate(sim, 2, 2, std::vector<int>{0, 0}, std::vector<int>{0, 1}), ShapeError);
}

TEST_CASE("JSON and CSV output", "[evalmetrics]") {
  const std::vector<double> sim{0.9, 0.4};
  const auto r = evaluate(sim, 1, 2, std::vector<int>{7}, std::vector<int>{1, 7});
  const auto j = to_json(r);
  CHECK(j["R@1"] == 0.0);
  CHECK(j["mAP"] == 0.5);
  CHECK(csv_header() == "R@1,R@5,R@10,mAP");
  CHECK(csv_row(r) == "0.00,100.00,100.00,50.00");
}
