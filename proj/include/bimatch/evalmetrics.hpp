// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Text-to-image retrieval metrics: Rank@K and mAP. Gallery items are ranked
// by descending score, ties going to the lower gallery index.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bimatch/common.hpp"

namespace bimatch::evalmetrics {

inline const std::vector<std::size_t>& default_ks() {
  static const std::vector<std::size_t> ks{1, 5, 10};
  return ks;
}

struct RetrievalResult {
  std::map<std::size_t, double> rank_at;
  double mean_ap = 0.0;
  std::size_t num_queries = 0;

  double r(std::size_t k) const {
    auto it = rank_at.find(k);
    if (it == rank_at.end()) throw InvalidArgument("Rank@" + std::to_string(k) + " was not computed");
    return it->second;
  }

  bool operator==(const RetrievalResult&) const = default;
};

// sim is row-major [num_queries, num_gallery].
inline RetrievalResult evaluate(std::span<const double> sim, std::size_t num_queries, std::size_t num_gallery,
                                std::span<const int> query_ids, std::span<const int> gallery_ids,
                                const std::vector<std::size_t>& ks = default_ks()) {
  if (num_queries == 0 || num_gallery == 0) throw InvalidArgument("evaluate: empty query or gallery set");
  if (sim.size() != num_queries * num_gallery) throw ShapeError("evaluate: score matrix size mismatch");
  if (query_ids.size() != num_queries || gallery_ids.size() != num_gallery) {
    throw ShapeError("evaluate: identity lists do not match the score matrix");
  }
  for (double s : sim)
    if (std::isnan(s)) throw NumericError("evaluate: NaN similarity score");
  for (std::size_t k : ks)
    if (k == 0) throw InvalidArgument("evaluate: K must be positive");

  RetrievalResult res;
  res.num_queries = num_queries;
  for (std::size_t k : ks) res.rank_at[k] = 0.0;
  std::vector<std::size_t> order(num_gallery);
  for (std::size_t q = 0; q < num_queries; ++q) {
    const double* row = sim.data() + q * num_gallery;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    std::size_t first_hit = num_gallery, hits = 0;
    double ap = 0.0;
    for (std::size_t r = 0; r < num_gallery; ++r) {
      if (gallery_ids[order[r]] != query_ids[q]) continue;
      if (hits == 0) first_hit = r;
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) {
      throw InvalidArgument("evaluate: query identity " + std::to_string(query_ids[q]) + " absent from gallery");
    }
    res.mean_ap += ap / static_cast<double>(hits);
    for (std::size_t k : ks)
      if (first_hit < k) res.rank_at[k] += 1.0;
  }
  const double nq = static_cast<double>(num_queries);
  res.mean_ap /= nq;
  for (auto& [k, v] : res.rank_at) v /= nq;
  return res;
}

// Rank@K must not decrease with K and every metric lies in [0, 1].
inline bool is_consistent(const RetrievalResult& r) {
  double prev = 0.0;
  for (const auto& [k, v] : r.rank_at) {
    if (!(v >= prev && v <= 1.0)) return false;
    prev = v;
  }
  return r.mean_ap >= 0.0 && r.mean_ap <= 1.0;
}

inline nlohmann::json to_json(const RetrievalResult& r) {
  nlohmann::json j;
  for (const auto& [k, v] : r.rank_at) j["R@" + std::to_string(k)] = v;
  j["mAP"] = r.mean_ap;
  j["num_queries"] = r.num_queries;
  return j;
}

inline std::string csv_header() { return "R@1,R@5,R@10,mAP"; }

// Percentages with two decimals, in the column order of csv_header().
inline std::string csv_row(const RetrievalResult& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,%.2f", 100.0 * r.r(1), 100.0 * r.r(5), 100.0 * r.r(10),
                100.0 * r.mean_ap);
  return buf;
}

}  // namespace bimatch::evalmetrics
