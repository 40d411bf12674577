// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment suites built from repeated training runs: component ablation,
// MIM-method comparison, and the mask-rate / loss-weight sweeps.

#pragma once

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bimatch/trainer/train.hpp"

namespace bimatch::trainer {

namespace detail {

inline std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

inline RunReport run_variant(const TrainConfig& base, const TrainData& td, const std::string& subdir,
                             const std::function<void(TrainConfig&)>& edit, const TrainOptions& opt) {
  TrainConfig c = base;
  edit(c);
  c.output_dir = (std::filesystem::path(base.output_dir) / subdir).string();
  if (opt.log) *opt.log << "== " << subdir << " (" << config_hash(c) << ")\n";
  return train(from_config(c), td, opt).report;
}

}  // namespace detail

// ------------------------------------------------------------- ablation

struct AblationRow {
  std::string name;
  bool mlm = false, semmim = false;
  RunReport report;
};

inline std::vector<AblationRow> run_ablation(const TrainConfig& base, const TrainData& td,
                                             const TrainOptions& opt = {}) {
  struct Variant {
    const char* name;
    bool mlm, semmim;
  };
  const Variant variants[] = {{"neither", false, false}, {"mlm_only", true, false}, {"semmim_only", false, true},
                              {"both", true, true}};
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    AblationRow r{v.name, v.mlm, v.semmim, {}};
    r.report = detail::run_variant(base, td, std::string("ablation/") + v.name,
                                   [&](TrainConfig& c) {
                                     c.mlm_enabled = v.mlm;
                                     c.mim_method = v.semmim ? "semantic" : "none";
                                   },
                                   opt);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "MLM,SemMIM,R@1,R@5,R@10,mAP,config_hash\n";
  for (const auto& r : rows) {
    const auto& f = r.report.final_result;
    out += std::string(r.mlm ? "✓" : "") + "," + (r.semmim ? "✓" : "") + "," + detail::pct(f.r(1)) + "," +
           detail::pct(f.r(5)) + "," + detail::pct(f.r(10)) + "," + detail::pct(f.mean_ap) + "," +
           r.report.config_hash + "\n";
  }
  return out;
}

// ------------------------------------------------------- MIM comparison

struct MimRow {
  std::string method;
  RunReport report;
};

inline const std::vector<std::string>& mim_comparison_methods() {
  static const std::vector<std::string> m{"none", "pixel", "patch", "feature", "semantic"};
  return m;
}

// MLM stays on and every MIM variant uses mask rate 0.15 and weight 1.0.
inline std::vector<MimRow> run_mim_comparison(const TrainConfig& base, const TrainData& td,
                                              const TrainOptions& opt = {}) {
  std::vector<MimRow> rows;
  for (const std::string& method : mim_comparison_methods()) {
    rows.push_back({method, detail::run_variant(base, td, "mim/" + method,
                                                [&](TrainConfig& c) {
                                                  c.mlm_enabled = true;
                                                  c.m_t = 0.15;
                                                  c.m_p = 0.15;
                                                  c.beta = 1.0;
                                                  c.mim_method = method;
                                                },
                                                opt)});
  }
  return rows;
}

inline std::string mim_csv(const std::vector<MimRow>& rows) {
  std::string out = "method,R@1,mAP,config_hash\n";
  for (const auto& r : rows) {
    out += r.method + "," + detail::pct(r.report.final_result.r(1)) + "," +
           detail::pct(r.report.final_result.mean_ap) + "," + r.report.config_hash + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- sweep

// Two one-dimensional experiments: image mask rate at a fixed weight, and
// loss weight at each of a few fixed mask rates. The text mask rate is not
// swept.
struct SweepGrid {
  std::vector<double> mask_rates{0.15, 0.30, 0.50, 0.75, 1.0};
  double mask_rate_beta = 1.0;
  std::vector<double> betas{0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 2.0};
  std::vector<double> beta_mask_rates{0.15, 0.50};

  // (experiment, m_p, beta) in run order.
  std::vector<std::tuple<std::string, double, double>> points() const {
    if (mask_rates.empty() || betas.empty() || beta_mask_rates.empty()) {
      throw InvalidArgument("sweep grids must be non-empty");
    }
    std::vector<std::tuple<std::string, double, double>> out;
    std::set<std::pair<double, double>> seen;
    auto add = [&](const char* exp, double m, double b) {
      if (!seen.insert({m, b}).second) {
        throw InvalidArgument("sweep grid repeats (m_p=" + detail::num(m) + ", beta=" + detail::num(b) + ")");
      }
      out.emplace_back(exp, m, b);
    };
    for (double m : mask_rates) add("mask_rate", m, mask_rate_beta);
    for (double m : beta_mask_rates)
      for (double b : betas) add("loss_weight", m, b);
    return out;
  }
};

struct SweepRow {
  std::string experiment;
  double m_p = 0, beta = 0;
  RunReport report;
};

inline std::vector<SweepRow> run_sweep(const TrainConfig& base, const TrainData& td, const SweepGrid& grid = {},
                                       const TrainOptions& opt = {}) {
  std::vector<SweepRow> rows;
  for (const auto& [exp, m, b] : grid.points()) {
    const std::string sub = "sweep/" + exp + "_m" + detail::num(m) + "_b" + detail::num(b);
    rows.push_back({exp, m, b, detail::run_variant(base, td, sub,
                                                   [&](TrainConfig& c) {
                                                     c.m_p = m;
                                                     c.beta = b;
                                                   },
                                                   opt)});
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "experiment,m_p,beta,R@1,mAP,config_hash\n";
  for (const auto& r : rows) {
    out += r.experiment + "," + detail::num(r.m_p) + "," + detail::num(r.beta) + "," +
           detail::pct(r.report.final_result.r(1)) + "," + detail::pct(r.report.final_result.mean_ap) + "," +
           r.report.config_hash + "\n";
  }
  return out;
}

}  // namespace bimatch::trainer
