// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Usage: acceptance [work_dir] [--only name,...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bimatch/crossmodal.hpp"
#include "bimatch/losses.hpp"
#include "bimatch/patchlabel.hpp"
#include "bimatch/trainer.hpp"
#include "oracles.hpp"

using namespace bimatch;
using namespace bimatch::oracle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// |got - want| within tol, scaled up for references above 1.
bool close(double got, double want, double tol) { return std::fabs(got - want) <= tol * std::max(1.0, std::fabs(want)); }

// ------------------------------------------------------------ criteria

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = trainer::run_gradient_suite(10);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failed;
  std::size_t min_instances = SIZE_MAX;
  for (const auto& c : cases) {
    if (c.max_rel_error >= worst) worst = c.max_rel_error, worst_name = c.name;
    if (c.max_rel_error >= trainer::kGradTolerance) failed += " " + c.name;
    min_instances = std::min(min_instances, c.instances);
  }
  const bool ok = failed.empty() && min_instances >= 10 && secs < 120.0;
  return {ok, std::to_string(cases.size()) + " cases x " + std::to_string(min_instances) +
                  " instances, worst " + fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1f s", secs) +
                  (failed.empty() ? "" : ", failing:" + failed)};
}

Outcome closed_form_losses() {
  using numkernel::Tensor;
  std::size_t checks = 0, bad = 0;
  double worst_closed = 0.0, worst_literal = 0.0;
  auto closed = [&](double got, double want) {
    ++checks;
    worst_closed = std::max(worst_closed, std::fabs(got - want));
    if (std::fabs(got - want) > 1e-9) ++bad;
  };
  auto literal = [&](double got, double want) {
    ++checks;
    worst_literal = std::max(worst_literal, std::fabs(got - want) / std::max(1.0, std::fabs(want)));
    if (!close(got, want, 1e-12)) ++bad;
  };

  Rng rng(2026);
  for (std::size_t v : {5, 8, 24, 61, 200}) {
    const double c = rng.normal();
    const std::size_t rows = 1 + rng.below(6);
    const Tensor z = Tensor::filled({rows, v}, c);
    const auto y = random_labels(rows, v, rng);
    const double want = std::log(static_cast<double>(v)) / static_cast<double>(v);
    closed(losses::mlm_loss(z, y, v).item(), want);
    closed(losses::semmim_loss(z, y, v).item(), want);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = random_matrix(6, 11, rng, 2.0);
    const auto y = random_labels(6, 11, rng);
    literal(losses::mlm_loss(z, y, 11).item(), oracle_masked_ce(z, y, 11));
    literal(losses::semmim_loss(z, y, 11).item(), oracle_masked_ce(z, y, 11));

    const Tensor v = unit_rows(6, 5, rng), t = unit_rows(6, 5, rng);
    const std::vector<int> ids{0, 1, 0, 2, 1, 3};
    literal(losses::sdm_loss(v, t, ids).item(), oracle_sdm(v, t, ids, 0.02, 1e-8));
    literal(losses::sdm_loss(v, t, ids, {0.3, 1e-8}).item(), oracle_sdm(v, t, ids, 0.3, 1e-8));

    const Tensor a = random_matrix(6, 5, rng), b = random_matrix(6, 5, rng), w = random_matrix(4, 5, rng);
    literal(losses::id_loss(a, b, ids, w).item(), oracle_id(a, b, ids, w));

    const Tensor p = random_matrix(3, 12, rng), q = random_matrix(3, 12, rng);
    literal(losses::pixel_mim_loss(p, q).item(), oracle_mse(p, q));
    const Tensor pm = random_matrix(5, 1, rng), qm = random_matrix(5, 1, rng);
    literal(losses::patch_mim_loss(pm, qm).item(), oracle_mse(pm, qm));
    literal(losses::feature_mim_loss(p, q).item(), oracle_feature_kl(p, q));

    const double alpha = rng.uniform(0.0, 2.0), beta = rng.uniform(0.0, 2.0);
    const auto tl = losses::total_loss(losses::id_loss(a, b, ids, w), losses::sdm_loss(v, t, ids),
                                       losses::mlm_loss(z, y, 11), losses::semmim_loss(z, y, 11), alpha, beta);
    literal(tl.total.item(), oracle_id(a, b, ids, w) + oracle_sdm(v, t, ids, 0.02, 1e-8) +
                                 alpha * oracle_masked_ce(z, y, 11) + beta * oracle_masked_ce(z, y, 11));
  }
  return {bad == 0, std::to_string(checks) + " checks, worst closed-form error " + fmt("%.1e", worst_closed) +
                        ", worst literal error " + fmt("%.1e", worst_literal)};
}

Outcome patch_labeling() {
  Rng rng(99);
  std::size_t patches = 0, ties = 0, mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t p = 1 + rng.below(8);
    const std::size_t rows = 1 + rng.below(5), cols = 1 + rng.below(5);
    const std::size_t classes = 2 + rng.below(30);
    LabelMap m(rows * p, cols * p);
    const std::size_t used = 2 + rng.below(std::min<std::size_t>(classes - 1, 3));
    for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng.below(used) * (classes - 1) / used);
    const auto g = patchlabel::label_patches(m, p, classes);
    if (g.rows != rows || g.cols != cols) return {false, "grid shape mismatch at trial " + std::to_string(trial)};
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        ++patches;
        ties += has_tie(m, r, c, p);
        mismatches += g.at(r, c) != oracle_block(m, r, c, p);
      }
  }
  return {mismatches == 0 && ties > 0, "1000 maps, " + std::to_string(patches) + " patches, " +
                                           std::to_string(ties) + " ties, " + std::to_string(mismatches) +
                                           " mismatches"};
}

Outcome retrieval_metrics() {
  Rng rng(7);
  double worst = 0.0;
  std::size_t non_monotone = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nq = 4 + rng.below(12), ids = 3 + rng.below(6), ng = ids * (2 + rng.below(3));
    std::vector<int> gid(ng);
    for (std::size_t g = 0; g < ng; ++g) gid[g] = static_cast<int>(g % ids);
    rng.shuffle(gid);
    std::vector<int> qid(nq);
    for (int& q : qid) q = static_cast<int>(rng.below(ids));
    std::vector<double> sim(nq * ng);
    for (double& s : sim) s = trial % 2 ? static_cast<double>(rng.below(5)) / 3.0 : rng.normal();
    const auto got = evalmetrics::evaluate(sim, nq, ng, qid, gid);
    const auto want = retrieval_oracle(sim, nq, ng, qid, gid);
    for (std::size_t k : {1, 5, 10}) worst = std::max(worst, std::fabs(got.r(k) - want.r(k)));
    worst = std::max(worst, std::fabs(got.mean_ap - want.mean_ap));
    non_monotone += !(got.r(1) <= got.r(5) && got.r(5) <= got.r(10));
  }
  return {worst <= 1e-12 && non_monotone == 0,
          "50 matrices, worst error " + fmt("%.1e", worst) + ", " + std::to_string(non_monotone) + " non-monotone"};
}

Outcome masking_statistics() {
  Rng rng(31);
  std::vector<int> ids{1};
  for (int i = 0; i < 24; ++i) ids.push_back(4 + i % 9);
  ids.push_back(2);
  const std::size_t text_slots = 24, patches = 32, draws = 10000;
  double worst = 0.0;
  std::string detail;
  for (double rate : {0.15, 0.30, 0.50, 0.75, 1.0}) {
    std::size_t t = 0, p = 0;
    for (std::size_t i = 0; i < draws; ++i) {
      t += crossmodal::mask_text(ids, rate, rng).positions.size();
      p += crossmodal::draw_image_mask(patches, rate, rng).size();
    }
    const double et = static_cast<double>(t) / static_cast<double>(draws * text_slots);
    const double ep = static_cast<double>(p) / static_cast<double>(draws * patches);
    worst = std::max({worst, std::fabs(et - rate), std::fabs(ep - rate)});
    detail += " " + fmt("%.2f", rate) + "->" + fmt("%.4f", et) + "/" + fmt("%.4f", ep);
  }
  return {worst <= 0.01, "10000 draws, 24 text / 32 image slots, rate->text/image:" + detail +
                             ", worst deviation " + fmt("%.4f", worst)};
}

// -------------------------------------------------- training criteria

struct Workspace {
  fs::path root;
  synthdata::Dataset desk_data, small_data;
};

trainer::TrainConfig desk_config(const fs::path& out) {
  trainer::TrainConfig c = trainer::desk_profile();
  c.seed = 0;
  c.test_identities = 16;
  c.output_dir = out.string();
  return c;
}

Outcome end_to_end(const Workspace& ws, std::optional<trainer::TrainResult>& keep) {
  const trainer::TrainConfig c = desk_config(ws.root / "desk");
  const trainer::TrainData td(ws.desk_data, c);
  trainer::TrainOptions opt;
  opt.log = &std::cerr;
  auto res = trainer::train(trainer::from_config(c), td, opt);
  const auto& rep = res.report;
  const double first = rep.epochs.front().total, last = rep.epochs.back().total;
  const double r1 = rep.final_result.r(1);
  std::string detail = std::to_string(rep.epochs.size()) + " epochs on " + std::to_string(td.num_train_ids) +
                       " train ids: total " + fmt("%.3f", first) + " -> " + fmt("%.3f", last) + " (ratio " +
                       fmt("%.3f", last / first) + "), test R@1 " + fmt("%.3f", r1) + ", " +
                       fmt("%.0f s", rep.wall_seconds);
  bool ok = rep.all_finite() && last < 0.5 * first && r1 >= 0.5 && rep.wall_seconds < 900.0 &&
            rep.epochs.size() <= 30;

  // Component and MIM-method variants on the same data, one epoch each.
  trainer::TrainConfig v = c;
  v.epochs = 1;
  v.warmup_epochs = 0;
  v.output_dir = (ws.root / "desk_variants").string();
  trainer::TrainOptions quiet;
  quiet.eval_every_epoch = false;
  const auto ab = trainer::run_ablation(v, td, quiet);
  bool ab_ok = ab.size() == 4 && ab.front().report.cme_calls == 0;
  for (const auto& r : ab) ab_ok = ab_ok && r.report.all_finite();
  const auto mim = trainer::run_mim_comparison(v, td, quiet);
  bool mim_ok = mim.size() == 5;
  for (const auto& r : mim) mim_ok = mim_ok && r.report.all_finite();
  detail += "; ablation " + std::string(ab_ok ? "4/4 finite, neither-row CME calls 0" : "FAILED") + "; MIM " +
            (mim_ok ? "5/5 finite" : "FAILED");
  keep.emplace(std::move(res));
  return {ok && ab_ok && mim_ok, detail};
}

Outcome cme_removability(const Workspace& ws, trainer::TrainResult& res) {
  const trainer::TrainData td(ws.desk_data, res.report.config);
  const auto before = trainer::test_scores(res.model, td);
  Rng rng(424242);
  std::size_t touched = 0;
  for (auto& [name, p] : res.model.training_only_params()) {
    for (double& x : p.mutable_data()) x = 0.02 * rng.normal();
    touched += p.numel();
  }
  const auto after = trainer::test_scores(res.model, td);
  const bool same = before.sim.size() == after.sim.size() &&
                    std::memcmp(before.sim.data(), after.sim.data(), before.sim.size() * sizeof(double)) == 0;
  return {same, std::to_string(touched) + " CME/classifier weights re-randomized, " +
                    std::to_string(before.sim.size()) + " similarities " + (same ? "bit-identical" : "CHANGED")};
}

Outcome sweep_machinery(const Workspace& ws) {
  trainer::TrainConfig c;
  c.hidden_size = 16;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.cme_layers = 1;
  c.cme_heads = 2;
  c.text_tokens = 32;
  c.epochs = 1;
  c.warmup_epochs = 0;
  c.test_identities = 4;
  c.output_dir = (ws.root / "sweep").string();
  const trainer::TrainData td(ws.small_data, c);
  trainer::TrainOptions quiet;
  quiet.eval_every_epoch = false;
  const auto rows = trainer::run_sweep(c, td, {}, quiet);
  const std::string csv = trainer::sweep_csv(rows);
  trainer::write_text(ws.root / "sweep" / "sweep.csv", csv);
  const auto table = trainer::parse_csv(csv);

  std::set<std::string> hashes;
  std::set<std::pair<double, double>> points;
  bool finite = true, full_mask = false;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    hashes.insert(table.rows[r][table.column("config_hash")]);
    points.insert({table.number(r, "m_p"), table.number(r, "beta")});
    finite = finite && rows[r].report.all_finite();
    full_mask = full_mask || (rows[r].m_p == 1.0 && rows[r].report.all_finite());
  }
  std::size_t svgs = 0, good = 0;
  for (const auto& [name, chart] : trainer::charts_for(table)) {
    const std::string svg = trainer::render_svg(chart);
    trainer::write_text(ws.root / "sweep" / name, svg);
    ++svgs;
    good += trainer::is_well_formed_svg(svg);
  }
  const bool ok = table.rows.size() == 19 && hashes.size() == 19 && points.size() == 19 && finite && full_mask &&
                  svgs == 2 && good == 2;
  return {ok, std::to_string(table.rows.size()) + " rows, " + std::to_string(hashes.size()) + " distinct hashes, " +
                  std::to_string(points.size()) + " distinct (m_p, beta), m_p=1.0 run " +
                  (full_mask ? "finite" : "FAILED") + ", " + std::to_string(good) + "/" + std::to_string(svgs) +
                  " well-formed SVGs"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path root = "acceptance_runs";
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string s; std::getline(ss, s, ',');) only.insert(s);
    } else {
      root = a;
    }
  }
  auto wanted = [&](const std::string& n) { return only.empty() || only.count(n); };

  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(name)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  };

  report("gradient_suite", gradient_suite);
  report("closed_form_losses", closed_form_losses);
  report("patch_labeling", patch_labeling);
  report("retrieval_metrics", retrieval_metrics);
  report("masking_statistics", masking_statistics);

  Workspace ws;
  ws.root = root;
  if (wanted("end_to_end_smoke") || wanted("cme_removability") || wanted("sweep_machinery")) {
    fs::create_directories(root);
    synthdata::GenerateOptions g;
    g.num_identities = 80;  // 64 train + 16 test
    g.seed = 1;
    ws.desk_data = synthdata::generate_dataset(g);
    synthdata::GenerateOptions s;
    s.num_identities = 12;
    s.images_per_identity = 2;
    s.seed = 2;
    ws.small_data = synthdata::generate_dataset(s);
  }
  std::optional<trainer::TrainResult> desk;
  report("end_to_end_smoke", [&] {
    return end_to_end(ws, desk);
  });
  report("cme_removability", [&] {
    if (!desk) {
      trainer::TrainConfig c = desk_config(root / "removability");
      c.epochs = 2;
      c.warmup_epochs = 1;
      const trainer::TrainData td(ws.desk_data, c);
      trainer::TrainOptions opt;
      opt.write_outputs = false;
      opt.eval_every_epoch = false;
      desk.emplace(trainer::train(trainer::from_config(c), td, opt));
    }
    return cme_removability(ws, *desk);
  });
  report("sweep_machinery", [&] { return sweep_machinery(ws); });

  std::printf("%s: %d failing criteria\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
