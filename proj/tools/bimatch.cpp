// Copyright (c) 2026, The bimatch Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation, patch labeling, training,
// evaluation, the experiment suites, gradient checks and plotting.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "bimatch/trainer.hpp"

namespace fs = std::filesystem;
using namespace bimatch;

namespace {

void print_result(const char* label, const evalmetrics::RetrievalResult& r) {
  std::printf("%s R@1 %.2f  R@5 %.2f  R@10 %.2f  mAP %.2f\n", label, 100 * r.r(1), 100 * r.r(5), 100 * r.r(10),
              100 * r.mean_ap);
}

void write_suite_csv(const fs::path& dir, const char* name, const std::string& csv) {
  fs::create_directories(dir);
  trainer::write_text(dir / name, csv);
  std::cout << csv;
  std::cout << "wrote " << (dir / name).string() << "\n";
}

void require_finite(const trainer::RunReport& r, const std::string& what) {
  if (!r.all_finite()) throw NumericError(what + ": non-finite epoch loss");
}

int cmd_gen_data(const std::string& out, const synthdata::GenerateOptions& g) {
  const auto d = synthdata::generate_dataset(g);
  synthdata::write_dataset(out, d);
  std::printf("wrote %zu identities, %zu images, %zu captions to %s\n", d.identities.size(), d.images.size(),
              d.captions.size(), out.c_str());
  return 0;
}

int cmd_label_patches(const std::string& parse, std::size_t patch, std::size_t classes, const std::string& out) {
  const LabelMap map = synthdata::read_pgm(parse, classes);
  const auto grid = patchlabel::label_patches(map, patch, classes);
  synthdata::write_pgm(out, patchlabel::grid_to_map(grid));
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) std::printf(c ? " %d" : "%d", grid.at(r, c));
    std::printf("\n");
  }
  return 0;
}

int cmd_train(const std::string& config) {
  const auto lc = trainer::load_config(config);
  const auto td = trainer::load_train_data(lc.config);
  trainer::TrainOptions opt;
  opt.log = &std::cout;
  const auto res = trainer::train(lc, td, opt);
  require_finite(res.report, "train");
  print_result("final", res.report.final_result);
  std::printf("wall %.1f s, outputs in %s\n", res.report.wall_seconds, lc.config.output_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& config, std::string checkpoint) {
  const auto lc = trainer::load_config(config);
  const auto td = trainer::load_train_data(lc.config);
  if (checkpoint.empty()) checkpoint = (fs::path(lc.config.output_dir) / "checkpoint.bin").string();
  const auto model = trainer::load_model(lc.config, td, checkpoint);
  const auto r = trainer::evaluate_model(model, td);
  print_result("test", r);
  fs::create_directories(lc.config.output_dir);
  nlohmann::json j = evalmetrics::to_json(r);
  j["checkpoint"] = checkpoint;
  j["config_hash"] = trainer::config_hash(lc.config);
  trainer::write_text(fs::path(lc.config.output_dir) / "eval.json", j.dump(2) + "\n");
  return 0;
}

int cmd_ablate(const std::string& config) {
  const auto lc = trainer::load_config(config);
  const auto td = trainer::load_train_data(lc.config);
  trainer::TrainOptions opt;
  opt.log = &std::cout;
  const auto rows = trainer::run_ablation(lc.config, td, opt);
  for (const auto& r : rows) require_finite(r.report, "ablation " + r.name);
  if (rows.front().report.cme_calls != 0) throw Error("ablation: CME was invoked with MLM and MIM both off");
  write_suite_csv(lc.config.output_dir, "ablation.csv", trainer::ablation_csv(rows));
  return 0;
}

int cmd_mim_compare(const std::string& config) {
  const auto lc = trainer::load_config(config);
  const auto td = trainer::load_train_data(lc.config);
  trainer::TrainOptions opt;
  opt.log = &std::cout;
  const auto rows = trainer::run_mim_comparison(lc.config, td, opt);
  for (const auto& r : rows) require_finite(r.report, "mim " + r.method);
  write_suite_csv(lc.config.output_dir, "mim_comparison.csv", trainer::mim_csv(rows));
  return 0;
}

int cmd_sweep(const std::string& config, const trainer::SweepGrid& grid, bool plot) {
  const auto lc = trainer::load_config(config);
  const auto td = trainer::load_train_data(lc.config);
  trainer::TrainOptions opt;
  opt.log = &std::cout;
  const auto rows = trainer::run_sweep(lc.config, td, grid, opt);
  for (const auto& r : rows) require_finite(r.report, "sweep");
  const std::string csv = trainer::sweep_csv(rows);
  write_suite_csv(lc.config.output_dir, "sweep.csv", csv);
  if (plot) {
    for (const auto& [name, chart] : trainer::charts_for(trainer::parse_csv(csv))) {
      trainer::write_text(fs::path(lc.config.output_dir) / name, trainer::render_svg(chart));
      std::cout << "wrote " << (fs::path(lc.config.output_dir) / name).string() << "\n";
    }
  }
  return 0;
}

int cmd_grad_check(std::size_t instances, const std::string& out) {
  const auto cases = trainer::run_gradient_suite(instances);
  bool ok = true;
  double total = 0;
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cases) {
    const bool pass = c.max_rel_error < trainer::kGradTolerance;
    ok = ok && pass;
    total += c.seconds;
    std::printf("%-22s %s  instances %zu  elements %6zu  max rel %.3e  %.2f s\n", c.name.c_str(),
                pass ? "ok  " : "FAIL", c.instances, c.elements, c.max_rel_error, c.seconds);
    j.push_back({{"name", c.name},
                 {"instances", c.instances},
                 {"elements", c.elements},
                 {"max_rel_error", c.max_rel_error},
                 {"pass", pass}});
  }
  std::printf("total %.2f s\n", total);
  if (!out.empty()) trainer::write_text(out, j.dump(2) + "\n");
  return ok ? 0 : 1;
}

int cmd_plot(const std::string& csv, const std::string& out_dir) {
  const auto table = trainer::parse_csv(synthdata::detail::read_file(csv));
  fs::create_directories(out_dir);
  for (const auto& [name, chart] : trainer::charts_for(table)) {
    const std::string svg = trainer::render_svg(chart);
    if (!trainer::is_well_formed_svg(svg)) throw FormatError("rendered SVG is malformed");
    trainer::write_text(fs::path(out_dir) / name, svg);
    std::cout << "wrote " << (fs::path(out_dir) / name).string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bimatch: text-to-image person retrieval with masked cross-modal pretext tasks"};
  app.require_subcommand(1);
  int rc = 0;

  synthdata::GenerateOptions gen;
  gen.num_identities = 80;
  std::string gen_out = "data", scheme = "basic8";
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic person dataset");
  g->add_option("--out", gen_out, "Output directory")->capture_default_str();
  g->add_option("--identities", gen.num_identities, "Number of identities")->capture_default_str();
  g->add_option("--images-per-identity", gen.images_per_identity)->capture_default_str();
  g->add_option("--captions-per-image", gen.captions_per_image)->capture_default_str();
  g->add_option("--height", gen.image_height)->capture_default_str();
  g->add_option("--width", gen.image_width)->capture_default_str();
  g->add_option("--max-text-len", gen.max_text_len)->capture_default_str();
  g->add_option("--scheme", scheme, "Label scheme")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->callback([&] {
    gen.scheme = synthdata::scheme_from_name(scheme);
    rc = cmd_gen_data(gen_out, gen);
  });

  std::string parse, label_out;
  std::size_t patch = 16, classes = 256;
  auto* lp = app.add_subcommand("label-patches", "Majority-vote patch labels for a parse map");
  lp->add_option("--parse", parse, "Parse map (PGM)")->required();
  lp->add_option("--patch-size", patch)->capture_default_str();
  lp->add_option("--num-classes", classes, "Labels must lie below this")->capture_default_str();
  lp->add_option("--out", label_out, "Output grid (PGM)")->required();
  lp->callback([&] { rc = cmd_label_patches(parse, patch, classes, label_out); });

  std::string config, checkpoint;
  auto* tr = app.add_subcommand("train", "Train one model");
  tr->add_option("--config", config)->required();
  tr->callback([&] { rc = cmd_train(config); });

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  ev->add_option("--config", config)->required();
  ev->add_option("--checkpoint", checkpoint, "Defaults to <output_dir>/checkpoint.bin");
  ev->callback([&] { rc = cmd_eval(config, checkpoint); });

  auto* ab = app.add_subcommand("ablate", "MLM / SemMIM component ablation");
  ab->add_option("--config", config)->required();
  ab->callback([&] { rc = cmd_ablate(config); });

  auto* mc = app.add_subcommand("mim-compare", "Compare MIM target types");
  mc->add_option("--config", config)->required();
  mc->callback([&] { rc = cmd_mim_compare(config); });

  trainer::SweepGrid grid;
  bool sweep_plot = true;
  auto* sw = app.add_subcommand("sweep", "Image mask rate and MIM loss weight sweeps");
  sw->add_option("--config", config)->required();
  sw->add_option("--mask-rates", grid.mask_rates)->delimiter(',')->capture_default_str();
  sw->add_option("--mask-rate-beta", grid.mask_rate_beta)->capture_default_str();
  sw->add_option("--betas", grid.betas)->delimiter(',')->capture_default_str();
  sw->add_option("--beta-mask-rates", grid.beta_mask_rates)->delimiter(',')->capture_default_str();
  sw->add_flag("!--no-plot", sweep_plot, "Skip SVG output");
  sw->callback([&] { rc = cmd_sweep(config, grid, sweep_plot); });

  std::size_t instances = 10;
  std::string grad_out;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  gc->add_option("--instances", instances, "Random instances per case")->capture_default_str();
  gc->add_option("--out", grad_out, "Optional JSON summary");
  gc->callback([&] { rc = cmd_grad_check(instances, grad_out); });

  std::string csv, plot_dir = ".";
  auto* pl = app.add_subcommand("plot", "Render SVG charts from a metrics or sweep CSV");
  pl->add_option("--csv", csv)->required();
  pl->add_option("--out-dir", plot_dir)->capture_default_str();
  pl->callback([&] { rc = cmd_plot(csv, plot_dir); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const bimatch::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return rc;
}
