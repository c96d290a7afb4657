// lvnc: phantom generation, filtering, cross-validated training, evaluation,
// inference and timing from one binary. Options can also come from a
// TOML/INI file given with --config (one [section] per subcommand); flags
// given on the command line win. Each run writes the effective settings to
// <out>/<subcommand>.config.toml.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lvnc/cli.hpp"
#include "lvnc/errors.hpp"
#include "lvnc/report.hpp"

namespace fs = std::filesystem;
using namespace lvnc;

namespace {

void echo_config(const CLI::App& sub, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const auto path = out_dir / (sub.get_name() + ".config.toml");
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write config echo " + path.string());
  os << "[" << sub.get_name() << "]\n" << sub.config_to_str(true, false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LV trabeculation segmentation and PTA-based LVNC diagnosis"};
  app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags take precedence");
  app.require_subcommand(1);

  // gen-phantoms
  cli::GenPhantomsOptions gen;
  std::string gen_out;
  auto* g = app.add_subcommand("gen-phantoms", "Write a synthetic phantom dataset and its manifest");
  g->add_option("--count", gen.spec.count, "Number of slices")->capture_default_str();
  g->add_option("--patients", gen.spec.patients, "Patients to spread slices over (0: count / slices-per-patient)")
      ->capture_default_str();
  g->add_option("--slices-per-patient", gen.spec.slices_per_patient)->capture_default_str();
  g->add_option("--theta-min", gen.spec.theta_min)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  g->add_option("--theta-max", gen.spec.theta_max)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  g->add_option("--size", gen.spec.size, "Working image size")->capture_default_str();
  g->add_option("--source-size", gen.spec.source_size, "Also store masks rasterised at this size (0: off)")
      ->capture_default_str();
  g->add_option("--seed", gen.spec.seed)->capture_default_str();
  g->add_option("--out", gen_out, "Output directory")->required();

  // filter
  cli::FilterOptions filt;
  std::string filt_manifest, filt_exclude, filt_out;
  auto* f = app.add_subcommand("filter", "Drop slices that fail resampling fidelity checks or are listed for exclusion");
  f->add_option("--manifest", filt_manifest)->required();
  f->add_option("--exclude", filt_exclude, "File with one slice_id per line");
  f->add_option("--out", filt_out, "Output directory for the filtered manifest and decision log")->required();

  // train
  cli::TrainOptions tr;
  std::string tr_manifest, tr_out, tr_unit = "diagonal";
  auto* t = app.add_subcommand("train", "Train one cross-validation fold");
  t->add_option("--manifest", tr_manifest)->required();
  t->add_option("--fold", tr.fold, "Held-out fold index")->capture_default_str();
  t->add_option("--folds", tr.folds)->capture_default_str();
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--depth", tr.model.depth)->capture_default_str();
  t->add_option("--base-channels", tr.model.base_channels)->capture_default_str();
  t->add_option("--epochs", tr.train.max_epochs)->capture_default_str();
  t->add_option("--patience", tr.train.patience)->capture_default_str();
  t->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
  t->add_option("--validation-fraction", tr.train.validation_fraction)->capture_default_str();
  t->add_option("--lr", tr.train.learning_rate)->capture_default_str();
  t->add_option("--weight-decay", tr.train.weight_decay)->capture_default_str();
  t->add_option("--augment", tr.train.augment)->capture_default_str();
  t->add_option("--lovasz-weight", tr.loss.lovasz_weight)->capture_default_str();
  t->add_option("--boundary-weight", tr.loss.boundary_weight)->capture_default_str();
  t->add_option("--distance-unit", tr_unit, "Boundary-loss distances in 'pixel' or 'diagonal' units")
      ->capture_default_str()
      ->check(CLI::IsMember({"pixel", "diagonal"}));
  t->add_option("--threads", tr.threads, "Slice-loading threads (0: all cores)")->capture_default_str();
  t->add_option("--out", tr_out, "Directory for checkpoint.bin and history.json")->required();

  // evaluate
  cli::EvaluateOptions ev;
  std::string ev_manifest, ev_out;
  std::vector<std::string> ev_ckpts;
  auto* e = app.add_subcommand("evaluate", "Score every slice with the model of the fold that held it out");
  e->add_option("--manifest", ev_manifest)->required();
  e->add_option("--checkpoint", ev_ckpts, "One per fold, in fold order");
  e->add_option("--folds", ev.folds)->capture_default_str();
  e->add_option("--seed", ev.seed, "Fold seed used for training")->capture_default_str();
  e->add_flag("--ground-truth-as-prediction", ev.ground_truth_as_prediction, "Score ground truth against itself");
  e->add_option("--batch-size", ev.batch_size)->capture_default_str();
  e->add_option("--threads", ev.threads, "Slice-loading threads (0: all cores)")->capture_default_str();
  e->add_option("--out", ev_out)->required();

  // infer
  cli::InferOptions inf;
  std::string inf_ckpt, inf_out;
  std::vector<std::string> inf_images;
  auto* i = app.add_subcommand("infer", "Segment images and report PTA and diagnosis");
  i->add_option("--checkpoint", inf_ckpt)->required();
  i->add_option("images", inf_images, "16-bit PGM images")->required();
  i->add_option("--overlay", inf.overlay, "Write a colour overlay")->capture_default_str();
  i->add_option("--out", inf_out)->required();

  // bench
  cli::BenchOptions be;
  std::string be_ckpt, be_manifest, be_out;
  auto* b = app.add_subcommand("bench", "Time inference: warm-up runs, then timed runs");
  b->add_option("--checkpoint", be_ckpt)->required();
  b->add_option("--batch-size", be.batch_size)->capture_default_str();
  b->add_option("--runs", be.runs)->capture_default_str();
  b->add_option("--warmup", be.warmup)->capture_default_str();
  b->add_option("--manifest", be_manifest, "Take batch images from this dataset instead of noise");
  b->add_option("--seed", be.seed)->capture_default_str();
  b->add_option("--threads", be.threads)->capture_default_str();
  b->add_option("--out", be_out)->required();

  CLI11_PARSE(app, argc, argv);

  cli::Log log(&std::cerr);
  try {
    if (g->parsed()) {
      gen.out_dir = gen_out;
      echo_config(*g, gen.out_dir);
      cli::cmd_gen_phantoms(gen, log);
    } else if (f->parsed()) {
      filt.manifest = filt_manifest;
      if (!filt_exclude.empty()) filt.exclude_list = fs::path(filt_exclude);
      filt.out_dir = filt_out;
      echo_config(*f, filt.out_dir);
      cli::cmd_filter(filt, log);
    } else if (t->parsed()) {
      tr.manifest = tr_manifest;
      tr.out_dir = tr_out;
      tr.loss.distance_unit = losses::parse_distance_unit(tr_unit);
      echo_config(*t, tr.out_dir);
      const auto res = cli::cmd_train(tr, log, [](const unet::EpochRecord& r) {
        std::printf("epoch %2d  train %.4f  val %.4f  dice EL %.3f IC %.3f T %.3f%s\n", r.epoch, r.train_loss,
                    r.val_loss, r.val_dice_el, r.val_dice_ic, r.val_dice_t, r.improved ? "  *" : "");
        std::fflush(stdout);
      });
      std::printf("best epoch %d of %zu%s\n", res.fit.best_epoch, res.fit.history.size(),
                  res.fit.stopped_early ? " (early stop)" : "");
    } else if (e->parsed()) {
      ev.manifest = ev_manifest;
      for (const auto& c : ev_ckpts) ev.checkpoints.emplace_back(c);
      ev.out_dir = ev_out;
      echo_config(*e, ev.out_dir);
      const auto res = cli::cmd_evaluate(ev, log);
      std::cout << eval::render_text(res.report);
    } else if (i->parsed()) {
      inf.checkpoint = inf_ckpt;
      for (const auto& p : inf_images) inf.images.emplace_back(p);
      inf.out_dir = inf_out;
      echo_config(*i, inf.out_dir);
      cli::cmd_infer(inf, log);
    } else if (b->parsed()) {
      be.checkpoint = be_ckpt;
      if (!be_manifest.empty()) be.manifest = fs::path(be_manifest);
      be.out_dir = be_out;
      echo_config(*b, be.out_dir);
      const auto rep = cli::cmd_bench(be, log);
      std::cout << cli::timing_row(rep) << '\n' << eval::render_timing_text(rep);
      std::cout << "threads: " << rep.threads << '\n';
    }
  } catch (const std::exception& ex) {
    log.error(ex.what());
  }
  return log.has_errors() ? 1 : 0;
}
