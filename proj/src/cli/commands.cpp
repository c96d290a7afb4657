#include "lvnc/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include "lvnc/bench.hpp"
#include "lvnc/errors.hpp"
#include "lvnc/image.hpp"
#include "lvnc/report.hpp"

namespace lvnc::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

void Log::add(Severity s, const std::string& msg) {
  const char* tag = "info";
  if (s == Severity::Warning) {
    tag = "warning";
    ++warnings_;
  } else if (s == Severity::Error) {
    tag = "error";
    ++errors_;
  }
  if (echo_) *echo_ << tag << ": " << msg << '\n' << std::flush;
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw FormatError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
  os.close();
  if (!os) throw FormatError("failed writing " + path.string());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = all cores).
// Results must go to per-index slots so the outcome does not depend on
// scheduling. The first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<unet::TrainSample> load_samples(const data::DatasetManifest& m, const std::vector<std::size_t>& idx,
                                            int threads) {
  std::vector<unet::TrainSample> out(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t k) {
    const auto& r = m.records[idx[k]];
    auto s = data::load_slice(m.resolve(r.image_path), m.resolve(r.mask_path));
    if (s.image.width != s.image.height) throw DimensionError("slice " + r.slice_id + " is not square");
    out[k] = unet::TrainSample{data::normalize(s.image), std::move(s.mask)};
  });
  return out;
}

std::size_t common_size(const std::vector<unet::TrainSample>& samples) {
  if (samples.empty()) throw ContractError("no slices to work on");
  const auto s = samples.front().image.width;
  for (const auto& x : samples)
    if (x.image.width != s) throw DimensionError("slices differ in size; resample the dataset first");
  return s;
}

ojson pta_json(const std::optional<mask::PtaResult>& p) {
  if (!p) return nullptr;
  return ojson{{"pta", p->pta}, {"positive", p->positive}};
}

std::optional<mask::PtaResult> try_pta(const mask::SegMask& m) {
  try {
    return mask::pta(mask::region_areas(m));
  } catch (const UndefinedPtaError&) {
    return std::nullopt;
  }
}

}  // namespace

data::DatasetManifest cmd_gen_phantoms(const GenPhantomsOptions& opt, Log& log) {
  ensure_dir(opt.out_dir);
  auto m = data::generate_phantom_dataset(opt.spec, opt.out_dir);
  std::size_t pos = 0;
  std::set<std::string> patients;
  for (const auto& r : m.records) {
    pos += r.lvnc_positive;
    patients.insert(r.patient_id);
  }
  log.info("wrote " + std::to_string(m.records.size()) + " slices from " + std::to_string(patients.size()) +
           " patients (" + std::to_string(pos) + " LVNC-positive) to " + opt.out_dir.string());
  return m;
}

data::DatasetManifest cmd_filter(const FilterOptions& opt, Log& log) {
  const auto in = data::read_manifest(opt.manifest);
  std::set<std::string> excluded;
  if (opt.exclude_list) {
    std::ifstream is(*opt.exclude_list);
    if (!is) throw FormatError("cannot open exclusion list " + opt.exclude_list->string());
    std::string line;
    while (std::getline(is, line)) {
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      const auto b = line.find_first_not_of(" \t\r"), e = line.find_last_not_of(" \t\r");
      if (b != std::string::npos) excluded.insert(line.substr(b, e - b + 1));
    }
    for (const auto& id : excluded) {
      const bool known = std::any_of(in.records.begin(), in.records.end(),
                                     [&](const data::SliceRecord& r) { return r.slice_id == id; });
      if (!known) log.warn("exclusion list names unknown slice '" + id + "'");
    }
  }

  ensure_dir(opt.out_dir);
  const auto out_root = fs::absolute(opt.out_dir);
  const auto rebase = [&](const std::string& rel) {
    return fs::proximate(fs::absolute(in.resolve(rel)), out_root).generic_string();
  };

  data::DatasetManifest out;
  out.pixel_size_mm = in.pixel_size_mm;
  out.provenance = in.provenance;
  out.root = opt.out_dir;
  std::string log_text;
  std::size_t kept = 0, discarded = 0, failed = 0;
  for (const auto& r : in.records) {
    ojson line;
    line["slice_id"] = r.slice_id;
    std::vector<std::string> reasons;
    std::string decision = "keep";
    if (excluded.count(r.slice_id)) {
      decision = "discard";
      reasons.push_back("manual exclusion");
    }
    if (decision == "keep") {
      std::vector<std::string> missing;
      for (const auto* p : {&r.image_path, &r.mask_path})
        if (!fs::exists(in.resolve(*p))) missing.push_back(*p);
      if (r.source_mask_path && !fs::exists(in.resolve(*r.source_mask_path))) missing.push_back(*r.source_mask_path);
      if (!missing.empty()) {
        decision = "error";
        for (const auto& p : missing) reasons.push_back("missing file " + p);
      }
    }
    if (decision == "keep" && r.source_mask_path) {
      try {
        const auto src = data::read_pgm_mask(in.resolve(*r.source_mask_path));
        const auto work = data::read_pgm_mask(in.resolve(r.mask_path));
        if (src.width() != src.height() || work.width() != work.height()) {
          throw DimensionError("masks must be square");
        }
        const auto d = mask::fidelity_filter(src, work);
        line["el_rel_error"] = d.el_rel_error;
        line["t_rel_error"] = d.t_rel_error;
        line["pta_rel_error"] = d.pta_rel_error;
        line["t_components"] = {d.original.t_components, d.resampled.t_components};
        if (!d.keep) {
          decision = "discard";
          reasons = d.reasons;
        }
      } catch (const std::exception& e) {
        decision = "error";
        reasons.push_back(e.what());
      }
    }
    line["decision"] = decision;
    line["reasons"] = reasons;
    log_text += line.dump() + "\n";

    if (decision == "keep") {
      ++kept;
      auto copy = r;
      copy.image_path = rebase(r.image_path);
      copy.mask_path = rebase(r.mask_path);
      if (r.source_mask_path) copy.source_mask_path = rebase(*r.source_mask_path);
      out.records.push_back(std::move(copy));
    } else if (decision == "discard") {
      ++discarded;
    } else {
      ++failed;
      std::string msg = r.slice_id + ":";
      for (const auto& s : reasons) msg += " " + s + ";";
      log.error(msg);
    }
  }
  data::write_manifest(opt.out_dir / "manifest.jsonl", out);
  write_text(opt.out_dir / "filter_log.jsonl", log_text);
  log.info("filter: " + std::to_string(kept) + " kept, " + std::to_string(discarded) + " discarded, " +
           std::to_string(failed) + " with errors");
  return out;
}

TrainOutcome cmd_train(const TrainOptions& opt, Log& log, const unet::EpochCallback& on_epoch) {
  if (opt.fold < 0 || opt.fold >= opt.folds) {
    throw ContractError("fold index " + std::to_string(opt.fold) + " out of range for " +
                        std::to_string(opt.folds) + " folds");
  }
  opt.loss.validate();
  opt.train.validate();
  const auto m = data::read_manifest(opt.manifest);
  const auto folds = data::stratified_kfold(m.records, opt.folds, opt.seed);
  for (const auto& w : folds.warnings) log.warn(w);

  TrainOutcome out;
  std::vector<std::size_t> pool;
  for (int f = 0; f < opt.folds; ++f) {
    const auto& idx = folds.folds[static_cast<std::size_t>(f)];
    auto& dst = f == opt.fold ? out.test : pool;
    dst.insert(dst.end(), idx.begin(), idx.end());
  }
  std::sort(pool.begin(), pool.end());
  const auto split = data::train_validation_split(m.records, pool, opt.train.validation_fraction, opt.seed);
  out.train = split.train;
  out.validation = split.validation;

  const auto train_set = load_samples(m, out.train, opt.threads);
  const auto val_set = load_samples(m, out.validation, opt.threads);
  auto model = opt.model;
  model.input_size = static_cast<int>(common_size(train_set));
  if (common_size(val_set) != static_cast<std::size_t>(model.input_size)) {
    throw DimensionError("validation slices differ in size from training slices");
  }
  model.validate();
  log.info("fold " + std::to_string(opt.fold) + "/" + std::to_string(opt.folds) + ": " +
           std::to_string(out.train.size()) + " train, " + std::to_string(out.validation.size()) +
           " validation, " + std::to_string(out.test.size()) + " held out; " +
           std::to_string(unet::parameter_count(model)) + " parameters");

  auto train = opt.train;
  train.rng_seed = opt.seed * 1000003ULL + static_cast<std::uint64_t>(opt.fold);
  out.fit = unet::fit(model, train, train_set, val_set, unet::default_loss(opt.loss), on_epoch);

  ensure_dir(opt.out_dir);
  ojson meta;
  meta["fold"] = opt.fold;
  meta["folds"] = opt.folds;
  meta["seed"] = opt.seed;
  meta["manifest_provenance"] = m.provenance;
  meta["best_epoch"] = out.fit.best_epoch;
  unet::save_checkpoint(opt.out_dir / "checkpoint.bin", out.fit.params, meta.dump());

  ojson h;
  h["fold"] = opt.fold;
  h["folds"] = opt.folds;
  h["seed"] = opt.seed;
  h["model"] = {{"depth", model.depth}, {"base_channels", model.base_channels}, {"num_labels", model.num_labels},
                {"input_size", model.input_size}, {"parameters", unet::parameter_count(model)}};
  h["train"] = {{"max_epochs", train.max_epochs},       {"patience", train.patience},
                {"batch_size", train.batch_size},       {"validation_fraction", train.validation_fraction},
                {"learning_rate", train.learning_rate}, {"weight_decay", train.weight_decay},
                {"augment", train.augment},             {"rng_seed", train.rng_seed}};
  h["loss"] = {{"lovasz_weight", opt.loss.lovasz_weight},
               {"boundary_weight", opt.loss.boundary_weight},
               {"distance_unit", losses::distance_unit_name(opt.loss.distance_unit)}};
  const auto ids = [&](const std::vector<std::size_t>& v) {
    std::vector<std::string> s;
    for (auto i : v) s.push_back(m.records[i].slice_id);
    return s;
  };
  h["train_slices"] = ids(out.train);
  h["validation_slices"] = ids(out.validation);
  h["test_slices"] = ids(out.test);
  ojson epochs = ojson::array();
  for (const auto& e : out.fit.history) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_dice_el", e.val_dice_el},
                      {"val_dice_ic", e.val_dice_ic},
                      {"val_dice_t", e.val_dice_t},
                      {"improved", e.improved}});
  }
  h["epochs"] = epochs;
  h["best_epoch"] = out.fit.best_epoch;
  h["stopped_early"] = out.fit.stopped_early;
  write_text(opt.out_dir / "history.json", h.dump(2) + "\n");
  return out;
}

EvaluateOutcome cmd_evaluate(const EvaluateOptions& opt, Log& log) {
  const auto m = data::read_manifest(opt.manifest);
  const auto folds = data::stratified_kfold(m.records, opt.folds, opt.seed);
  for (const auto& w : folds.warnings) log.warn(w);
  if (!opt.ground_truth_as_prediction && opt.checkpoints.size() != static_cast<std::size_t>(opt.folds)) {
    throw ContractError("need one checkpoint per fold: got " + std::to_string(opt.checkpoints.size()) + " for " +
                        std::to_string(opt.folds) + " folds");
  }

  const std::size_t n = m.records.size();
  EvaluateOutcome out;
  out.predicted_by.assign(n, -1);
  std::vector<mask::SegMask> preds(n), truths(n);
  std::vector<char> done(n, 0);
  for (int f = 0; f < opt.folds; ++f) {
    const auto& idx = folds.folds[static_cast<std::size_t>(f)];
    const auto samples = load_samples(m, idx, opt.threads);
    if (opt.ground_truth_as_prediction) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        preds[idx[k]] = samples[k].mask;
        truths[idx[k]] = samples[k].mask;
        out.predicted_by[idx[k]] = f;
        done[idx[k]] = 1;
      }
      continue;
    }
    const auto& path = opt.checkpoints[static_cast<std::size_t>(f)];
    unet::Checkpoint ck;
    try {
      ck = unet::load_checkpoint(path);
    } catch (const std::exception& e) {
      log.error("fold " + std::to_string(f) + ": " + e.what());
      continue;
    }
    const auto meta = ojson::parse(ck.metadata_json);
    if (meta.contains("fold") && (meta["fold"] != f || meta.value("folds", opt.folds) != opt.folds ||
                                  meta.value("seed", opt.seed) != opt.seed)) {
      log.error("checkpoint " + path.string() + " was trained for fold " + meta["fold"].dump() + " of " +
                meta.value("folds", ojson(nullptr)).dump() + " (seed " + meta.value("seed", ojson(nullptr)).dump() +
                "), not fold " + std::to_string(f) + " of " + std::to_string(opt.folds));
      continue;
    }
    if (!samples.empty() && common_size(samples) != static_cast<std::size_t>(ck.params.config.input_size)) {
      log.error("fold " + std::to_string(f) + ": slices do not match the checkpoint's input size");
      continue;
    }
    const auto bs = static_cast<std::size_t>(std::max(1, opt.batch_size));
    for (std::size_t start = 0; start < samples.size(); start += bs) {
      const auto end = std::min(samples.size(), start + bs);
      std::vector<data::Image> imgs;
      for (auto k = start; k < end; ++k) imgs.push_back(samples[k].image);
      auto p = unet::predict(ck.params, unet::make_batch(imgs));
      for (auto k = start; k < end; ++k) {
        preds[idx[k]] = std::move(p[k - start]);
        truths[idx[k]] = samples[k].mask;
        out.predicted_by[idx[k]] = f;
        done[idx[k]] = 1;
      }
    }
  }

  std::vector<mask::SegMask> p2, t2;
  std::string lines;
  for (std::size_t i = 0; i < n; ++i) {
    if (!done[i]) continue;
    p2.push_back(preds[i]);
    t2.push_back(truths[i]);
    const auto pp = try_pta(preds[i]), tp = try_pta(truths[i]);
    ojson line;
    line["slice_id"] = m.records[i].slice_id;
    line["fold"] = out.predicted_by[i];
    line["dice"] = {{"EL", eval::dice(preds[i], truths[i], mask::Tissue::ExternalLayer)},
                    {"IC", eval::dice(preds[i], truths[i], mask::Tissue::InternalCavity)},
                    {"T", eval::dice(preds[i], truths[i], mask::Tissue::Trabeculae)}};
    line["predicted"] = pta_json(pp);
    line["truth"] = pta_json(tp);
    lines += line.dump() + "\n";
  }
  if (p2.size() < n) log.error(std::to_string(n - p2.size()) + " of " + std::to_string(n) + " slices were not evaluated");
  out.report = eval::build_report(p2, t2);
  if (out.report.excluded_slices) {
    log.warn(std::to_string(out.report.excluded_slices) + " slices have undefined PTA and are left out of diagnosis");
  }
  ensure_dir(opt.out_dir);
  write_text(opt.out_dir / "metrics.json", eval::render_json(out.report) + "\n");
  write_text(opt.out_dir / "predictions.jsonl", lines);
  return out;
}

std::vector<InferResult> cmd_infer(const InferOptions& opt, Log& log) {
  const auto ck = unet::load_checkpoint(opt.checkpoint);
  const auto size = static_cast<std::size_t>(ck.params.config.input_size);
  ensure_dir(opt.out_dir);
  std::vector<InferResult> results;
  for (const auto& path : opt.images) {
    try {
      const auto img = data::read_pgm_image(path);
      if (img.width != size || img.height != size) {
        throw DimensionError(path.string() + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                             ", the model expects " + std::to_string(size) + "x" + std::to_string(size));
      }
      const auto batch = unet::make_batch(std::vector<data::Image>{data::normalize(img)});
      const auto pred = unet::predict(ck.params, batch).front();
      InferResult r;
      r.image = path;
      const auto stem = path.stem().string();
      r.mask_path = opt.out_dir / (stem + "_mask.pgm");
      data::write_pgm_mask(r.mask_path, pred);
      if (opt.overlay) {
        r.overlay_path = opt.out_dir / (stem + "_overlay.ppm");
        data::write_ppm(*r.overlay_path, data::make_overlay(img, pred));
      }
      const auto areas = mask::region_areas(pred);
      r.pta = try_pta(pred);
      ojson doc;
      doc["image"] = path.generic_string();
      doc["mask"] = r.mask_path.filename().generic_string();
      doc["areas_px"] = {{"T", areas.trabeculae}, {"EL", areas.external_layer}, {"IC", areas.internal_cavity}};
      doc["pta"] = r.pta ? ojson(r.pta->pta) : ojson(nullptr);
      doc["lvnc_positive"] = r.pta ? ojson(r.pta->positive) : ojson(nullptr);
      doc["threshold_pct"] = mask::kLvncThresholdPct;
      r.pta_path = opt.out_dir / (stem + "_pta.json");
      write_text(r.pta_path, doc.dump(2) + "\n");
      if (r.pta) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "PTA %.2f%% -> %s", r.pta->pta, r.pta->positive ? "LVNC" : "no LVNC");
        log.info(stem + ": " + buf);
      } else {
        log.warn(stem + ": no myocardium predicted, PTA undefined");
      }
      results.push_back(std::move(r));
    } catch (const std::exception& e) {
      log.error(path.string() + ": " + e.what());
    }
  }
  return results;
}

eval::TimingReport cmd_bench(const BenchOptions& opt, Log& log) {
  if (opt.batch_size < 1) throw ContractError("batch size must be positive");
  const auto ck = unet::load_checkpoint(opt.checkpoint);
  const auto size = static_cast<std::size_t>(ck.params.config.input_size);
  std::vector<data::Image> imgs;
  if (opt.manifest) {
    const auto m = data::read_manifest(*opt.manifest);
    if (m.records.empty()) throw ContractError("bench manifest has no slices");
    for (int i = 0; i < opt.batch_size; ++i) {
      const auto& r = m.records[static_cast<std::size_t>(i) % m.records.size()];
      auto img = data::normalize(data::read_pgm_image(m.resolve(r.image_path)));
      if (img.width != size || img.height != size) throw DimensionError("slice " + r.slice_id + " has the wrong size");
      imgs.push_back(std::move(img));
    }
  } else {
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    for (int i = 0; i < opt.batch_size; ++i) {
      data::Image img{size, size, std::vector<double>(size * size)};
      for (auto& v : img.pixels) v = nd(rng);
      imgs.push_back(std::move(img));
    }
  }
  if (opt.threads != 1) log.warn("inference runs on one thread; --threads " + std::to_string(opt.threads) + " ignored");
  auto t = eval::benchmark_inference(ck.params, unet::make_batch(imgs), opt.runs, opt.warmup);
  ensure_dir(opt.out_dir);
  write_text(opt.out_dir / "timing.json", eval::timing_to_json(t) + "\n");
  return t;
}

std::string timing_row(const eval::TimingReport& t) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-8s%-6s%10.3f ± %-10.3f%12.3f%10zu%9d%7d+%d", "U-Net", "CPU", t.mean_ms, t.std_ms,
                t.per_slice_mean_ms, t.batch_size, t.threads, t.warmup_runs, t.timed_runs);
  return std::string("Model   Dev   batch ms (mean ± std)   slice ms     batch  threads  runs\n") + buf;
}

}  // namespace lvnc::cli
