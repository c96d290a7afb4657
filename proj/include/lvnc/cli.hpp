#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lvnc/dataset.hpp"
#include "lvnc/losses.hpp"
#include "lvnc/metrics.hpp"
#include "lvnc/train.hpp"
#include "lvnc/unet.hpp"

namespace lvnc::cli {

enum class Severity { Info, Warning, Error };

/// Collects what a command has to say. A command failed iff it logged an
/// error; commands keep going past per-slice problems where they can.
class Log {
 public:
  explicit Log(std::ostream* echo = nullptr) : echo_(echo) {}

  void info(const std::string& msg) { add(Severity::Info, msg); }
  void warn(const std::string& msg) { add(Severity::Warning, msg); }
  void error(const std::string& msg) { add(Severity::Error, msg); }

  bool has_errors() const { return errors_ > 0; }
  std::size_t error_count() const { return errors_; }
  std::size_t warning_count() const { return warnings_; }

 private:
  void add(Severity s, const std::string& msg);

  std::ostream* echo_;
  std::size_t errors_ = 0;
  std::size_t warnings_ = 0;
};

struct GenPhantomsOptions {
  data::PhantomDatasetSpec spec;
  std::filesystem::path out_dir;
};

data::DatasetManifest cmd_gen_phantoms(const GenPhantomsOptions& opt, Log& log);

struct FilterOptions {
  std::filesystem::path manifest;
  /// Text file with one slice_id per line ('#' starts a comment).
  std::optional<std::filesystem::path> exclude_list;
  std::filesystem::path out_dir;
};

/// Writes out_dir/manifest.jsonl (kept records, paths re-based onto
/// out_dir) and out_dir/filter_log.jsonl with one line per input record.
data::DatasetManifest cmd_filter(const FilterOptions& opt, Log& log);

struct TrainOptions {
  std::filesystem::path manifest;
  int fold = 0;
  int folds = 5;
  std::uint64_t seed = 1;
  unet::UNetConfig model;  // input_size is taken from the data
  unet::TrainConfig train;
  losses::LossConfig loss{2.0, 1.0, mask::Tissue::Trabeculae, losses::DistanceUnit::Diagonal};
  int threads = 0;  // slice loading; 0 means all cores
  std::filesystem::path out_dir;
};

struct TrainOutcome {
  unet::FitResult fit;
  std::vector<std::size_t> train, validation, test;  // record indices
};

/// Trains on every fold but opts.fold and writes out_dir/checkpoint.bin and
/// out_dir/history.json. Both are pure functions of the inputs.
TrainOutcome cmd_train(const TrainOptions& opt, Log& log, const unet::EpochCallback& on_epoch = {});

struct EvaluateOptions {
  std::filesystem::path manifest;
  /// One checkpoint per fold, in fold order.
  std::vector<std::filesystem::path> checkpoints;
  int folds = 5;
  std::uint64_t seed = 1;
  /// Score the ground truth against itself instead of running models.
  bool ground_truth_as_prediction = false;
  int batch_size = 8;
  int threads = 0;
  std::filesystem::path out_dir;
};

struct EvaluateOutcome {
  eval::MetricsReport report;
  /// Fold that predicted each record, by record index.
  std::vector<int> predicted_by;
};

/// Writes out_dir/metrics.json and out_dir/predictions.jsonl.
EvaluateOutcome cmd_evaluate(const EvaluateOptions& opt, Log& log);

struct InferOptions {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> images;
  bool overlay = true;
  std::filesystem::path out_dir;
};

struct InferResult {
  std::filesystem::path image;
  std::filesystem::path mask_path;
  std::optional<std::filesystem::path> overlay_path;
  std::filesystem::path pta_path;
  std::optional<mask::PtaResult> pta;  // empty when undefined
};

/// Per image: <stem>_mask.pgm, <stem>_overlay.ppm and <stem>_pta.json.
std::vector<InferResult> cmd_infer(const InferOptions& opt, Log& log);

struct BenchOptions {
  std::filesystem::path checkpoint;
  int batch_size = 1;
  int runs = 100;
  int warmup = 5;
  /// Batch images come from this manifest when set, else from seeded noise.
  std::optional<std::filesystem::path> manifest;
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path out_dir;
};

/// Writes out_dir/timing.json.
eval::TimingReport cmd_bench(const BenchOptions& opt, Log& log);

/// One row of the timing table, e.g. for printing after cmd_bench.
std::string timing_row(const eval::TimingReport& t);

}  // namespace lvnc::cli
