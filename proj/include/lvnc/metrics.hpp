#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lvnc/mask.hpp"

namespace lvnc::eval {

/// 2|P ∩ G| / (|P| + |G|) for one label; 1 when the label is absent from
/// both masks. Throws DimensionError on a size mismatch.
double dice(const mask::SegMask& pred, const mask::SegMask& gt, mask::Tissue label);

/// |PTA(pred) - PTA(gt)| in percentage points, or nullopt when either PTA is
/// undefined.
std::optional<double> pta_error(const mask::SegMask& pred, const mask::SegMask& gt);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const Confusion&) const = default;
};

struct DiagnosisMetrics {
  Confusion confusion;
  double accuracy = 0.0;
  double matthews = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  bool operator==(const DiagnosisMetrics&) const = default;
};

/// Rates with a zero denominator are reported as 0; Matthews is 0 when any
/// factor of its denominator is 0. Throws ContractError on empty or
/// mismatched input.
DiagnosisMetrics diagnosis_metrics(std::span<const mask::PtaResult> predictions,
                                   std::span<const mask::PtaResult> truths);
DiagnosisMetrics diagnosis_from_confusion(const Confusion& c);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;
  bool operator==(const MeanStd&) const = default;
};

MeanStd mean_std(std::span<const double> values);

struct TimingReport {
  int warmup_runs = 5;
  int timed_runs = 100;
  std::vector<double> durations_ms;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t batch_size = 1;
  double per_slice_mean_ms = 0.0;
  int threads = 1;
  bool operator==(const TimingReport&) const = default;
};

struct MetricsReport {
  MeanStd dice_el;
  MeanStd dice_ic;
  MeanStd dice_t;
  MeanStd pta_error;
  DiagnosisMetrics diagnosis;
  /// Slices with a diagnosis on both sides; equals the confusion total.
  std::size_t slice_count = 0;
  /// Slices left out of PTA error and diagnosis because a PTA was undefined.
  std::size_t excluded_slices = 0;
  std::optional<TimingReport> timing;
  bool operator==(const MetricsReport&) const = default;
};

/// Segmentation and diagnosis metrics over paired predicted / ground-truth
/// masks, in the given order.
MetricsReport build_report(std::span<const mask::SegMask> predictions, std::span<const mask::SegMask> truths);

}  // namespace lvnc::eval
