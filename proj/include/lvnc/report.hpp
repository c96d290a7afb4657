#pragma once

#include <string>

#include "lvnc/metrics.hpp"

namespace lvnc::eval {

/// Text tables shaped like the usual segmentation / diagnosis / timing
/// tables: Dice and PTA error as "mean (std)", diagnosis rates, and timing
/// as mean ± std. Empty statistics print "n=0".
std::string render_text(const MetricsReport& report);
std::string render_timing_text(const TimingReport& timing);

// Structured report (JSON). Top-level keys in order: "schema" ("lvnc-metrics/1"),
// "slice_count", "excluded_slices", "dice" {EL, IC, T}, "pta_error",
// "diagnosis" {tp, fp, tn, fn, accuracy, matthews, recall, specificity},
// and optionally "timing". Each statistic is {"mean", "std", "n"}.

std::string render_json(const MetricsReport& report);
/// Throws FormatError on schema violations.
MetricsReport parse_json(const std::string& text);

std::string timing_to_json(const TimingReport& timing);
TimingReport timing_from_json(const std::string& text);

}  // namespace lvnc::eval
