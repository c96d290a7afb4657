#include "lvnc/metrics.hpp"

#include <cmath>

#include "lvnc/errors.hpp"

namespace lvnc::eval {

double dice(const mask::SegMask& pred, const mask::SegMask& gt, mask::Tissue label) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw DimensionError("dice: prediction and ground truth differ in size");
  }
  const auto t = static_cast<std::uint8_t>(label);
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool in_p = pred.labels()[i] == t, in_g = gt.labels()[i] == t;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::optional<double> pta_error(const mask::SegMask& pred, const mask::SegMask& gt) {
  try {
    const auto a = mask::pta(mask::region_areas(pred));
    const auto b = mask::pta(mask::region_areas(gt));
    return std::abs(a.pta - b.pta);
  } catch (const UndefinedPtaError&) {
    return std::nullopt;
  }
}

DiagnosisMetrics diagnosis_from_confusion(const Confusion& c) {
  DiagnosisMetrics m;
  m.confusion = c;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  const double n = d(c.total());
  m.accuracy = n > 0 ? (d(c.tp) + d(c.tn)) / n : 0.0;
  m.recall = c.tp + c.fn > 0 ? d(c.tp) / d(c.tp + c.fn) : 0.0;
  m.specificity = c.tn + c.fp > 0 ? d(c.tn) / d(c.tn + c.fp) : 0.0;
  const double f1 = d(c.tp + c.fp), f2 = d(c.tp + c.fn), f3 = d(c.tn + c.fp), f4 = d(c.tn + c.fn);
  if (f1 == 0 || f2 == 0 || f3 == 0 || f4 == 0) {
    m.matthews = 0.0;
  } else {
    m.matthews = (d(c.tp) * d(c.tn) - d(c.fp) * d(c.fn)) / std::sqrt(f1 * f2 * f3 * f4);
  }
  return m;
}

DiagnosisMetrics diagnosis_metrics(std::span<const mask::PtaResult> predictions,
                                   std::span<const mask::PtaResult> truths) {
  if (predictions.size() != truths.size()) throw ContractError("diagnosis_metrics: length mismatch");
  if (predictions.empty()) throw ContractError("diagnosis_metrics: no slices");
  Confusion c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i].positive, t = truths[i].positive;
    if (p && t) ++c.tp;
    else if (p && !t) ++c.fp;
    else if (!p && !t) ++c.tn;
    else ++c.fn;
  }
  return diagnosis_from_confusion(c);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  r.n = values.size();
  if (values.empty()) return r;
  double s = 0.0;
  for (double v : values) s += v;
  r.mean = s / static_cast<double>(r.n);
  double q = 0.0;
  for (double v : values) q += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(q / static_cast<double>(r.n));
  return r;
}

MetricsReport build_report(std::span<const mask::SegMask> predictions, std::span<const mask::SegMask> truths) {
  if (predictions.size() != truths.size()) throw ContractError("build_report: length mismatch");
  std::vector<double> el, ic, t, err;
  std::vector<mask::PtaResult> pred_dx, true_dx;
  MetricsReport r;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    el.push_back(dice(predictions[i], truths[i], mask::Tissue::ExternalLayer));
    ic.push_back(dice(predictions[i], truths[i], mask::Tissue::InternalCavity));
    t.push_back(dice(predictions[i], truths[i], mask::Tissue::Trabeculae));
    try {
      const auto p = mask::pta(mask::region_areas(predictions[i]));
      const auto g = mask::pta(mask::region_areas(truths[i]));
      err.push_back(std::abs(p.pta - g.pta));
      pred_dx.push_back(p);
      true_dx.push_back(g);
    } catch (const UndefinedPtaError&) {
      ++r.excluded_slices;
    }
  }
  r.dice_el = mean_std(el);
  r.dice_ic = mean_std(ic);
  r.dice_t = mean_std(t);
  r.pta_error = mean_std(err);
  r.slice_count = pred_dx.size();
  if (!pred_dx.empty()) r.diagnosis = diagnosis_metrics(pred_dx, true_dx);
  return r;
}

}  // namespace lvnc::eval
