#include "lvnc/report.hpp"

#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "lvnc/errors.hpp"

namespace lvnc::eval {

using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kSchema = "lvnc-metrics/1";

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string cell(const MeanStd& s) {
  if (s.n == 0) return "n=0";
  return fmt3(s.mean) + " (" + fmt3(s.std) + ")";
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

ojson stat_json(const MeanStd& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

MeanStd stat_from(const ojson& j) {
  return MeanStd{j.at("mean").get<double>(), j.at("std").get<double>(), j.at("n").get<std::size_t>()};
}

ojson timing_json(const TimingReport& t) {
  ojson j;
  j["warmup_runs"] = t.warmup_runs;
  j["timed_runs"] = t.timed_runs;
  j["batch_size"] = t.batch_size;
  j["threads"] = t.threads;
  j["mean_ms"] = t.mean_ms;
  j["std_ms"] = t.std_ms;
  j["per_slice_mean_ms"] = t.per_slice_mean_ms;
  j["durations_ms"] = t.durations_ms;
  return j;
}

TimingReport timing_from(const ojson& j) {
  TimingReport t;
  t.warmup_runs = j.at("warmup_runs").get<int>();
  t.timed_runs = j.at("timed_runs").get<int>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.threads = j.at("threads").get<int>();
  t.mean_ms = j.at("mean_ms").get<double>();
  t.std_ms = j.at("std_ms").get<double>();
  t.per_slice_mean_ms = j.at("per_slice_mean_ms").get<double>();
  t.durations_ms = j.at("durations_ms").get<std::vector<double>>();
  if (t.durations_ms.size() != static_cast<std::size_t>(t.timed_runs)) {
    throw FormatError("timing report: durations_ms length differs from timed_runs");
  }
  return t;
}

}  // namespace

std::string render_text(const MetricsReport& r) {
  std::ostringstream os;
  os << "Segmentation (mean (std), n=" << r.dice_el.n << " slices)\n";
  os << pad("", 12) << pad("Dice EL", 18) << pad("Dice IC", 18) << pad("Dice T", 18) << "PTA error (pp)\n";
  os << pad("U-Net", 12) << pad(cell(r.dice_el), 18) << pad(cell(r.dice_ic), 18) << pad(cell(r.dice_t), 18)
     << cell(r.pta_error) << "\n\n";
  os << "Diagnosis (PTA >= 27.4%, n=" << r.slice_count << " slices";
  if (r.excluded_slices) os << ", " << r.excluded_slices << " excluded: undefined PTA";
  os << ")\n";
  os << pad("", 12) << pad("Accuracy", 12) << pad("Matthews", 12) << pad("Recall", 12) << "Specificity\n";
  if (r.slice_count == 0) {
    os << pad("U-Net", 12) << pad("n=0", 12) << pad("n=0", 12) << pad("n=0", 12) << "n=0\n";
  } else {
    const auto& d = r.diagnosis;
    os << pad("U-Net", 12) << pad(fmt3(d.accuracy), 12) << pad(fmt3(d.matthews), 12) << pad(fmt3(d.recall), 12)
       << fmt3(d.specificity) << "\n";
    os << "Confusion: TP=" << d.confusion.tp << " FP=" << d.confusion.fp << " TN=" << d.confusion.tn
       << " FN=" << d.confusion.fn << "\n";
  }
  if (r.timing) os << '\n' << render_timing_text(*r.timing);
  return os.str();
}

std::string render_timing_text(const TimingReport& t) {
  std::ostringstream os;
  os << "Inference time (" << t.warmup_runs << " warm-up + " << t.timed_runs << " timed runs, batch "
     << t.batch_size << ", " << t.threads << " thread" << (t.threads == 1 ? "" : "s") << ")\n";
  os << pad("", 12) << pad("CPU batch (ms)", 24) << "CPU per slice (ms)\n";
  if (t.durations_ms.empty()) {
    os << pad("U-Net", 12) << pad("n=0", 24) << "n=0\n";
  } else {
    os << pad("U-Net", 12) << pad(fmt3(t.mean_ms) + " ± " + fmt3(t.std_ms), 24) << fmt3(t.per_slice_mean_ms)
       << "\n";
  }
  return os.str();
}

std::string render_json(const MetricsReport& r) {
  ojson j;
  j["schema"] = kSchema;
  j["slice_count"] = r.slice_count;
  j["excluded_slices"] = r.excluded_slices;
  j["dice"] = {{"EL", stat_json(r.dice_el)}, {"IC", stat_json(r.dice_ic)}, {"T", stat_json(r.dice_t)}};
  j["pta_error"] = stat_json(r.pta_error);
  const auto& d = r.diagnosis;
  j["diagnosis"] = {{"tp", d.confusion.tp},   {"fp", d.confusion.fp},     {"tn", d.confusion.tn},
                    {"fn", d.confusion.fn},   {"accuracy", d.accuracy},   {"matthews", d.matthews},
                    {"recall", d.recall},     {"specificity", d.specificity}};
  if (r.timing) j["timing"] = timing_json(*r.timing);
  return j.dump(2) + "\n";
}

MetricsReport parse_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = ojson::parse(text);
    if (j.at("schema").get<std::string>() != kSchema) throw FormatError("unknown metrics schema");
    r.slice_count = j.at("slice_count").get<std::size_t>();
    r.excluded_slices = j.at("excluded_slices").get<std::size_t>();
    r.dice_el = stat_from(j.at("dice").at("EL"));
    r.dice_ic = stat_from(j.at("dice").at("IC"));
    r.dice_t = stat_from(j.at("dice").at("T"));
    r.pta_error = stat_from(j.at("pta_error"));
    const auto& d = j.at("diagnosis");
    r.diagnosis.confusion = {d.at("tp").get<std::size_t>(), d.at("fp").get<std::size_t>(),
                             d.at("tn").get<std::size_t>(), d.at("fn").get<std::size_t>()};
    r.diagnosis.accuracy = d.at("accuracy").get<double>();
    r.diagnosis.matthews = d.at("matthews").get<double>();
    r.diagnosis.recall = d.at("recall").get<double>();
    r.diagnosis.specificity = d.at("specificity").get<double>();
    if (j.contains("timing")) r.timing = timing_from(j.at("timing"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad metrics report: ") + e.what());
  }
  if (r.diagnosis.confusion.total() != r.slice_count) {
    throw FormatError("metrics report: confusion counts do not sum to slice_count");
  }
  return r;
}

std::string timing_to_json(const TimingReport& timing) { return timing_json(timing).dump(2) + "\n"; }

TimingReport timing_from_json(const std::string& text) {
  try {
    return timing_from(ojson::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad timing report: ") + e.what());
  }
}

}  // namespace lvnc::eval
