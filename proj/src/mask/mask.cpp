#include "lvnc/mask.hpp"

#include <cmath>
#include <limits>

#include "lvnc/errors.hpp"

namespace lvnc::mask {

const char* tissue_name(Tissue t) {
  switch (t) {
    case Tissue::Background: return "background";
    case Tissue::ExternalLayer: return "EL";
    case Tissue::InternalCavity: return "IC";
    case Tissue::Trabeculae: return "T";
  }
  return "?";
}

SegMask::SegMask(std::size_t width, std::size_t height, Tissue fill)
    : width_(width), height_(height), labels_(width * height, static_cast<std::uint8_t>(fill)) {}

SegMask::SegMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  if (labels_.size() != width_ * height_) throw DimensionError("mask label count does not match size");
  for (auto v : labels_) {
    if (v >= kNumLabels) throw ContractError("mask label " + std::to_string(v) + " is not a tissue label");
  }
}

SegMask rotate90(const SegMask& m, int quarter_turns) {
  int q = ((quarter_turns % 4) + 4) % 4;
  SegMask cur = m;
  for (int i = 0; i < q; ++i) {
    const std::size_t w = cur.width(), h = cur.height();
    SegMask next(h, w);
    // Counter-clockwise: (r, c) -> (w - 1 - c, r).
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) next.set(w - 1 - c, r, cur.at(r, c));
    }
    cur = std::move(next);
  }
  return cur;
}

SegMask flip_horizontal(const SegMask& m) {
  SegMask out(m.width(), m.height());
  for (std::size_t r = 0; r < m.height(); ++r) {
    for (std::size_t c = 0; c < m.width(); ++c) out.set(r, m.width() - 1 - c, m.at(r, c));
  }
  return out;
}

RegionAreas region_areas(const SegMask& m) {
  RegionAreas a;
  for (auto v : m.labels()) {
    switch (static_cast<Tissue>(v)) {
      case Tissue::Trabeculae: ++a.trabeculae; break;
      case Tissue::ExternalLayer: ++a.external_layer; break;
      case Tissue::InternalCavity: ++a.internal_cavity; break;
      case Tissue::Background: break;
    }
  }
  return a;
}

PtaResult pta(const RegionAreas& areas) {
  const std::size_t denom = areas.trabeculae + areas.external_layer;
  if (denom == 0) throw UndefinedPtaError("PTA undefined: slice has no myocardium (TA + ELA = 0)");
  PtaResult r;
  r.pta = 100.0 * static_cast<double>(areas.trabeculae) / static_cast<double>(denom);
  r.positive = r.pta >= kLvncThresholdPct;
  return r;
}

Components connected_components(const SegMask& m, Tissue label) {
  const std::size_t w = m.width(), h = m.height();
  Components out;
  out.ids.assign(w * h, 0);
  const auto target = static_cast<std::uint8_t>(label);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < w * h; ++start) {
    if (m.labels()[start] != target || out.ids[start] != 0) continue;
    const std::size_t id = ++out.count;
    out.ids[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const long r = static_cast<long>(p / w), c = static_cast<long>(p % w);
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          const long rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          const std::size_t q = static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc);
          if (m.labels()[q] == target && out.ids[q] == 0) {
            out.ids[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
  }
  return out;
}

SegMask resample_mask(const SegMask& m, std::size_t new_size) {
  if (new_size < 1) throw ContractError("resample_mask target size must be at least 1");
  SegMask out(new_size, new_size);
  for (std::size_t r = 0; r < new_size; ++r) {
    const std::size_t sr = ((2 * r + 1) * m.height()) / (2 * new_size);
    for (std::size_t c = 0; c < new_size; ++c) {
      const std::size_t sc = ((2 * c + 1) * m.width()) / (2 * new_size);
      out.set(r, c, m.at(sr, sc));
    }
  }
  return out;
}

double relative_error(double original, double resampled) {
  const double diff = std::abs(resampled - original);
  if (original == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / std::abs(original);
}

namespace {

// Returns false if PTA is undefined for this mask.
bool measure(const SegMask& m, FidelityMeasures& out) {
  const auto a = region_areas(m);
  const double lv = static_cast<double>(a.trabeculae + a.external_layer + a.internal_cavity);
  out.t_components = connected_components(m, Tissue::Trabeculae).count;
  if (a.trabeculae + a.external_layer == 0) return false;
  out.el_pct = 100.0 * static_cast<double>(a.external_layer) / lv;
  out.t_pct = 100.0 * static_cast<double>(a.trabeculae) / lv;
  out.pta = pta(a).pta;
  return true;
}

}  // namespace

FidelityDecision fidelity_filter(const SegMask& original, const SegMask& resampled) {
  FidelityDecision d;
  const bool ok_orig = measure(original, d.original);
  const bool ok_res = measure(resampled, d.resampled);
  if (!ok_orig || !ok_res) {
    d.keep = false;
    d.reasons.emplace_back("undefined PTA");
  } else {
    d.el_rel_error = relative_error(d.original.el_pct, d.resampled.el_pct);
    d.t_rel_error = relative_error(d.original.t_pct, d.resampled.t_pct);
    d.pta_rel_error = relative_error(d.original.pta, d.resampled.pta);
    if (d.el_rel_error > kMaxRelativeError) d.reasons.emplace_back("EL error");
    if (d.t_rel_error > kMaxRelativeError) d.reasons.emplace_back("T error");
    if (d.pta_rel_error > kMaxRelativeError) d.reasons.emplace_back("PTA error");
  }
  if (d.original.t_components != d.resampled.t_components) d.reasons.emplace_back("topology");
  d.keep = d.reasons.empty();
  return d;
}

}  // namespace lvnc::mask
