#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lvnc::mask {

enum class Tissue : std::uint8_t {
  Background = 0,
  ExternalLayer = 1,
  InternalCavity = 2,
  Trabeculae = 3,
};

inline constexpr int kNumLabels = 4;
inline constexpr double kLvncThresholdPct = 27.4;

const char* tissue_name(Tissue t);

/// Per-pixel tissue labels, row-major.
class SegMask {
 public:
  SegMask() = default;
  SegMask(std::size_t width, std::size_t height, Tissue fill = Tissue::Background);
  /// Throws ContractError if any label is outside 0..3.
  SegMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> labels);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return labels_.size(); }

  Tissue at(std::size_t row, std::size_t col) const {
    return static_cast<Tissue>(labels_[row * width_ + col]);
  }
  void set(std::size_t row, std::size_t col, Tissue t) {
    labels_[row * width_ + col] = static_cast<std::uint8_t>(t);
  }
  const std::vector<std::uint8_t>& labels() const { return labels_; }

  bool operator==(const SegMask&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// 90 degree counter-clockwise rotations, quarter_turns taken mod 4.
SegMask rotate90(const SegMask& m, int quarter_turns);
SegMask flip_horizontal(const SegMask& m);

struct RegionAreas {
  std::size_t trabeculae = 0;      // TA
  std::size_t external_layer = 0;  // ELA
  std::size_t internal_cavity = 0; // ICA

  bool operator==(const RegionAreas&) const = default;
};

struct PtaResult {
  double pta = 0.0;
  bool positive = false;

  bool operator==(const PtaResult&) const = default;
};

RegionAreas region_areas(const SegMask& m);

/// 100 * TA / (TA + ELA), positive iff >= 27.4. Throws UndefinedPtaError
/// when TA + ELA = 0.
PtaResult pta(const RegionAreas& areas);

struct Components {
  std::size_t count = 0;
  /// 0 for pixels outside the label, otherwise 1-based component id in
  /// order of first appearance in a row-major scan.
  std::vector<std::size_t> ids;
};

/// 8-connected components of the pixels carrying `label`.
Components connected_components(const SegMask& m, Tissue label);

/// Nearest-neighbour resampling to new_size x new_size. Source pixel for
/// output (r, c) is floor((r + 0.5) * h / new_size).
SegMask resample_mask(const SegMask& m, std::size_t new_size);

struct FidelityMeasures {
  double el_pct = 0.0;  // ELA / (TA + ELA + ICA) * 100
  double t_pct = 0.0;   // TA / (TA + ELA + ICA) * 100
  double pta = 0.0;
  std::size_t t_components = 0;
};

struct FidelityDecision {
  bool keep = true;
  FidelityMeasures original;
  FidelityMeasures resampled;
  double el_rel_error = 0.0;
  double t_rel_error = 0.0;
  double pta_rel_error = 0.0;
  /// Every violated criterion: "EL error", "T error", "PTA error",
  /// "topology", "undefined PTA".
  std::vector<std::string> reasons;
};

inline constexpr double kMaxRelativeError = 0.05;

/// |resampled - original| / original with 0/0 = 0 and x/0 = inf.
double relative_error(double original, double resampled);

/// Compares a source-resolution mask with its resampled version.
FidelityDecision fidelity_filter(const SegMask& original, const SegMask& resampled);

}  // namespace lvnc::mask
