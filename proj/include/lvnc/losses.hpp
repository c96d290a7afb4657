#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lvnc/mask.hpp"
#include "lvnc/tensor.hpp"

namespace lvnc::losses {

/// Length unit of the distances inside the boundary term. Pixel keeps raw
/// pixel distances; Diagonal divides them by the image diagonal so the term
/// stays in [-1, 1] per pixel whatever the resolution.
enum class DistanceUnit { Pixel, Diagonal };

struct LossConfig {
  double lovasz_weight = 2.0;
  double boundary_weight = 1.0;
  mask::Tissue boundary_label = mask::Tissue::Trabeculae;
  DistanceUnit distance_unit = DistanceUnit::Pixel;

  /// Throws ContractError on negative weights.
  void validate() const;
};

struct DistanceMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  bool operator==(const DistanceMap&) const = default;
};

/// Exact squared Euclidean distance from each pixel to the nearest seed
/// pixel. Pixels are seeds where seeds[i] is true. With no seeds every entry
/// is +infinity.
std::vector<double> squared_distance_transform(const std::vector<bool>& seeds, std::size_t width,
                                               std::size_t height);

/// +distance to the region for pixels outside it, -distance to the
/// complement for pixels inside it. An empty region (or full region) uses
/// the image diagonal as the distance to the missing set.
DistanceMap signed_distance_map(const mask::SegMask& labels, mask::Tissue target);

const char* distance_unit_name(DistanceUnit u);
/// Throws ContractError for names other than "pixel" and "diagonal".
DistanceUnit parse_distance_unit(const std::string& name);

/// Lovász-Softmax over present labels, averaged per image then over the
/// batch. probs is [N, C, H, W] and labels holds N masks.
tensor::Tensor lovasz_softmax(tensor::Tape& tape, const tensor::Tensor& probs,
                              std::span<const mask::SegMask> labels);

/// Mean over batch and pixels of distance_map * probs(boundary_label), with
/// distances expressed in config.distance_unit.
tensor::Tensor boundary_loss(tensor::Tape& tape, const tensor::Tensor& probs,
                             std::span<const mask::SegMask> labels, const LossConfig& config);
tensor::Tensor boundary_loss(tensor::Tape& tape, const tensor::Tensor& probs,
                             std::span<const DistanceMap> maps, const LossConfig& config);

/// lovasz_weight * lovasz_softmax + boundary_weight * boundary_loss.
tensor::Tensor combined_loss(tensor::Tape& tape, const tensor::Tensor& probs,
                             std::span<const mask::SegMask> labels, const LossConfig& config);

}  // namespace lvnc::losses
