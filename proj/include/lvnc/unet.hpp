#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lvnc/mask.hpp"
#include "lvnc/tensor.hpp"

namespace lvnc::unet {

struct UNetConfig {
  int depth = 3;
  int base_channels = 8;
  int in_channels = 1;
  int num_labels = mask::kNumLabels;
  int input_size = 64;

  /// Throws ContractError unless every field is positive and input_size is
  /// divisible by 2^depth.
  void validate() const;
  bool operator==(const UNetConfig&) const = default;
};

/// One learnable tensor plus the name it is stored under in checkpoints.
struct NamedParam {
  std::string name;
  tensor::Tensor value;
};

/// Kernels and biases in declaration order: for each encoder level two 3x3
/// convs, two bottleneck convs, for each decoder level (deepest first) two
/// 3x3 convs after the skip concatenation, then the 1x1 head.
struct UNetParams {
  UNetConfig config;
  std::vector<NamedParam> params;

  std::size_t count() const;
  UNetParams clone() const;
  void zero_grad();
  const tensor::Tensor& get(const std::string& name) const;
};

/// Number of scalar parameters implied by a config, without allocating them.
std::size_t parameter_count(const UNetConfig& config);

/// Kaiming-normal kernels (std sqrt(2 / fan_in)), zero biases.
UNetParams init_params(const UNetConfig& config, std::uint64_t seed);

/// [N, in_channels, S, S] -> [N, num_labels, S, S] logits.
tensor::Tensor forward(tensor::Tape& tape, const UNetParams& params, const tensor::Tensor& batch);

/// Per-pixel argmax of the channel softmax, lowest label on ties.
std::vector<mask::SegMask> argmax_labels(const tensor::Tensor& probs);
std::vector<mask::SegMask> predict(const UNetParams& params, const tensor::Tensor& batch);

// Checkpoints: "LVNCUNET" magic, u32 version, u64 header length, JSON
// header, then every parameter as float64 little-endian in declared order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  UNetParams params;
  /// Free-form extra header fields (fold, seed, ...), stored as JSON text.
  std::string metadata_json = "{}";
};

void save_checkpoint(const std::filesystem::path& path, const UNetParams& params,
                     const std::string& metadata_json = "{}");
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lvnc::unet
