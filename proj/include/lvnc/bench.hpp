#pragma once

#include "lvnc/metrics.hpp"
#include "lvnc/tensor.hpp"
#include "lvnc/unet.hpp"

namespace lvnc::eval {

inline constexpr int kWarmupRuns = 5;
inline constexpr int kTimedRuns = 100;

/// Runs `warmup` untimed predictions, then `runs` timed ones on a monotonic
/// clock. Throws std::runtime_error if any timed run's masks differ from the
/// warm-up output.
TimingReport benchmark_inference(const unet::UNetParams& params, const tensor::Tensor& batch,
                                 int runs = kTimedRuns, int warmup = kWarmupRuns);

}  // namespace lvnc::eval
