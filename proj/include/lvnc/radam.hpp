#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lvnc/unet.hpp"

namespace lvnc::unet {

/// Rectified Adam with decoupled weight decay.
struct RAdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double learning_rate = 0.001;
  double weight_decay = 0.0005;

  long step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  /// Length of the approximated simple moving average at step t.
  double rho(long t) const;
  /// Variance rectification term, valid when rho(t) > 4.
  double rectification(long t) const;
};

RAdamState make_radam(const UNetParams& params, double learning_rate = 0.001,
                      double weight_decay = 0.0005);

/// Applies one update using the gradient stored on each tensor. Moment
/// buffers are created on the first step.
void radam_step(RAdamState& state, std::span<tensor::Tensor> params);
void radam_step(RAdamState& state, UNetParams& params);

}  // namespace lvnc::unet
