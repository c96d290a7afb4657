#include <algorithm>
#include <cmath>
#include <numeric>

#include "lvnc/errors.hpp"
#include "lvnc/losses.hpp"

namespace lvnc::losses {

using tensor::Tape;
using tensor::Tensor;

void LossConfig::validate() const {
  if (lovasz_weight < 0.0 || boundary_weight < 0.0) {
    throw ContractError("loss weights must be non-negative");
  }
  if (static_cast<int>(boundary_label) >= mask::kNumLabels) {
    throw ContractError("boundary label is not a tissue label");
  }
}

namespace {

void check_batch(const Tensor& probs, std::size_t n_labels) {
  if (probs.shape().size() != 4) throw DimensionError("loss expects [N, C, H, W] probabilities");
  if (probs.dim(0) != n_labels) {
    throw DimensionError("loss got " + std::to_string(n_labels) + " label maps for a batch of " +
                         std::to_string(probs.dim(0)));
  }
}

}  // namespace

const char* distance_unit_name(DistanceUnit u) { return u == DistanceUnit::Pixel ? "pixel" : "diagonal"; }

DistanceUnit parse_distance_unit(const std::string& name) {
  if (name == "pixel") return DistanceUnit::Pixel;
  if (name == "diagonal") return DistanceUnit::Diagonal;
  throw ContractError("unknown distance unit '" + name + "' (expected pixel or diagonal)");
}

Tensor lovasz_softmax(Tape& tape, const Tensor& probs, std::span<const mask::SegMask> labels) {
  check_batch(probs, labels.size());
  const std::size_t n = probs.dim(0), c = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const std::size_t hw = h * w;
  auto p = probs.data();

  // d(loss)/d(probs), filled during the forward pass since the sort order is
  // what the backward rule needs anyway.
  std::vector<double> dprobs(probs.numel(), 0.0);
  std::vector<std::size_t> order(hw);
  std::vector<double> errors(hw), grad(hw);
  double total = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = labels[i];
    if (m.width() != w || m.height() != h) throw DimensionError("label map size differs from probabilities");
    for (auto v : m.labels()) {
      if (v >= c) throw ContractError("label " + std::to_string(v) + " has no probability channel");
    }
    std::vector<std::size_t> present;
    for (std::size_t k = 0; k < c; ++k) {
      if (std::find(m.labels().begin(), m.labels().end(), static_cast<std::uint8_t>(k)) !=
          m.labels().end()) {
        present.push_back(k);
      }
    }
    const double class_weight = 1.0 / (static_cast<double>(present.size()) * static_cast<double>(n));
    double image_loss = 0.0;
    for (std::size_t k : present) {
      const double* pk = p.data() + (i * c + k) * hw;
      std::size_t gts = 0;
      for (std::size_t j = 0; j < hw; ++j) {
        const bool fg = m.labels()[j] == k;
        gts += fg ? 1 : 0;
        errors[j] = fg ? 1.0 - pk[j] : pk[j];
      }
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
      // Gradient of the Lovász extension of the Jaccard loss at the sorted
      // ground-truth indicator.
      std::size_t cum_fg = 0, cum_bg = 0;
      double prev = 0.0, loss_k = 0.0;
      for (std::size_t r = 0; r < hw; ++r) {
        const bool fg = m.labels()[order[r]] == k;
        (fg ? cum_fg : cum_bg) += 1;
        const double inter = static_cast<double>(gts - cum_fg);
        const double uni = static_cast<double>(gts + cum_bg);
        const double jac = 1.0 - inter / uni;
        grad[r] = jac - prev;
        prev = jac;
        loss_k += errors[order[r]] * grad[r];
      }
      image_loss += loss_k;
      double* dk = dprobs.data() + (i * c + k) * hw;
      for (std::size_t r = 0; r < hw; ++r) {
        const std::size_t j = order[r];
        const bool fg = m.labels()[j] == k;
        dk[j] += (fg ? -grad[r] : grad[r]) * class_weight;
      }
    }
    total += image_loss / static_cast<double>(present.size());
  }

  Tensor result = Tensor::scalar(total / static_cast<double>(n));
  tape.record(tensor::OpKind::LovaszSoftmax, {probs}, result,
              [probs = Tensor(probs), dprobs = std::move(dprobs)](const Tensor& output) mutable {
                const double g = output.grad()[0];
                auto gp = probs.grad();
                for (std::size_t j = 0; j < gp.size(); ++j) gp[j] += g * dprobs[j];
              });
  return result;
}

Tensor boundary_loss(Tape& tape, const Tensor& probs, std::span<const DistanceMap> maps,
                     const LossConfig& config) {
  config.validate();
  check_batch(probs, maps.size());
  const std::size_t n = probs.dim(0), c = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const std::size_t hw = h * w;
  const auto k = static_cast<std::size_t>(config.boundary_label);
  if (k >= c) throw ContractError("boundary label has no probability channel");
  const double diag = std::sqrt(static_cast<double>(w * w + h * h));
  const double inv = (config.distance_unit == DistanceUnit::Diagonal ? 1.0 / diag : 1.0) /
                     static_cast<double>(n * hw);

  // Per-pixel weight d(loss)/d(probs(T)); constant in probs.
  std::vector<double> weight(n * hw);
  double total = 0.0;
  auto p = probs.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (maps[i].width != w || maps[i].height != h) throw DimensionError("distance map size differs from probabilities");
    const double* pk = p.data() + (i * c + k) * hw;
    for (std::size_t j = 0; j < hw; ++j) {
      weight[i * hw + j] = maps[i].values[j] * inv;
      total += weight[i * hw + j] * pk[j];
    }
  }
  Tensor result = Tensor::scalar(total);
  tape.record(tensor::OpKind::BoundaryLoss, {probs}, result,
              [probs = Tensor(probs), weight = std::move(weight), n, c, hw, k](const Tensor& output) mutable {
                const double g = output.grad()[0];
                auto gp = probs.grad();
                for (std::size_t i = 0; i < n; ++i) {
                  double* dk = gp.data() + (i * c + k) * hw;
                  for (std::size_t j = 0; j < hw; ++j) dk[j] += g * weight[i * hw + j];
                }
              });
  return result;
}

Tensor boundary_loss(Tape& tape, const Tensor& probs, std::span<const mask::SegMask> labels,
                     const LossConfig& config) {
  std::vector<DistanceMap> maps;
  maps.reserve(labels.size());
  for (const auto& m : labels) maps.push_back(signed_distance_map(m, config.boundary_label));
  return boundary_loss(tape, probs, maps, config);
}

Tensor combined_loss(Tape& tape, const Tensor& probs, std::span<const mask::SegMask> labels,
                     const LossConfig& config) {
  config.validate();
  auto lovasz = tensor::scale(tape, lovasz_softmax(tape, probs, labels), config.lovasz_weight);
  auto boundary = tensor::scale(tape, boundary_loss(tape, probs, labels, config), config.boundary_weight);
  return tensor::add(tape, lovasz, boundary);
}

}  // namespace lvnc::losses
