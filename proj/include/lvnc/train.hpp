#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lvnc/image.hpp"
#include "lvnc/losses.hpp"
#include "lvnc/unet.hpp"

namespace lvnc::unet {

struct TrainConfig {
  int max_epochs = 25;
  int patience = 5;
  int batch_size = 8;
  double validation_fraction = 0.2;
  double learning_rate = 0.001;
  double weight_decay = 0.0005;
  bool augment = true;
  std::uint64_t rng_seed = 1;

  /// Throws ContractError unless 0 < patience < max_epochs, batch_size > 0
  /// and 0 < validation_fraction < 1.
  void validate() const;
};

/// Tracks the best validation loss; improvement means a strict decrease.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Feeds the loss of the next epoch (1-based). Returns true when training
  /// should stop after this epoch.
  bool update(double validation_loss);

  bool last_improved() const { return last_improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }
  int epochs_seen() const { return epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  bool last_improved_ = false;
  double best_ = 0.0;
};

/// A normalized image with its ground truth.
struct TrainSample {
  data::Image image;
  mask::SegMask mask;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dice_el = 0.0;
  double val_dice_ic = 0.0;
  double val_dice_t = 0.0;
  bool improved = false;
};

struct FitResult {
  UNetParams params;  // from the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

using LossFn = std::function<tensor::Tensor(tensor::Tape&, const tensor::Tensor& probs,
                                            std::span<const mask::SegMask> labels)>;
using EpochCallback = std::function<void(const EpochRecord&)>;

/// The training objective: combined Lovász-Softmax + boundary loss.
LossFn default_loss(const losses::LossConfig& config = {});

/// Stacks images into an [N, 1, S, S] tensor.
tensor::Tensor make_batch(std::span<const data::Image> images);

/// Mean loss over a sample set (no augmentation, no gradients), processed
/// in chunks of batch_size. Also returns the predicted masks.
struct Evaluation {
  double loss = 0.0;
  std::vector<mask::SegMask> predictions;
};
Evaluation evaluate_samples(const UNetParams& params, std::span<const TrainSample> samples,
                            const LossFn& loss_fn, int batch_size);

/// Trains from Kaiming initialisation seeded with train.rng_seed.
FitResult fit(const UNetConfig& config, const TrainConfig& train, std::span<const TrainSample> train_set,
              std::span<const TrainSample> val_set, const LossFn& loss_fn,
              const EpochCallback& on_epoch = {});

}  // namespace lvnc::unet
