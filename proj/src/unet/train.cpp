#include "lvnc/train.hpp"

#include <algorithm>
#include <iterator>
#include <numeric>
#include <random>

#include "lvnc/errors.hpp"
#include "lvnc/metrics.hpp"
#include "lvnc/radam.hpp"

namespace lvnc::unet {

using tensor::Tape;
using tensor::Tensor;

void TrainConfig::validate() const {
  if (!(patience > 0 && patience < max_epochs)) throw ContractError("need 0 < patience < max_epochs");
  if (batch_size < 1) throw ContractError("batch_size must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ContractError("validation_fraction must lie in (0, 1)");
  }
}

bool EarlyStopping::update(double validation_loss) {
  ++epoch_;
  last_improved_ = epoch_ == 1 || validation_loss < best_;
  if (last_improved_) {
    best_ = validation_loss;
    best_epoch_ = epoch_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

LossFn default_loss(const losses::LossConfig& config) {
  config.validate();
  return [config](Tape& tape, const Tensor& probs, std::span<const mask::SegMask> labels) {
    return losses::combined_loss(tape, probs, labels, config);
  };
}

Tensor make_batch(std::span<const data::Image> images) {
  if (images.empty()) throw ContractError("make_batch: no images");
  const std::size_t w = images[0].width, h = images[0].height;
  std::vector<double> buf;
  buf.reserve(images.size() * w * h);
  for (const auto& img : images) {
    if (img.width != w || img.height != h) throw DimensionError("make_batch: images differ in size");
    buf.insert(buf.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor({images.size(), 1, h, w}, std::move(buf));
}

Evaluation evaluate_samples(const UNetParams& params, std::span<const TrainSample> samples,
                            const LossFn& loss_fn, int batch_size) {
  Evaluation out;
  double total = 0.0;
  const auto bs = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    const std::size_t end = std::min(samples.size(), start + bs);
    std::vector<data::Image> imgs;
    std::vector<mask::SegMask> masks;
    for (std::size_t i = start; i < end; ++i) {
      imgs.push_back(samples[i].image);
      masks.push_back(samples[i].mask);
    }
    Tape tape(false);
    auto probs = tensor::softmax_channels(tape, forward(tape, params, make_batch(imgs)));
    total += loss_fn(tape, probs, masks).item() * static_cast<double>(end - start);
    auto pred = argmax_labels(probs);
    std::move(pred.begin(), pred.end(), std::back_inserter(out.predictions));
  }
  out.loss = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
  return out;
}

FitResult fit(const UNetConfig& config, const TrainConfig& train, std::span<const TrainSample> train_set,
              std::span<const TrainSample> val_set, const LossFn& loss_fn, const EpochCallback& on_epoch) {
  config.validate();
  train.validate();
  if (train_set.empty() || val_set.empty()) throw ContractError("fit needs non-empty train and validation sets");

  std::mt19937_64 rng(train.rng_seed);
  UNetParams params = init_params(config, rng());
  RAdamState opt = make_radam(params, train.learning_rate, train.weight_decay);
  EarlyStopping stopper(train.patience);

  FitResult result;
  result.params = params.clone();
  std::vector<std::size_t> order(train_set.size());
  const auto bs = static_cast<std::size_t>(train.batch_size);

  for (int epoch = 1; epoch <= train.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double train_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<data::Image> imgs;
      std::vector<mask::SegMask> masks;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = train_set[order[i]];
        if (train.augment) {
          auto a = data::augment(s.image, s.mask, rng);
          imgs.push_back(std::move(a.image));
          masks.push_back(std::move(a.mask));
        } else {
          imgs.push_back(s.image);
          masks.push_back(s.mask);
        }
      }
      params.zero_grad();
      Tape tape;
      auto probs = tensor::softmax_channels(tape, forward(tape, params, make_batch(imgs)));
      auto loss = loss_fn(tape, probs, masks);
      tape.backward(loss);
      radam_step(opt, params);
      train_total += loss.item() * static_cast<double>(end - start);
    }

    const auto val = evaluate_samples(params, val_set, loss_fn, train.batch_size);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_total / static_cast<double>(train_set.size());
    rec.val_loss = val.loss;
    std::vector<double> el, ic, t;
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      el.push_back(eval::dice(val.predictions[i], val_set[i].mask, mask::Tissue::ExternalLayer));
      ic.push_back(eval::dice(val.predictions[i], val_set[i].mask, mask::Tissue::InternalCavity));
      t.push_back(eval::dice(val.predictions[i], val_set[i].mask, mask::Tissue::Trabeculae));
    }
    rec.val_dice_el = eval::mean_std(el).mean;
    rec.val_dice_ic = eval::mean_std(ic).mean;
    rec.val_dice_t = eval::mean_std(t).mean;

    const bool stop = stopper.update(val.loss);
    rec.improved = stopper.last_improved();
    if (rec.improved) {
      result.params = params.clone();
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stop) {
      result.stopped_early = epoch < train.max_epochs;
      break;
    }
  }
  return result;
}

}  // namespace lvnc::unet
