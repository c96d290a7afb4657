#include "lvnc/unet.hpp"

#include <algorithm>
#include <random>

#include "lvnc/errors.hpp"

namespace lvnc::unet {

using tensor::Tape;
using tensor::Tensor;

void UNetConfig::validate() const {
  if (depth < 1 || base_channels < 1 || in_channels < 1 || num_labels < 2 || input_size < 1) {
    throw ContractError("U-Net config fields must be positive (num_labels >= 2)");
  }
  if (depth > 20 || input_size % (1 << depth) != 0) {
    throw ContractError("U-Net input_size " + std::to_string(input_size) +
                        " is not divisible by 2^depth (depth " + std::to_string(depth) + ")");
  }
}

namespace {

struct ConvSpec {
  std::string name;
  std::size_t cin, cout, k;
};

// Declared parameter layout; forward() consumes convs in this order.
std::vector<ConvSpec> conv_layout(const UNetConfig& c) {
  std::vector<ConvSpec> out;
  const auto base = static_cast<std::size_t>(c.base_channels);
  std::size_t cin = static_cast<std::size_t>(c.in_channels);
  for (int l = 0; l < c.depth; ++l) {
    const std::size_t ch = base << l;
    out.push_back({"enc" + std::to_string(l) + ".conv1", cin, ch, 3});
    out.push_back({"enc" + std::to_string(l) + ".conv2", ch, ch, 3});
    cin = ch;
  }
  const std::size_t bott = base << c.depth;
  out.push_back({"bottleneck.conv1", cin, bott, 3});
  out.push_back({"bottleneck.conv2", bott, bott, 3});
  std::size_t below = bott;
  for (int l = c.depth - 1; l >= 0; --l) {
    const std::size_t ch = base << l;
    out.push_back({"dec" + std::to_string(l) + ".conv1", ch + below, ch, 3});
    out.push_back({"dec" + std::to_string(l) + ".conv2", ch, ch, 3});
    below = ch;
  }
  out.push_back({"head", base, static_cast<std::size_t>(c.num_labels), 1});
  return out;
}

}  // namespace

std::size_t parameter_count(const UNetConfig& config) {
  config.validate();
  std::size_t n = 0;
  for (const auto& s : conv_layout(config)) n += s.cout * s.cin * s.k * s.k + s.cout;
  return n;
}

std::size_t UNetParams::count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

UNetParams UNetParams::clone() const {
  UNetParams out{config, {}};
  out.params.reserve(params.size());
  for (const auto& p : params) out.params.push_back({p.name, p.value.clone()});
  return out;
}

void UNetParams::zero_grad() {
  for (auto& p : params) p.value.zero_grad();
}

const Tensor& UNetParams::get(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p.value;
  }
  throw ContractError("no parameter named " + name);
}

UNetParams init_params(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  UNetParams out{config, {}};
  for (const auto& s : conv_layout(config)) {
    const double fan_in = static_cast<double>(s.cin * s.k * s.k);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    std::vector<double> w(s.cout * s.cin * s.k * s.k);
    for (auto& v : w) v = dist(rng);
    out.params.push_back({s.name + ".weight", Tensor({s.cout, s.cin, s.k, s.k}, std::move(w), true)});
    out.params.push_back({s.name + ".bias", Tensor::zeros({s.cout}, true)});
  }
  return out;
}

Tensor forward(Tape& tape, const UNetParams& params, const Tensor& batch) {
  const auto& c = params.config;
  const auto s = static_cast<std::size_t>(c.input_size);
  if (batch.shape().size() != 4 || batch.dim(1) != static_cast<std::size_t>(c.in_channels) ||
      batch.dim(2) != s || batch.dim(3) != s) {
    throw DimensionError("U-Net expects [N, " + std::to_string(c.in_channels) + ", " +
                         std::to_string(s) + ", " + std::to_string(s) + "], got " +
                         tensor::shape_str(batch.shape()));
  }
  std::size_t next = 0;
  auto conv = [&](const Tensor& x, bool activate) {
    const auto& w = params.params.at(next++).value;
    const auto& b = params.params.at(next++).value;
    const int pad = static_cast<int>(w.dim(2) / 2);
    auto y = tensor::conv2d(tape, x, w, b, pad);
    return activate ? tensor::relu(tape, y) : y;
  };

  std::vector<Tensor> skips;
  Tensor x = batch;
  for (int l = 0; l < c.depth; ++l) {
    x = conv(x, true);
    x = conv(x, true);
    skips.push_back(x);
    x = tensor::maxpool2(tape, x);
  }
  x = conv(x, true);
  x = conv(x, true);
  for (int l = c.depth - 1; l >= 0; --l) {
    x = tensor::upsample2(tape, x);
    x = tensor::concat_channels(tape, skips[static_cast<std::size_t>(l)], x);
    x = conv(x, true);
    x = conv(x, true);
  }
  return conv(x, false);
}

std::vector<mask::SegMask> argmax_labels(const Tensor& probs) {
  const std::size_t n = probs.dim(0), ch = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const std::size_t hw = h * w;
  std::vector<mask::SegMask> out;
  out.reserve(n);
  auto p = probs.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint8_t> lab(hw);
    for (std::size_t j = 0; j < hw; ++j) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < ch; ++k) {
        if (p[(i * ch + k) * hw + j] > p[(i * ch + best) * hw + j]) best = k;
      }
      lab[j] = static_cast<std::uint8_t>(best);
    }
    out.emplace_back(w, h, std::move(lab));
  }
  return out;
}

std::vector<mask::SegMask> predict(const UNetParams& params, const Tensor& batch) {
  Tape tape(false);
  auto logits = forward(tape, params, batch);
  auto probs = tensor::softmax_channels(tape, logits);
  return argmax_labels(probs);
}

}  // namespace lvnc::unet
