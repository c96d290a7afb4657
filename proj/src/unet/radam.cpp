#include "lvnc/radam.hpp"

#include <cmath>

#include "lvnc/errors.hpp"

namespace lvnc::unet {

double RAdamState::rho(long t) const {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double b2t = std::pow(beta2, static_cast<double>(t));
  return rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
}

double RAdamState::rectification(long t) const {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double r = rho(t);
  return std::sqrt((r - 4.0) * (r - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * r));
}

RAdamState make_radam(const UNetParams& params, double learning_rate, double weight_decay) {
  RAdamState s;
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  for (const auto& p : params.params) {
    s.first_moment.emplace_back(p.value.numel(), 0.0);
    s.second_moment.emplace_back(p.value.numel(), 0.0);
  }
  return s;
}

void radam_step(RAdamState& state, std::span<tensor::Tensor> params) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer state holds " + std::to_string(state.first_moment.size()) +
                         " slots, got " + std::to_string(params.size()) + " parameters");
  }
  const long t = ++state.step;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  const bool adaptive = state.rho(t) > 4.0;
  const double rect = adaptive ? state.rectification(t) : 0.0;
  const double decay = 1.0 - state.learning_rate * state.weight_decay;

  for (std::size_t s = 0; s < params.size(); ++s) {
    auto& p = params[s];
    auto& m = state.first_moment[s];
    auto& v = state.second_moment[s];
    if (m.size() != p.numel()) throw DimensionError("optimizer moment shape differs from parameter");
    if (!p.has_grad()) throw ContractError("parameter has no gradient buffer");
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      w[i] *= decay;
      if (adaptive) {
        const double adapt = std::sqrt(bias2) / (std::sqrt(v[i]) + state.eps);
        w[i] -= state.learning_rate * rect * m_hat * adapt;
      } else {
        w[i] -= state.learning_rate * m_hat;
      }
    }
  }
}

void radam_step(RAdamState& state, UNetParams& params) {
  std::vector<tensor::Tensor> handles;
  handles.reserve(params.params.size());
  for (auto& p : params.params) handles.push_back(p.value);
  radam_step(state, handles);
}

}  // namespace lvnc::unet
