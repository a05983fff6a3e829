#include "m2d/adam.hpp"

#include <cmath>

#include "m2d/checkpoint.hpp"

namespace m2d {

AdamState AdamState::for_param(const Tensor& param, double lr) {
  if (lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
  AdamState s;
  s.lr = lr;
  s.m.assign(param.data().size(), 0.0);
  s.v.assign(param.data().size(), 0.0);
  return s;
}

void adam_step(Tensor& param, AdamState& state) {
  if (!param.has_grad()) {
    throw UsageError("adam_step: parameter has no accumulated gradient");
  }
  const auto& g = param.grad();
  if (g.size() != state.m.size() || g.size() != state.v.size()) {
    throw DimensionError("adam_step: state size does not match parameter");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::vector<double> updated = param.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    updated[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  param.update_data(updated);
  param.zero_grad();
}

Optimizer Optimizer::for_params(const ParamRegistry& params, double lr) {
  Optimizer opt;
  opt.states.reserve(params.size());
  for (const auto& [name, t] : params.entries()) {
    opt.states.push_back(AdamState::for_param(t, lr));
  }
  return opt;
}

void Optimizer::step(ParamRegistry& params) {
  if (states.size() != params.size()) {
    throw UsageError("Optimizer: state count does not match registry");
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    Tensor& t = params.entries()[i].second;
    if (!t.has_grad()) continue;
    adam_step(t, states[i]);
  }
}

}  // namespace m2d
