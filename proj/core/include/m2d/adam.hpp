#pragma once

#include <cstdint>
#include <vector>

#include "m2d/tensor.hpp"

namespace m2d {

// Per-parameter Adam state. m and v stay zero-initialized at the parameter's
// length; step counts the updates applied to this parameter.
struct AdamState {
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_param(const Tensor& param, double lr);
};

// One bias-corrected Adam update. Requires an accumulated gradient on the
// parameter; clears it afterwards.
void adam_step(Tensor& param, AdamState& state);

class ParamRegistry;

// Adam states aligned with a parameter registry.
struct Optimizer {
  std::vector<AdamState> states;

  static Optimizer for_params(const ParamRegistry& params, double lr);
  // Updates every parameter that accumulated a gradient this step.
  void step(ParamRegistry& params);
};

}  // namespace m2d
