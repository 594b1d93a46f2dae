#pragma once

#include <functional>
#include <vector>

#include "lcs/tensor.hpp"

namespace lcs {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam descent step over `params` using their current
// grads. A parameter with no grad buffer is treated as zero-gradient.
// State is lazily initialized to the parameter shapes on first use.
void adam_step(std::vector<Tensor>& params, const AdamConfig& cfg, AdamState& state);

// Max relative error between reverse-mode and central-difference gradients
// of a deterministic scalar function of `params`.
// f is called with the same tensors it must build a fresh graph from.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace lcs
