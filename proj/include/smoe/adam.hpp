#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace smoe::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;

  void resize(std::size_t n) {
    m.resize(n, 0.0);
    v.resize(n, 0.0);
  }
};

/// Bias-corrected Adam update of `params` in place. `step` counts from 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, long step,
               const AdamConfig& cfg = {});

}  // namespace smoe::train
