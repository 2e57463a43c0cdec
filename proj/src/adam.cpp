#include "smoe/adam.hpp"

#include "smoe/error.hpp"

#include <cmath>

namespace smoe::train {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, long step,
               const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "Adam state does not match the parameter block");
  }
  if (step < 1) throw Error(ErrorCode::InvalidArgument, "Adam step index starts at 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t n = 0; n < params.size(); ++n) {
    const double g = grads[n];
    state.m[n] = cfg.beta1 * state.m[n] + (1.0 - cfg.beta1) * g;
    state.v[n] = cfg.beta2 * state.v[n] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[n] / c1;
    const double v_hat = state.v[n] / c2;
    const double update = lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    if (!std::isfinite(update)) throw Error(ErrorCode::NonFinite, "Adam produced a non-finite update");
    params[n] -= update;
  }
}

}  // namespace smoe::train
