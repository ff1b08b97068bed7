#include "aeforge/optim.hpp"

#include <cmath>
#include <numbers>

#include "aeforge/error.hpp"
#include "aeforge/log.hpp"

namespace aeforge {

template <typename T>
void zero_grad(std::vector<Parameter<T>>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

template <typename T>
OptimizerState<T> make_optimizer_state(const std::vector<Parameter<T>>& params, AdamWHyper hyper) {
  OptimizerState<T> state;
  state.hyper = hyper;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.tensor.numel(), T(0));
    state.second_moment.emplace_back(p.tensor.numel(), T(0));
  }
  return state;
}

template <typename T>
void adamw_step(std::vector<Parameter<T>>& params, OptimizerState<T>& state, double lr) {
  if (state.first_moment.size() != params.size()) {
    throw UsageError("optimizer state was built for a different parameter list");
  }
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw UsageError("parameter '" + p.name + "' has no gradient");
  }
  const auto& h = state.hyper;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  const T decay = static_cast<T>(1.0 - lr * h.weight_decay);
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].tensor.data();
    auto grad = params[k].tensor.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != theta.size()) throw UsageError("moment shape mismatch for '" + params[k].name + "'");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const T g = grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const double m_hat = static_cast<double>(m[i]) / bc1;
      const double v_hat = static_cast<double>(v[i]) / bc2;
      theta[i] = theta[i] * decay - static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + h.eps));
    }
  }
}

void LrSchedule::validate() const {
  if (!(warmup_steps > 0 && warmup_steps < total_steps)) {
    throw ValidationError("lr schedule requires 0 < warmup_steps < total_steps (got " +
                          std::to_string(warmup_steps) + ", " + std::to_string(total_steps) + ")");
  }
  if (!(peak_lr > 0.0)) throw ValidationError("lr schedule requires peak_lr > 0");
}

double lr_at_step(const LrSchedule& s, std::int64_t step) {
  s.validate();
  if (step < 0) throw ValidationError("lr_at_step: negative step");
  if (step > s.total_steps) {
    log_warn("lr_at_step: step " + std::to_string(step) + " beyond total_steps " +
             std::to_string(s.total_steps) + "; returning 0");
    return 0.0;
  }
  if (step < s.warmup_steps) {
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double progress =
      static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
  return s.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template void zero_grad(std::vector<Parameter<float>>&);
template void zero_grad(std::vector<Parameter<double>>&);
template OptimizerState<float> make_optimizer_state(const std::vector<Parameter<float>>&, AdamWHyper);
template OptimizerState<double> make_optimizer_state(const std::vector<Parameter<double>>&, AdamWHyper);
template void adamw_step(std::vector<Parameter<float>>&, OptimizerState<float>&, double);
template void adamw_step(std::vector<Parameter<double>>&, OptimizerState<double>&, double);

}  // namespace aeforge
