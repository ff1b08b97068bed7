#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aeforge/tensor.hpp"

namespace aeforge {

template <typename T>
struct Parameter {
  std::string name;  // e.g. "encoder.conv1.weight"
  BasicTensor<T> tensor;
};

template <typename T>
void zero_grad(std::vector<Parameter<T>>& params);

struct AdamWHyper {
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct OptimizerState {
  AdamWHyper hyper;
  std::int64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

template <typename T>
OptimizerState<T> make_optimizer_state(const std::vector<Parameter<T>>& params, AdamWHyper hyper = {});

// One AdamW update: decoupled decay theta -= lr*wd*theta, then the
// bias-corrected Adam step. Throws UsageError if a gradient is missing.
template <typename T>
void adamw_step(std::vector<Parameter<T>>& params, OptimizerState<T>& state, double lr);

struct LrSchedule {
  std::int64_t warmup_steps = 200;
  std::int64_t total_steps = 1000;
  double peak_lr = 1e-3;

  void validate() const;
};

// Linear warm-up from 0 to peak_lr, then cosine decay to 0 at total_steps.
// Steps past total_steps return 0 and log a warning.
double lr_at_step(const LrSchedule& schedule, std::int64_t step);

}  // namespace aeforge
