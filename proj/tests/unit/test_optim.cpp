#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aeforge/error.hpp"
#include "aeforge/ops.hpp"
#include "aeforge/optim.hpp"
#include "oracles.hpp"

using namespace aeforge;

namespace {

std::vector<Parameter<double>> scalar_param(double v) { return {{"p", TensorD::from({1}, {v}, true)}}; }

void set_grad(Parameter<double>& p, double g) {
  p.tensor.zero_grad();
  p.tensor.mutable_grad()[0] = g;
}

}  // namespace

TEST(AdamW, DecayOnlyWithZeroGradient) {
  auto params = scalar_param(1.0);
  auto state = make_optimizer_state(params, AdamWHyper{0.05});
  set_grad(params[0], 0.0);
  adamw_step(params, state, 0.1);
  EXPECT_NEAR(params[0].tensor.data()[0], 0.995, 1e-15);
  EXPECT_EQ(state.first_moment[0][0], 0.0);
  EXPECT_EQ(state.second_moment[0][0], 0.0);
  EXPECT_EQ(state.step_count, 1);
}

TEST(AdamW, FirstStepHandComputed) {
  auto params = scalar_param(2.0);
  auto state = make_optimizer_state(params, AdamWHyper{0.0});
  set_grad(params[0], 1.0);
  adamw_step(params, state, 0.01);
  // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
  EXPECT_NEAR(params[0].tensor.data()[0], 2.0 - 0.01 / (1.0 + 1e-8), 1e-15);
}

TEST(AdamW, MatchesScalarReferenceOverSteps) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  auto params = scalar_param(0.7);
  auto state = make_optimizer_state(params, AdamWHyper{0.05});
  oracle::ScalarAdamW ref{0.7};
  ref.wd = 0.05;
  for (int step = 0; step < 25; ++step) {
    const double grad = g(rng);
    const double lr = 1e-2 * (1 + step % 3);
    set_grad(params[0], grad);
    adamw_step(params, state, lr);
    ref.step(grad, lr);
    ASSERT_NEAR(params[0].tensor.data()[0], ref.theta, 1e-10) << "step " << step;
  }
  EXPECT_EQ(state.step_count, 25);
}

TEST(AdamW, MissingGradientIsUsageError) {
  auto params = scalar_param(1.0);
  auto state = make_optimizer_state(params);
  EXPECT_THROW(adamw_step(params, state, 0.1), UsageError);
}

TEST(AdamW, MomentsShapeMatchParameters) {
  std::vector<Parameter<double>> params{{"a", TensorD::zeros({2, 3}, true)}, {"b", TensorD::zeros({4}, true)}};
  auto state = make_optimizer_state(params);
  ASSERT_EQ(state.first_moment.size(), 2u);
  EXPECT_EQ(state.first_moment[0].size(), 6u);
  EXPECT_EQ(state.second_moment[1].size(), 4u);
}

TEST(AdamW, ConvexQuadraticDecreasesAfterMomentWarmup) {
  // f(x) = (x - 3)^2
  auto params = scalar_param(-2.0);
  auto state = make_optimizer_state(params, AdamWHyper{0.0});
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 1; step <= 60; ++step) {
    params[0].tensor.zero_grad();
    auto loss = mse(params[0].tensor, TensorD::from({1}, {3.0}));
    const double value = loss.item();
    backward(loss);
    adamw_step(params, state, 0.05);
    if (step >= 3) EXPECT_LE(value, prev) << "step " << step;
    prev = value;
  }
}

TEST(LrSchedule, ReferencePoints) {
  const LrSchedule s{200, 1000, 1e-3};
  EXPECT_EQ(lr_at_step(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(lr_at_step(s, 200), 1e-3);
  EXPECT_NEAR(lr_at_step(s, 600), 5e-4, 1e-18);
  EXPECT_NEAR(lr_at_step(s, 1000), 0.0, 1e-18);
  EXPECT_EQ(lr_at_step(s, 1001), 0.0);
}

TEST(LrSchedule, MatchesReferenceEverywhere) {
  const LrSchedule s{37, 401, 3e-3};
  for (std::int64_t step = 0; step <= 401; ++step) {
    ASSERT_NEAR(lr_at_step(s, step), oracle::lr_reference(37, 401, 3e-3, step), 1e-15) << step;
  }
}

TEST(LrSchedule, ContinuousAtWarmupEnd) {
  const LrSchedule s{5000, 120000, 5e-6};
  const double before = lr_at_step(s, 4999), at = lr_at_step(s, 5000), after = lr_at_step(s, 5001);
  EXPECT_NEAR(before, at, 5e-6 / 5000 + 1e-15);
  EXPECT_NEAR(after, at, 1e-12);
}

TEST(LrSchedule, Validation) {
  EXPECT_THROW((LrSchedule{0, 10, 1e-3}.validate()), ValidationError);
  EXPECT_THROW((LrSchedule{10, 10, 1e-3}.validate()), ValidationError);
  EXPECT_THROW((LrSchedule{1, 10, 0.0}.validate()), ValidationError);
  EXPECT_NO_THROW((LrSchedule{1, 10, 1e-3}.validate()));
}
