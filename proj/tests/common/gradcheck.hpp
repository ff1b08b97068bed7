#pragma once

// Finite-difference gradient suites shared by the unit tests and the
// acceptance binary. Everything runs in double precision with h = 1e-4.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "aeforge/models.hpp"
#include "aeforge/ops.hpp"
#include "aeforge/optim.hpp"
#include "aeforge/tensor.hpp"
#include "oracles.hpp"

namespace gradcheck {

using aeforge::TensorD;

struct Result {
  std::string name;
  double max_rel = 0;
  std::size_t checked = 0;
};

inline TensorD random_tensor(aeforge::Shape shape, std::mt19937_64& rng, bool grad, double lo = -1, double hi = 1,
                             double avoid = 0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(aeforge::shape_numel(shape));
  for (auto& x : v) {
    do x = d(rng);
    while (std::abs(x) < avoid);
  }
  return TensorD::from(std::move(shape), std::move(v), grad);
}

// Backprop once through loss(leaves), then compare every leaf against central
// differences on up to `per_leaf` coordinates.
inline Result check(const std::string& name, std::vector<TensorD> leaves,
                    const std::function<TensorD(const std::vector<TensorD>&)>& loss, std::mt19937_64& rng,
                    std::size_t per_leaf = 64) {
  for (auto& l : leaves) l.zero_grad();
  aeforge::backward(loss(leaves));
  Result r{name};
  auto eval = [&] {
    aeforge::NoGradGuard guard;
    return loss(leaves).item();
  };
  for (auto& l : leaves) {
    if (!l.requires_grad()) continue;
    std::vector<double> analytic(l.grad().begin(), l.grad().end());
    const auto idx = oracle::sample_indices(l.numel(), per_leaf, rng);
    const auto g = oracle::finite_difference(l.data(), analytic, idx, eval);
    r.max_rel = std::max(r.max_rel, g.max_rel);
    r.checked += g.checked;
  }
  return r;
}

// Scalar reduction with non-uniform upstream gradient.
inline TensorD reduce(const TensorD& y, std::mt19937_64& rng) {
  const auto target = random_tensor(y.shape(), rng, false);
  return aeforge::mse(y, target);
}

// One pass over every differentiable op for a given seed.
inline std::vector<Result> op_suite(std::uint64_t seed) {
  using namespace aeforge;
  std::mt19937_64 rng(seed);
  std::vector<Result> out;
  std::uniform_int_distribution<int> pick(0, 2);

  {
    const int stride = 1 + pick(rng) % 2, pad = pick(rng) % 2;
    auto x = random_tensor({2, 3, 6, 5}, rng, true);
    auto w = random_tensor({4, 3, 3, 3}, rng, true);
    auto b = random_tensor({4}, rng, true);
    auto tgt_rng = rng;
    out.push_back(check("conv2d", {x, w, b}, [&, stride, pad](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(conv2d(l[0], l[1], l[2], stride, pad), r);
    }, rng));
  }
  {
    auto x = random_tensor({1, 2, 3, 3}, rng, true);
    auto tgt_rng = rng;
    out.push_back(check("upsample_nearest2x", {x}, [&](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(upsample_nearest2x(l[0]), r);
    }, rng));
  }
  {
    auto x = random_tensor({3, 7}, rng, true, -1, 1, 0.05);  // away from the kink
    auto tgt_rng = rng;
    out.push_back(check("relu", {x}, [&](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(relu(l[0]), r);
    }, rng));
  }
  {
    auto x = random_tensor({3, 7}, rng, true, -4, 4);
    auto tgt_rng = rng;
    out.push_back(check("silu", {x}, [&](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(silu(l[0]), r);
    }, rng));
  }
  {
    auto x = random_tensor({3, 7}, rng, true, -4, 4);
    auto tgt_rng = rng;
    out.push_back(check("sigmoid", {x}, [&](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(sigmoid(l[0]), r);
    }, rng));
  }
  {
    auto x = random_tensor({2, 3, 4, 5}, rng, true);
    auto tgt_rng = rng;
    out.push_back(check("global_avg_pool", {x}, [&](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(global_avg_pool(l[0]), r);
    }, rng));
  }
  {
    auto x = random_tensor({4, 5}, rng, true);
    auto w = random_tensor({3, 5}, rng, true);
    auto b = random_tensor({3}, rng, true);
    auto tgt_rng = rng;
    out.push_back(check("linear", {x, w, b}, [&](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(linear(l[0], l[1], l[2]), r);
    }, rng));
  }
  {
    auto x = random_tensor({2, 3, 3, 3}, rng, true);
    const std::vector<double> shift{0.1, -0.2, 0.3}, scale{2.0, 0.5, 1.5};
    auto tgt_rng = rng;
    out.push_back(check("channel_affine", {x}, [&](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(channel_affine<double>(l[0], shift, scale), r);
    }, rng));
  }
  {
    auto x = random_tensor({2, 6}, rng, true);
    auto tgt_rng = rng;
    out.push_back(check("reshape", {x}, [&](const std::vector<TensorD>& l) {
      auto r = tgt_rng;
      return reduce(reshape(l[0], {3, 4}), r);
    }, rng));
  }
  {
    auto x = random_tensor({2, 5}, rng, true);
    out.push_back(check("sum", {x}, [&](const std::vector<TensorD>& l) { return sum(l[0]); }, rng));
  }
  {
    auto z = random_tensor({16}, rng, true, -6, 6);
    std::vector<double> y(16);
    std::bernoulli_distribution coin(0.5);
    for (auto& v : y) v = coin(rng) ? 1.0 : 0.0;
    out.push_back(check("bce_with_logits", {z}, [&](const std::vector<TensorD>& l) {
      return bce_with_logits<double>(l[0], y);
    }, rng));
  }
  {
    auto p = random_tensor({3, 4}, rng, true);
    auto t = random_tensor({3, 4}, rng, true);
    out.push_back(check("mse", {p, t}, [&](const std::vector<TensorD>& l) { return mse(l[0], l[1]); }, rng));
  }
  return out;
}

inline std::vector<TensorD> leaves_of(const std::vector<aeforge::Parameter<double>>& params) {
  std::vector<TensorD> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

// Full autoencoder graph: every parameter tensor plus the input image.
inline Result autoencoder_check(std::uint64_t seed, std::size_t per_leaf = 12) {
  using namespace aeforge;
  std::mt19937_64 rng(seed);
  Autoencoder<double> ae(AutoencoderConfig{4, Activation::silu, seed});
  auto x = random_tensor({1, 3, 16, 16}, rng, true, 0, 1);
  auto target = random_tensor({1, 3, 16, 16}, rng, false, 0, 1);
  auto leaves = leaves_of(ae.parameters());
  leaves.push_back(x);
  const std::size_t n = leaves.size() - 1;
  return check("autoencoder", leaves, [&, n](const std::vector<TensorD>& l) {
    return mse(ae.forward(l[n]), target);
  }, rng, per_leaf);
}

// Full detector graph. The zero-initialized head is randomized so upstream
// layers receive a non-zero gradient.
inline Result detector_check(std::uint64_t seed, std::size_t per_leaf = 12) {
  using namespace aeforge;
  std::mt19937_64 rng(seed);
  Detector<double> det(DetectorConfig{16, seed});
  auto params = det.parameters();
  std::normal_distribution<double> nd(0, 0.5);
  for (auto& p : params)
    if (p.name.find("head") != std::string::npos)
      for (auto& v : p.tensor.data()) v = nd(rng);
  auto x = random_tensor({3, 3, 16, 16}, rng, false, 0, 1);
  const std::vector<double> labels{1, 0, 1};
  return check("detector", leaves_of(params), [&](const std::vector<TensorD>&) {
    return bce_with_logits<double>(det.logits(x), labels);
  }, rng, per_leaf);
}

}  // namespace gradcheck
