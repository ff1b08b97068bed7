#pragma once

#include <span>

#include "aeforge/tensor.hpp"

namespace aeforge {

// Cross-correlation over NCHW input with zero padding.
// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride = 1, int padding = 0);

// [N,C,H,W] -> [N,C,2H,2W]; each value copied into a 2x2 block.
template <typename T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);

// [N,C,H,W] -> [N,C]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

// x [N,Cin], weight [Cout,Cin], bias [Cout] -> [N,Cout]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

// Per-channel y = (x - shift[c]) * scale[c] on NCHW input. Used for input
// standardization; differentiable with respect to x only.
template <typename T>
BasicTensor<T> channel_affine(const BasicTensor<T>& x, std::span<const T> shift,
                              std::span<const T> scale);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

// Mean binary cross-entropy on logits, computed as
// max(z,0) - z*y + log1p(exp(-|z|)). labels must be 0 or 1.
template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> labels);

template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& pred, const BasicTensor<T>& target);

}  // namespace aeforge
