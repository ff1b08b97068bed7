#include "aeforge/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "aeforge/error.hpp"

namespace aeforge {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

void require_rank(const Shape& shape, std::size_t rank, const char* op, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(shape));
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, hout, wout;
  int stride, pad;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t p() const { return hout * wout; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Output columns [lo, hi) whose input column ox*stride - pad + j is in range.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_len, std::size_t in_len, int stride, int pad,
                                                       std::size_t j) {
  const long offset = static_cast<long>(j) - pad;
  long lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  long hi = (static_cast<long>(in_len) - 1 - offset) / stride + 1;
  if (static_cast<long>(in_len) - 1 - offset < 0) hi = 0;
  lo = std::min<long>(lo, static_cast<long>(out_len));
  hi = std::clamp<long>(hi, lo, static_cast<long>(out_len));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * P;
        const auto [lo, hi] = valid_range(g.wout, g.w, g.stride, g.pad, j);
        const long xoff = static_cast<long>(j) - g.pad;
        for (std::size_t oy = 0; oy < g.hout; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
          T* dst = row + oy * g.wout;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wout, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + (static_cast<long>(lo) + xoff), src + (static_cast<long>(hi) + xoff), dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[static_cast<long>(ox) * g.stride + xoff];
          }
          std::fill(dst + hi, dst + g.wout, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t P = g.p();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * P;
        const auto [lo, hi] = valid_range(g.wout, g.w, g.stride, g.pad, j);
        const long xoff = static_cast<long>(j) - g.pad;
        for (std::size_t oy = 0; oy < g.hout; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.wout;
          if (g.stride == 1) {
            T* d = dst + xoff;
            for (std::size_t ox = lo; ox < hi; ++ox) d[ox] += src[ox];
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<long>(ox) * g.stride + xoff] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Shared scaffolding for unary elementwise ops. `grad_of(x, y)` returns dy/dx.
template <typename T, typename Fwd, typename Deriv>
BasicTensor<T> unary(const BasicTensor<T>& x, const char* op, Fwd fwd, Deriv grad_of) {
  std::vector<T> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return detail::make_result<T>(x.shape(), std::move(out), op, {x.node_ptr()},
                                [grad_of](detail::Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    p.grad[i] += self.grad[i] * grad_of(p.value[i], self.value[i]);
                                  }
                                });
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, int padding) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(weight.shape(), 4, "conv2d", "weight");
  require_rank(bias.shape(), 1, "conv2d", "bias");
  if (stride < 1 || padding < 0) throw ValidationError("conv2d: stride must be >= 1 and padding >= 0");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.cin) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " does not match input channels of " +
                     shape_str(input.shape()));
  }
  if (bias.dim(0) != g.cout) throw ShapeError("conv2d: bias length does not match output channels");
  if (g.h + 2 * static_cast<std::size_t>(padding) < g.kh || g.w + 2 * static_cast<std::size_t>(padding) < g.kw) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(input.shape()));
  }
  g.hout = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wout = (g.w + 2 * padding - g.kw) / stride + 1;

  const std::size_t K = g.k(), P = g.p();
  const std::size_t in_stride = g.cin * g.h * g.w;
  std::vector<T> out(g.n * g.cout * P);
  std::vector<T> col(g.direct() ? 0 : K * P);
  ConstMatMap<T> wm(weight.data().data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(K));
  ConstVecMap<T> bv(bias.data().data(), static_cast<Eigen::Index>(g.cout));
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = input.data().data() + n * in_stride;
    const T* cp = xn;
    if (!g.direct()) {
      im2col(xn, g, col.data());
      cp = col.data();
    }
    ConstMatMap<T> cm(cp, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    MatMap<T> om(out.data() + n * g.cout * P, static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(P));
    om.noalias() = wm * cm;
    om.colwise() += bv;
  }

  Shape out_shape{g.n, g.cout, g.hout, g.wout};
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), "conv2d",
      {input.node_ptr(), weight.node_ptr(), bias.node_ptr()}, [g](detail::Node<T>& self) {
        auto& x = *self.parents[0];
        auto& w = *self.parents[1];
        auto& b = *self.parents[2];
        const std::size_t K = g.k(), P = g.p();
        const std::size_t in_stride = g.cin * g.h * g.w;
        ConstMatMap<T> wm(w.value.data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(K));
        std::vector<T> col(g.direct() ? 0 : K * P);
        std::vector<T> dcol(g.direct() ? 0 : K * P);
        for (std::size_t n = 0; n < g.n; ++n) {
          ConstMatMap<T> dy(self.grad.data() + n * g.cout * P, static_cast<Eigen::Index>(g.cout),
                            static_cast<Eigen::Index>(P));
          if (w.requires_grad) {
            const T* cp = x.value.data() + n * in_stride;
            if (!g.direct()) {
              im2col(cp, g, col.data());
              cp = col.data();
            }
            ConstMatMap<T> cm(cp, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
            MatMap<T> dw(w.grad.data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(K));
            dw.noalias() += dy * cm.transpose();
          }
          if (b.requires_grad) {
            for (std::size_t c = 0; c < g.cout; ++c) {
              const T* row = self.grad.data() + (n * g.cout + c) * P;
              T acc = 0;
              for (std::size_t i = 0; i < P; ++i) acc += row[i];
              b.grad[c] += acc;
            }
          }
          if (x.requires_grad) {
            T* dx = x.grad.data() + n * in_stride;
            if (g.direct()) {
              MatMap<T> dxm(dx, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
              dxm.noalias() += wm.transpose() * dy;
            } else {
              MatMap<T> dcm(dcol.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
              dcm.noalias() = wm.transpose() * dy;
              col2im_add(dcol.data(), g, dx);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> upsample_nearest2x(const BasicTensor<T>& input) {
  require_rank(input.shape(), 4, "upsample_nearest2x", "input");
  const std::size_t planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  std::vector<T> out(planes * 4 * h * w);
  auto in = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      const T* src = in.data() + (p * h + y / 2) * w;
      T* dst = out.data() + (p * 2 * h + y) * 2 * w;
      for (std::size_t x = 0; x < 2 * w; ++x) dst[x] = src[x / 2];
    }
  }
  return detail::make_result<T>(
      Shape{input.dim(0), input.dim(1), 2 * h, 2 * w}, std::move(out), "upsample_nearest2x",
      {input.node_ptr()}, [planes, h, w](detail::Node<T>& self) {
        auto& x = *self.parents[0];
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t y = 0; y < 2 * h; ++y) {
            const T* src = self.grad.data() + (p * 2 * h + y) * 2 * w;
            T* dst = x.grad.data() + (p * h + y / 2) * w;
            for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[xx / 2] += src[xx];
          }
        }
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

// Eigen peels a scalar head and tail off vectorized loops depending on the
// buffer address, and scalar exp differs from the packet exp in the last bit.
// Working in aligned arrays padded to whole packets keeps every element on
// the packet path, so results do not depend on heap layout or batch position.
template <typename T>
using PaddedArr = Eigen::Array<T, Eigen::Dynamic, 1>;

template <typename T>
PaddedArr<T> padded_copy(const T* src, Eigen::Index n) {
  constexpr Eigen::Index lanes = 64 / sizeof(T);
  PaddedArr<T> a = PaddedArr<T>::Zero((n + lanes - 1) / lanes * lanes);
  a.head(n) = Eigen::Map<const PaddedArr<T>>(src, n);
  return a;
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
  // exp(-x) may overflow to inf, which still yields the correct limit s = 0.
  const auto n = static_cast<Eigen::Index>(x.numel());
  const PaddedArr<T> xv = padded_copy(x.data().data(), n);
  const PaddedArr<T> s = xv / (T(1) + (-xv).exp());
  std::vector<T> out(s.data(), s.data() + n);
  return detail::make_result<T>(x.shape(), std::move(out), "silu", {x.node_ptr()}, [n](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    const PaddedArr<T> xin = padded_copy(p.value.data(), n);
    const PaddedArr<T> gy = padded_copy(self.grad.data(), n);
    const PaddedArr<T> sig = T(1) / (T(1) + (-xin).exp());
    const PaddedArr<T> gx = gy * sig * (T(1) + xin * (T(1) - sig));
    for (Eigen::Index i = 0; i < n; ++i) p.grad[static_cast<std::size_t>(i)] += gx[i];
  });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return unary(
      x, "sigmoid", [](T v) { return stable_sigmoid(v); }, [](T, T out) { return out * (T(1) - out); });
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool", "input");
  const std::size_t planes = x.dim(0) * x.dim(1), area = x.dim(2) * x.dim(3);
  std::vector<T> out(planes);
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < area; ++i) acc += in[p * area + i];
    out[p] = acc / static_cast<T>(area);
  }
  return detail::make_result<T>(Shape{x.dim(0), x.dim(1)}, std::move(out), "global_avg_pool", {x.node_ptr()},
                                [planes, area](detail::Node<T>& self) {
                                  auto& src = *self.parents[0];
                                  for (std::size_t p = 0; p < planes; ++p) {
                                    const T g = self.grad[p] / static_cast<T>(area);
                                    for (std::size_t i = 0; i < area; ++i) src.grad[p * area + i] += g;
                                  }
                                });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_rank(x.shape(), 2, "linear", "input");
  require_rank(weight.shape(), 2, "linear", "weight");
  require_rank(bias.shape(), 1, "linear", "bias");
  const std::size_t n = x.dim(0), cin = x.dim(1), cout = weight.dim(0);
  if (weight.dim(1) != cin || bias.dim(0) != cout) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " / bias " + shape_str(bias.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  const auto N = static_cast<Eigen::Index>(n), CI = static_cast<Eigen::Index>(cin),
             CO = static_cast<Eigen::Index>(cout);
  std::vector<T> out(n * cout);
  // Plain loops keep each row's result independent of the batch size.
  {
    const T* xs = x.data().data();
    const T* ws = weight.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < cout; ++o) {
        T acc = bias.data()[o];
        for (std::size_t k = 0; k < cin; ++k) acc += xs[i * cin + k] * ws[o * cin + k];
        out[i * cout + o] = acc;
      }
    }
  }
  return detail::make_result<T>(Shape{n, cout}, std::move(out), "linear",
                                {x.node_ptr(), weight.node_ptr(), bias.node_ptr()},
                                [N, CI, CO](detail::Node<T>& self) {
                                  auto& xs = *self.parents[0];
                                  auto& ws = *self.parents[1];
                                  auto& bs = *self.parents[2];
                                  ConstMatMap<T> dy(self.grad.data(), N, CO);
                                  if (xs.requires_grad) {
                                    MatMap<T> dx(xs.grad.data(), N, CI);
                                    dx.noalias() += dy * ConstMatMap<T>(ws.value.data(), CO, CI);
                                  }
                                  if (ws.requires_grad) {
                                    MatMap<T> dw(ws.grad.data(), CO, CI);
                                    dw.noalias() += dy.transpose() * ConstMatMap<T>(xs.value.data(), N, CI);
                                  }
                                  if (bs.requires_grad) {
                                    for (Eigen::Index c = 0; c < CO; ++c) {
                                      T acc = 0;
                                      for (Eigen::Index i = 0; i < N; ++i) acc += dy(i, c);
                                      bs.grad[static_cast<std::size_t>(c)] += acc;
                                    }
                                  }
                                });
}

template <typename T>
BasicTensor<T> channel_affine(const BasicTensor<T>& x, std::span<const T> shift, std::span<const T> scale) {
  require_rank(x.shape(), 4, "channel_affine", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  if (shift.size() != c || scale.size() != c) {
    throw ShapeError("channel_affine: expected " + std::to_string(c) + " per-channel constants");
  }
  std::vector<T> sc(scale.begin(), scale.end());
  std::vector<T> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < n * c; ++i) {
    const std::size_t ch = i % c;
    for (std::size_t k = 0; k < area; ++k) out[i * area + k] = (in[i * area + k] - shift[ch]) * scale[ch];
  }
  return detail::make_result<T>(x.shape(), std::move(out), "channel_affine", {x.node_ptr()},
                                [sc, c, area](detail::Node<T>& self) {
                                  auto& src = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                    src.grad[i] += self.grad[i] * sc[(i / area) % c];
                                  }
                                });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {x.node_ptr()},
                                [](detail::Node<T>& self) {
                                  auto& src = *self.parents[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) src.grad[i] += self.grad[i];
                                });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return detail::make_result<T>(Shape{}, std::vector<T>{acc}, "sum", {x.node_ptr()}, [](detail::Node<T>& self) {
    auto& src = *self.parents[0];
    for (auto& g : src.grad) g += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> labels) {
  if (logits.numel() != labels.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  }
  if (labels.empty()) throw ValidationError("bce_with_logits: empty batch");
  std::vector<T> y(labels.begin(), labels.end());
  for (T v : y) {
    if (v != T(0) && v != T(1)) throw ValidationError("bce_with_logits: labels must be 0 or 1");
  }
  const auto z = logits.data();
  T acc = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    acc += std::max(z[i], T(0)) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const T inv_n = T(1) / static_cast<T>(y.size());
  return detail::make_result<T>(Shape{}, std::vector<T>{acc * inv_n}, "bce_with_logits", {logits.node_ptr()},
                                [y = std::move(y), inv_n](detail::Node<T>& self) {
                                  auto& src = *self.parents[0];
                                  const T g = self.grad[0] * inv_n;
                                  for (std::size_t i = 0; i < y.size(); ++i) {
                                    src.grad[i] += g * (stable_sigmoid(src.value[i]) - y[i]);
                                  }
                                });
}

template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse: shape " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  if (pred.numel() == 0) throw ValidationError("mse: empty tensors");
  auto p = pred.data();
  auto t = target.data();
  T acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T d = p[i] - t[i];
    acc += d * d;
  }
  const T inv_n = T(1) / static_cast<T>(p.size());
  return detail::make_result<T>(Shape{}, std::vector<T>{acc * inv_n}, "mse", {pred.node_ptr(), target.node_ptr()},
                                [inv_n](detail::Node<T>& self) {
                                  auto& a = *self.parents[0];
                                  auto& b = *self.parents[1];
                                  const T g = T(2) * self.grad[0] * inv_n;
                                  for (std::size_t i = 0; i < a.value.size(); ++i) {
                                    const T d = g * (a.value[i] - b.value[i]);
                                    if (a.requires_grad) a.grad[i] += d;
                                    if (b.requires_grad) b.grad[i] -= d;
                                  }
                                });
}

#define AEFORGE_INSTANTIATE_OPS(T)                                                                        \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, int); \
  template BasicTensor<T> upsample_nearest2x(const BasicTensor<T>&);                                      \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> silu(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                         \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> channel_affine(const BasicTensor<T>&, std::span<const T>, std::span<const T>);  \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                          \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> bce_with_logits(const BasicTensor<T>&, std::span<const T>);                     \
  template BasicTensor<T> mse(const BasicTensor<T>&, const BasicTensor<T>&);

AEFORGE_INSTANTIATE_OPS(float)
AEFORGE_INSTANTIATE_OPS(double)

#undef AEFORGE_INSTANTIATE_OPS

}  // namespace aeforge
