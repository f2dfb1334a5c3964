#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "samkd/error.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

/// A learned parameter block with its gradient and SGD momentum buffer.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<T> velocity;

  Param() = default;
  Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, T{0});
    grad.assign(count, T{0});
    velocity.assign(count, T{0});
  }

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
void fill_normal(Param<T>& p, T stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  for (auto& v : p.value) v = static_cast<T>(dist(rng));
}

/// k x k convolution over HWC tensors with zero padding k/2.
/// Weight layout is [kh][kw][in][out].
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride = 1)
      : in_(in_channels),
        out_(out_channels),
        kernel_(kernel),
        stride_(stride),
        weight_(name + ".weight", {kernel, kernel, in_channels, out_channels}),
        bias_(name + ".bias", {out_channels}) {
    if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || kernel % 2 == 0 || stride <= 0)
      fail(ErrorKind::InvalidShape, "conv " + name + ": bad geometry");
  }

  void init_he(std::mt19937_64& rng) {
    fill_normal(weight_, static_cast<T>(std::sqrt(2.0 / (kernel_ * kernel_ * in_))), rng);
    std::fill(bias_.value.begin(), bias_.value.end(), T{0});
  }
  void init_zero() {
    std::fill(weight_.value.begin(), weight_.value.end(), T{0});
    std::fill(bias_.value.begin(), bias_.value.end(), T{0});
  }
  /// Identity mapping for 1x1 convolutions with equal channel counts.
  void init_identity() {
    if (kernel_ != 1 || in_ != out_)
      fail(ErrorKind::InvalidShape, "identity init requires a square 1x1 conv");
    init_zero();
    for (int c = 0; c < in_; ++c) weight_.value[static_cast<std::size_t>(c) * out_ + c] = T{1};
  }

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  int kernel() const noexcept { return kernel_; }
  int stride() const noexcept { return stride_; }
  Param<T>& weight() noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }
  const Param<T>& weight() const noexcept { return weight_; }
  const Param<T>& bias() const noexcept { return bias_; }
  ParamList<T> params() { return {&weight_, &bias_}; }

  int out_size(int n) const noexcept {
    const int pad = kernel_ / 2;
    return (n + 2 * pad - kernel_) / stride_ + 1;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.channels() != in_)
      fail(ErrorKind::InvalidShape, weight_.name + ": expected " + std::to_string(in_) +
                                        " input channels, got " + x.shape_string());
    const int pad = kernel_ / 2;
    const int oh_n = out_size(x.height());
    const int ow_n = out_size(x.width());
    Tensor<T> y(oh_n, ow_n, out_);
    const T* w = weight_.value.data();
    const T* b = bias_.value.data();
    for (int oh = 0; oh < oh_n; ++oh)
      for (int ow = 0; ow < ow_n; ++ow) {
        T* yp = y.pixel(oh, ow);
        for (int co = 0; co < out_; ++co) yp[co] = b[co];
        for (int kh = 0; kh < kernel_; ++kh) {
          const int ih = oh * stride_ - pad + kh;
          if (ih < 0 || ih >= x.height()) continue;
          for (int kw = 0; kw < kernel_; ++kw) {
            const int iw = ow * stride_ - pad + kw;
            if (iw < 0 || iw >= x.width()) continue;
            const T* xp = x.pixel(ih, iw);
            const T* wk = w + (static_cast<std::size_t>(kh) * kernel_ + kw) * in_ * out_;
            for (int ci = 0; ci < in_; ++ci) {
              const T xv = xp[ci];
              const T* wrow = wk + static_cast<std::size_t>(ci) * out_;
              for (int co = 0; co < out_; ++co) yp[co] += xv * wrow[co];
            }
          }
        }
      }
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    const int pad = kernel_ / 2;
    if (dy.height() != out_size(x.height()) || dy.width() != out_size(x.width()) ||
        dy.channels() != out_)
      fail(ErrorKind::InvalidShape, weight_.name + ": gradient shape mismatch");
    Tensor<T> dx = Tensor<T>::zeros_like(x);
    const T* w = weight_.value.data();
    T* gw = weight_.grad.data();
    T* gb = bias_.grad.data();
    for (int oh = 0; oh < dy.height(); ++oh)
      for (int ow = 0; ow < dy.width(); ++ow) {
        const T* dyp = dy.pixel(oh, ow);
        for (int co = 0; co < out_; ++co) gb[co] += dyp[co];
        for (int kh = 0; kh < kernel_; ++kh) {
          const int ih = oh * stride_ - pad + kh;
          if (ih < 0 || ih >= x.height()) continue;
          for (int kw = 0; kw < kernel_; ++kw) {
            const int iw = ow * stride_ - pad + kw;
            if (iw < 0 || iw >= x.width()) continue;
            const T* xp = x.pixel(ih, iw);
            T* dxp = dx.pixel(ih, iw);
            const std::size_t koff = (static_cast<std::size_t>(kh) * kernel_ + kw) * in_ * out_;
            for (int ci = 0; ci < in_; ++ci) {
              const T xv = xp[ci];
              const T* wrow = w + koff + static_cast<std::size_t>(ci) * out_;
              T* gwrow = gw + koff + static_cast<std::size_t>(ci) * out_;
              T acc{0};
              for (int co = 0; co < out_; ++co) {
                gwrow[co] += xv * dyp[co];
                acc += wrow[co] * dyp[co];
              }
              dxp[ci] += acc;
            }
          }
        }
      }
    return dx;
  }

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  Param<T> weight_;
  Param<T> bias_;
};

template <typename T>
Tensor<T> relu(Tensor<T> x) {
  for (auto& v : x.values()) v = v > T{0} ? v : T{0};
  return x;
}

/// Gradient through relu given its output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, Tensor<T> dy) {
  y.require_same_shape(dy, "relu_backward");
  auto yv = y.values();
  auto dv = dy.values();
  for (std::size_t i = 0; i < dv.size(); ++i)
    if (!(yv[i] > T{0})) dv[i] = T{0};
  return dy;
}

/// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  Tensor<T> y(x.height() * 2, x.width() * 2, x.channels());
  for (int h = 0; h < y.height(); ++h)
    for (int w = 0; w < y.width(); ++w) {
      const T* src = x.pixel(h / 2, w / 2);
      std::copy(src, src + x.channels(), y.pixel(h, w));
    }
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.height() / 2, dy.width() / 2, dy.channels());
  for (int h = 0; h < dy.height(); ++h)
    for (int w = 0; w < dy.width(); ++w) {
      const T* src = dy.pixel(h, w);
      T* dst = dx.pixel(h / 2, w / 2);
      for (int c = 0; c < dy.channels(); ++c) dst[c] += src[c];
    }
  return dx;
}

}  // namespace samkd
