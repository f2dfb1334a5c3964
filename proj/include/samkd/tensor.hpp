#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "samkd/error.hpp"

namespace samkd {

/// Dense rank-3 tensor in height x width x channels order (channels fastest).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(int height, int width, int channels, T fill = T{0})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0)
      fail(ErrorKind::InvalidShape, "negative tensor dimension");
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  static Tensor zeros_like(const Tensor& other) {
    return Tensor(other.height_, other.width_, other.channels_);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  int pixels() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool same_shape(const Tensor& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  T& operator()(int h, int w, int c) noexcept {
    return data_[(static_cast<std::size_t>(h) * width_ + w) * channels_ + c];
  }
  const T& operator()(int h, int w, int c) const noexcept {
    return data_[(static_cast<std::size_t>(h) * width_ + w) * channels_ + c];
  }

  T* pixel(int h, int w) noexcept {
    return data_.data() + (static_cast<std::size_t>(h) * width_ + w) * channels_;
  }
  const T* pixel(int h, int w) const noexcept {
    return data_.data() + (static_cast<std::size_t>(h) * width_ + w) * channels_;
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "tensor +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o, "tensor -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, T s) { return a *= s; }
  friend Tensor operator*(T s, Tensor a) { return a *= s; }

  bool operator==(const Tensor& o) const = default;

  void require_same_shape(const Tensor& o, const char* where) const {
    if (!same_shape(o))
      fail(ErrorKind::InvalidShape,
           std::string(where) + ": shape mismatch " + shape_string() + " vs " +
               o.shape_string());
  }

  std::string shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" +
           std::to_string(channels_);
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

template <typename T>
using FeatureMap = Tensor<T>;
template <typename T>
using LogitMap = Tensor<T>;

template <typename T>
T squared_norm(const Tensor<T>& t) {
  T s{0};
  for (T v : t.values()) s += v * v;
  return s;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_shape(b, "max_abs_diff");
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace samkd
