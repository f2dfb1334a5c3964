#pragma once

#include <string>

#include "samkd/error.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

/// Teacher-derived attention over one region: spatial is H_R x W_R x 1,
/// channel is 1 x 1 x C. Entries lie strictly inside (0, 1).
template <typename T>
struct AttentionPair {
  Tensor<T> spatial;
  Tensor<T> channel;
};

namespace detail {
inline void check_tau(double tau) {
  if (!(tau > 0.0))
    fail(ErrorKind::InvalidHyperparameter, "attention: tau must be positive, got " +
                                               std::to_string(tau));
}
}  // namespace detail

/// sigmoid(||F(h,w)||^2 / (tau * C)) for every pixel of the region.
template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& region_features, T tau) {
  detail::check_tau(static_cast<double>(tau));
  const int c = region_features.channels();
  if (c < 1) fail(ErrorKind::InvalidShape, "spatial_attention: region has no channels");
  Tensor<T> out(region_features.height(), region_features.width(), 1);
  const T scale = T{1} / (tau * static_cast<T>(c));
  for (int h = 0; h < region_features.height(); ++h)
    for (int w = 0; w < region_features.width(); ++w) {
      const T* px = region_features.pixel(h, w);
      T sq{0};
      for (int k = 0; k < c; ++k) sq += px[k] * px[k];
      out(h, w, 0) = sigmoid(sq * scale);
    }
  return out;
}

/// sigmoid(mean_{h,w} F(h,w,c) / tau) for every channel.
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& region_features, T tau) {
  detail::check_tau(static_cast<double>(tau));
  const int c = region_features.channels();
  const int n = region_features.pixels();
  if (n < 1) fail(ErrorKind::InvalidShape, "channel_attention: empty region");
  Tensor<T> out(1, 1, c);
  for (int h = 0; h < region_features.height(); ++h)
    for (int w = 0; w < region_features.width(); ++w) {
      const T* px = region_features.pixel(h, w);
      for (int k = 0; k < c; ++k) out(0, 0, k) += px[k];
    }
  const T scale = T{1} / (tau * static_cast<T>(n));
  for (int k = 0; k < c; ++k) out(0, 0, k) = sigmoid(out(0, 0, k) * scale);
  return out;
}

/// Both attention maps of one teacher region. Only teacher features go in.
template <typename T>
AttentionPair<T> teacher_attention(const Tensor<T>& teacher_region, T tau) {
  return {spatial_attention(teacher_region, tau), channel_attention(teacher_region, tau)};
}

}  // namespace samkd
