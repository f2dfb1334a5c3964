#pragma once

#include <random>
#include <string>

#include "samkd/attention.hpp"
#include "samkd/error.hpp"
#include "samkd/nn.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

/// How masking thresholds are read. Relative: omega multiplies the region's
/// mean attention. Absolute: omega is compared with attention directly.
enum class ThresholdMode { Relative, Absolute };

/// Binary masks of one region. 0 marks an attentive entry that is erased and
/// must be reconstructed, 1 keeps the student value.
template <typename T>
struct MaskPair {
  Tensor<T> spatial;
  Tensor<T> channel;
};

template <typename T>
struct MaskedFeatures {
  Tensor<T> spatial;  ///< aligned features with the spatial mask applied
  Tensor<T> channel;  ///< aligned features with the channel mask applied
};

namespace detail {

template <typename T>
Tensor<T> threshold_mask(const Tensor<T>& attn, T omega, ThresholdMode mode) {
  T cut = omega;
  if (mode == ThresholdMode::Relative) {
    T sum{0};
    for (T v : attn.values()) sum += v;
    cut = omega * sum / static_cast<T>(attn.size());
  }
  Tensor<T> mask = Tensor<T>::zeros_like(attn);
  auto in = attn.values();
  auto out = mask.values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] >= cut ? T{0} : T{1};
  return mask;
}

}  // namespace detail

template <typename T>
MaskPair<T> make_masks(const AttentionPair<T>& attn, T omega_s, T omega_c,
                       ThresholdMode mode = ThresholdMode::Relative) {
  if (!(omega_s > T{0}) || !(omega_c > T{0}))
    fail(ErrorKind::InvalidHyperparameter, "make_masks: thresholds must be positive");
  if (attn.spatial.empty() || attn.channel.empty())
    fail(ErrorKind::InvalidShape, "make_masks: empty attention map");
  return {detail::threshold_mask(attn.spatial, omega_s, mode),
          detail::threshold_mask(attn.channel, omega_c, mode)};
}

/// Learned 1x1 channel mapping from student to teacher channel count,
/// shared by every region of one FPN map.
template <typename T>
class AlignTransform {
 public:
  AlignTransform() = default;
  AlignTransform(const std::string& name, int student_channels, int teacher_channels,
                 std::mt19937_64& rng)
      : conv_(name, student_channels, teacher_channels, 1) {
    if (student_channels == teacher_channels) {
      conv_.init_identity();
    } else {
      fill_normal(conv_.weight(), static_cast<T>(std::sqrt(1.0 / student_channels)), rng);
    }
  }

  static AlignTransform identity(int channels) {
    AlignTransform a;
    a.conv_ = Conv2d<T>("align", channels, channels, 1);
    a.conv_.init_identity();
    return a;
  }

  int student_channels() const noexcept { return conv_.in_channels(); }
  int teacher_channels() const noexcept { return conv_.out_channels(); }

  Tensor<T> operator()(const Tensor<T>& student) const { return conv_.forward(student); }
  Tensor<T> backward(const Tensor<T>& student, const Tensor<T>& d_aligned) {
    return conv_.backward(student, d_aligned);
  }

  Conv2d<T>& conv() noexcept { return conv_; }
  const Conv2d<T>& conv() const noexcept { return conv_; }
  ParamList<T> params() { return conv_.params(); }

 private:
  Conv2d<T> conv_;
};

/// Masks already-aligned region features.
template <typename T>
MaskedFeatures<T> mask_aligned(const Tensor<T>& aligned, const MaskPair<T>& masks) {
  if (masks.spatial.height() != aligned.height() || masks.spatial.width() != aligned.width() ||
      masks.spatial.channels() != 1)
    fail(ErrorKind::InvalidShape, "apply_masks: spatial mask " + masks.spatial.shape_string() +
                                      " vs features " + aligned.shape_string());
  if (masks.channel.channels() != aligned.channels() || masks.channel.pixels() != 1)
    fail(ErrorKind::InvalidShape, "apply_masks: channel mask " + masks.channel.shape_string() +
                                      " vs features " + aligned.shape_string());
  MaskedFeatures<T> out{aligned, aligned};
  const int c = aligned.channels();
  const T* cm = masks.channel.pixel(0, 0);
  for (int h = 0; h < aligned.height(); ++h)
    for (int w = 0; w < aligned.width(); ++w) {
      const T sm = masks.spatial(h, w, 0);
      T* sp = out.spatial.pixel(h, w);
      T* cp = out.channel.pixel(h, w);
      for (int k = 0; k < c; ++k) {
        sp[k] *= sm;
        cp[k] *= cm[k];
      }
    }
  return out;
}

/// Gradient of mask_aligned with respect to the aligned features.
template <typename T>
Tensor<T> mask_aligned_backward(const MaskedFeatures<T>& grads, const MaskPair<T>& masks) {
  Tensor<T> d = Tensor<T>::zeros_like(grads.spatial);
  const int c = d.channels();
  const T* cm = masks.channel.pixel(0, 0);
  for (int h = 0; h < d.height(); ++h)
    for (int w = 0; w < d.width(); ++w) {
      const T sm = masks.spatial(h, w, 0);
      const T* gs = grads.spatial.pixel(h, w);
      const T* gc = grads.channel.pixel(h, w);
      T* dp = d.pixel(h, w);
      for (int k = 0; k < c; ++k) dp[k] = gs[k] * sm + gc[k] * cm[k];
    }
  return d;
}

/// Aligns student region features to the teacher channel count and applies
/// both masks: returns (align(F) * M^s, align(F) * M^c).
template <typename T>
MaskedFeatures<T> apply_masks(const Tensor<T>& student_features, const MaskPair<T>& masks,
                              const AlignTransform<T>& align) {
  if (student_features.channels() != align.student_channels())
    fail(ErrorKind::InvalidShape, "apply_masks: student has " +
                                      std::to_string(student_features.channels()) +
                                      " channels, alignment expects " +
                                      std::to_string(align.student_channels()));
  return mask_aligned(align(student_features), masks);
}

}  // namespace samkd
