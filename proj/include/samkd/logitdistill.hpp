#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "samkd/error.hpp"
#include "samkd/pyramid.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

enum class KlDirection {
  Forward,  ///< KL(teacher || student)
  Reverse,  ///< KL(student || teacher)
};

/// Cosine distance between pooled teacher and student region features, in [0, 2].
/// `degenerate` is set when either side has zero norm and the neutral weight 1
/// was substituted.
struct RegionWeight {
  double value = 1.0;
  bool degenerate = false;
};

/// Arithmetic mean of the per-pixel logit vectors inside `region` (1 x 1 x K).
template <typename T>
Tensor<T> pool_logits(const LogitMap<T>& logit_map, const Region& region) {
  if (region.pixels() <= 0) fail(ErrorKind::InvalidRegion, "pool_logits: empty region");
  check_region(logit_map, region);
  const int k = logit_map.channels();
  Tensor<T> out(1, 1, k);
  T* acc = out.pixel(0, 0);
  for (int h = region.rows.begin; h < region.rows.end; ++h)
    for (int w = region.cols.begin; w < region.cols.end; ++w) {
      const T* px = logit_map.pixel(h, w);
      for (int c = 0; c < k; ++c) acc[c] += px[c];
    }
  const T inv = T{1} / static_cast<T>(region.pixels());
  for (int c = 0; c < k; ++c) acc[c] *= inv;
  return out;
}

namespace detail {

template <typename T>
std::vector<T> channel_means(const Tensor<T>& region) {
  std::vector<T> m(region.channels(), T{0});
  for (int h = 0; h < region.height(); ++h)
    for (int w = 0; w < region.width(); ++w) {
      const T* px = region.pixel(h, w);
      for (int c = 0; c < region.channels(); ++c) m[c] += px[c];
    }
  for (auto& v : m) v /= static_cast<T>(std::max(1, region.pixels()));
  return m;
}

template <typename T>
std::vector<T> log_softmax(const T* logits, int k, T temperature) {
  std::vector<T> out(k);
  T mx = logits[0] / temperature;
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i] / temperature);
  T sum{0};
  for (int i = 0; i < k; ++i) sum += std::exp(logits[i] / temperature - mx);
  const T lse = mx + std::log(sum);
  for (int i = 0; i < k; ++i) out[i] = logits[i] / temperature - lse;
  return out;
}

}  // namespace detail

template <typename T>
RegionWeight diff_weight(const Tensor<T>& teacher_region, const Tensor<T>& student_region) {
  if (teacher_region.channels() != student_region.channels())
    fail(ErrorKind::InvalidShape, "diff_weight: teacher has " +
                                      std::to_string(teacher_region.channels()) +
                                      " channels, student " +
                                      std::to_string(student_region.channels()));
  const auto u = detail::channel_means(teacher_region);
  const auto v = detail::channel_means(student_region);
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return RegionWeight{1.0, true};
  const double cosine = dot / (std::sqrt(nu) * std::sqrt(nv));
  return RegionWeight{std::clamp(1.0 - cosine, 0.0, 2.0), false};
}

/// KL divergence between softmax(teacher / T) and softmax(student / T) in the
/// requested direction. Writes dKL/d(student logits) into `grad` when given.
template <typename T>
T softmax_kl(const T* teacher, const T* student, int k, T temperature, KlDirection direction,
             T* grad = nullptr) {
  const auto lp = detail::log_softmax(teacher, k, temperature);
  const auto lq = detail::log_softmax(student, k, temperature);
  T kl{0};
  if (direction == KlDirection::Forward) {
    for (int i = 0; i < k; ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
    if (grad)
      for (int i = 0; i < k; ++i) grad[i] = (std::exp(lq[i]) - std::exp(lp[i])) / temperature;
  } else {
    for (int i = 0; i < k; ++i) kl += std::exp(lq[i]) * (lq[i] - lp[i]);
    if (grad)
      for (int i = 0; i < k; ++i)
        grad[i] = std::exp(lq[i]) * ((lq[i] - lp[i]) - kl) / temperature;
  }
  return std::max(kl, T{0});
}

struct LogitLossOptions {
  double temperature = 1.0;
  KlDirection direction = KlDirection::Forward;
  bool adaptive_weights = true;  ///< false: every region weighs 1
};

template <typename T>
struct LogitLossResult {
  T loss{0};
  int degenerate_weights = 0;       ///< regions that fell back to weight 1
  std::vector<RegionWeight> weights;  ///< one per region, partition order
  LogitMap<T> student_grad;         ///< dL/d(student logits); filled on request
};

/// Sum over every region of W * KL(softmax(Z_T / T) || softmax(Z_S / T)) where
/// Z are region-pooled logits and W is the cosine distance between the
/// region's teacher and aligned student features. W is a constant with
/// respect to differentiation.
template <typename T>
LogitLossResult<T> logit_loss(const PyramidPartition& partition,
                              const LogitMap<T>& teacher_logits,
                              const LogitMap<T>& student_logits,
                              const FeatureMap<T>& teacher_feats,
                              const FeatureMap<T>& student_feats,
                              const LogitLossOptions& options = {}, bool want_grad = false) {
  if (!(options.temperature > 0.0))
    fail(ErrorKind::InvalidHyperparameter, "logit_loss: temperature must be positive");
  teacher_logits.require_same_shape(student_logits, "logit_loss logits");
  if (teacher_feats.height() != teacher_logits.height() ||
      teacher_feats.width() != teacher_logits.width() ||
      student_feats.height() != teacher_logits.height() ||
      student_feats.width() != teacher_logits.width())
    fail(ErrorKind::InvalidShape, "logit_loss: feature and logit maps differ spatially");
  if (partition.height != teacher_logits.height() || partition.width != teacher_logits.width())
    fail(ErrorKind::InvalidRegion, "logit_loss: partition does not match the logit map");
  if (!all_finite(teacher_logits) || !all_finite(student_logits))
    fail(ErrorKind::NumericInput, "logit_loss: non-finite logits");

  const T temperature = static_cast<T>(options.temperature);
  const int k = teacher_logits.channels();
  LogitLossResult<T> result;
  if (want_grad) result.student_grad = LogitMap<T>::zeros_like(student_logits);
  std::vector<T> g(k);

  partition.for_each_region([&](const Region& region) {
    RegionWeight w{1.0, false};
    if (options.adaptive_weights) {
      w = diff_weight(extract(teacher_feats, region), extract(student_feats, region));
      if (w.degenerate) ++result.degenerate_weights;
    }
    result.weights.push_back(w);
    if (w.value == 0.0) return;
    const Tensor<T> zt = pool_logits(teacher_logits, region);
    const Tensor<T> zs = pool_logits(student_logits, region);
    const T weight = static_cast<T>(w.value);
    result.loss += weight * softmax_kl(zt.pixel(0, 0), zs.pixel(0, 0), k, temperature,
                                       options.direction, want_grad ? g.data() : nullptr);
    if (!want_grad) return;
    const T scale = weight / static_cast<T>(region.pixels());
    for (int h = region.rows.begin; h < region.rows.end; ++h)
      for (int ww = region.cols.begin; ww < region.cols.end; ++ww) {
        T* dp = result.student_grad.pixel(h, ww);
        for (int c = 0; c < k; ++c) dp[c] += scale * g[c];
      }
  });
  return result;
}

}  // namespace samkd
