#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "samkd/dataset.hpp"
#include "samkd/detector.hpp"
#include "samkd/error.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

/// Objects whose longer side is at most this many pixels go to the stride-4
/// map; larger ones to the stride-8 map.
inline constexpr double kSmallLevelMaxSide = 14.0;
/// Box offsets are regressed in units of kBoxScale * stride.
inline constexpr double kBoxScale = 4.0;

/// Dense training targets for one FPN map.
struct LevelTargets {
  Tensor<double> cls;       ///< H x W x K one-hot, all zero for background
  Tensor<double> box;       ///< H x W x 4 normalized (l, t, r, b)
  Tensor<double> positive;  ///< H x W x 1 in {0, 1}
};

struct DetectionTargets {
  std::vector<LevelTargets> levels;
  int num_positive = 0;
};

/// Assigns each object to one FPN map by size and marks as positive the cells
/// whose centre lies inside the box and within 1.5 strides of its centre (the
/// cell containing the centre is always positive). Overlaps go to the smaller box.
inline DetectionTargets encode_targets(const std::vector<Box>& boxes, int image_size,
                                       int num_classes) {
  DetectionTargets t;
  for (int l = 0; l < kFpnLevels; ++l) {
    const int n = image_size / kFpnStrides[l];
    t.levels.push_back({Tensor<double>(n, n, num_classes), Tensor<double>(n, n, 4),
                        Tensor<double>(n, n, 1)});
  }
  for (int l = 0; l < kFpnLevels; ++l) {
    const double stride = kFpnStrides[l];
    auto& lt = t.levels[l];
    const int n = lt.cls.height();
    std::vector<double> owner_area(static_cast<std::size_t>(n) * n,
                                   std::numeric_limits<double>::infinity());
    for (const auto& b : boxes) {
      if (b.label < 0 || b.label >= num_classes)
        fail(ErrorKind::InvalidShape, "encode_targets: label out of range");
      const int level = std::max(b.width(), b.height()) <= kSmallLevelMaxSide ? 0 : 1;
      if (level != l) continue;
      const double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2);
      const int ci = std::clamp(int(cy / stride), 0, n - 1);
      const int cj = std::clamp(int(cx / stride), 0, n - 1);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double px = (j + 0.5) * stride, py = (i + 0.5) * stride;
          const bool centre_cell = (i == ci && j == cj);
          const bool inside = px > b.x1 && px < b.x2 && py > b.y1 && py < b.y2 &&
                              std::abs(px - cx) <= 1.5 * stride &&
                              std::abs(py - cy) <= 1.5 * stride;
          if (!centre_cell && !inside) continue;
          auto& owner = owner_area[static_cast<std::size_t>(i) * n + j];
          if (b.area() >= owner) continue;
          owner = b.area();
          for (int k = 0; k < num_classes; ++k) lt.cls(i, j, k) = k == b.label ? 1.0 : 0.0;
          const double scale = kBoxScale * stride;
          lt.box(i, j, 0) = (px - b.x1) / scale;
          lt.box(i, j, 1) = (py - b.y1) / scale;
          lt.box(i, j, 2) = (b.x2 - px) / scale;
          lt.box(i, j, 3) = (b.y2 - py) / scale;
          lt.positive(i, j, 0) = 1.0;
        }
    }
  }
  for (const auto& lt : t.levels)
    for (double v : lt.positive.values()) t.num_positive += v > 0.5 ? 1 : 0;
  return t;
}

/// Prediction maps that reproduce `targets` exactly: logits of +/- `margin`
/// and the target box offsets.
template <typename T>
DetectorOutput<T> encoded_prediction(const DetectionTargets& targets, T margin = T(30)) {
  DetectorOutput<T> out;
  for (const auto& lt : targets.levels) {
    Tensor<T> logits(lt.cls.height(), lt.cls.width(), lt.cls.channels());
    Tensor<T> box(lt.box.height(), lt.box.width(), 4);
    for (std::size_t i = 0; i < lt.cls.size(); ++i)
      logits.values()[i] = lt.cls.values()[i] > 0.5 ? margin : -margin;
    for (std::size_t i = 0; i < lt.box.size(); ++i)
      box.values()[i] = static_cast<T>(lt.box.values()[i]);
    out.logits.push_back(std::move(logits));
    out.boxes.push_back(std::move(box));
  }
  return out;
}

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
  double box_weight = 1.0;
};

template <typename T>
struct DetectionLoss {
  T total{0};
  T cls{0};
  T box{0};
  std::vector<Tensor<T>> d_logits;
  std::vector<Tensor<T>> d_boxes;
};

namespace detail {

inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Sigmoid focal loss of one logit and its derivative.
inline std::pair<double, double> focal_term(double x, double y, const FocalParams& fp) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  if (y > 0.5) {
    const double log_p = -softplus(-x);
    const double q = 1.0 - p;
    const double w = std::pow(q, fp.gamma);
    return {-fp.alpha * w * log_p, fp.alpha * w * (fp.gamma * p * log_p - q)};
  }
  const double log_q = -softplus(x);
  const double w = std::pow(p, fp.gamma);
  return {-(1.0 - fp.alpha) * w * log_q, (1.0 - fp.alpha) * w * (p - fp.gamma * (1.0 - p) * log_q)};
}

}  // namespace detail

/// Sigmoid focal classification over every cell plus L1 box regression on
/// positive cells, both normalized by max(1, #positives).
template <typename T>
DetectionLoss<T> detection_loss(const DetectorOutput<T>& pred, const DetectionTargets& targets,
                                const FocalParams& fp = {}) {
  if (pred.logits.size() != targets.levels.size() || pred.boxes.size() != targets.levels.size())
    fail(ErrorKind::InvalidShape, "detection_loss: level count mismatch");
  DetectionLoss<T> out;
  const double norm = 1.0 / std::max(1, targets.num_positive);
  double cls_sum = 0.0, box_sum = 0.0;
  for (std::size_t l = 0; l < targets.levels.size(); ++l) {
    const auto& lt = targets.levels[l];
    const auto& logits = pred.logits[l];
    const auto& boxes = pred.boxes[l];
    if (logits.height() != lt.cls.height() || logits.width() != lt.cls.width() ||
        logits.channels() != lt.cls.channels() || boxes.height() != lt.box.height() ||
        boxes.width() != lt.box.width() || boxes.channels() != 4)
      fail(ErrorKind::InvalidShape, "detection_loss: prediction layout " +
                                        logits.shape_string() + " vs target " +
                                        lt.cls.shape_string());
    Tensor<T> dl = Tensor<T>::zeros_like(logits);
    Tensor<T> db = Tensor<T>::zeros_like(boxes);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const auto [f, g] = detail::focal_term(logits.values()[i], lt.cls.values()[i], fp);
      cls_sum += f;
      dl.values()[i] = static_cast<T>(g * norm);
    }
    for (int h = 0; h < boxes.height(); ++h)
      for (int w = 0; w < boxes.width(); ++w) {
        if (lt.positive(h, w, 0) < 0.5) continue;
        for (int k = 0; k < 4; ++k) {
          const double d = static_cast<double>(boxes(h, w, k)) - lt.box(h, w, k);
          box_sum += std::abs(d);
          db(h, w, k) = static_cast<T>(fp.box_weight * norm * (d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0));
        }
      }
    out.d_logits.push_back(std::move(dl));
    out.d_boxes.push_back(std::move(db));
  }
  out.cls = static_cast<T>(cls_sum * norm);
  out.box = static_cast<T>(fp.box_weight * box_sum * norm);
  out.total = out.cls + out.box;
  return out;
}

struct Detection {
  Box box;
  double score = 0.0;
};

struct DecodeParams {
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  int max_detections = 30;
};

/// Converts dense head outputs to a scored, class-wise NMS-filtered box list.
template <typename T>
std::vector<Detection> decode(const DetectorOutput<T>& pred, const DecodeParams& params = {}) {
  std::vector<Detection> cands;
  for (std::size_t l = 0; l < pred.logits.size(); ++l) {
    const double stride = kFpnStrides[l];
    const double scale = kBoxScale * stride;
    const auto& logits = pred.logits[l];
    const auto& boxes = pred.boxes[l];
    for (int h = 0; h < logits.height(); ++h)
      for (int w = 0; w < logits.width(); ++w) {
        const double px = (w + 0.5) * stride, py = (h + 0.5) * stride;
        for (int k = 0; k < logits.channels(); ++k) {
          const double score = sigmoid(static_cast<double>(logits(h, w, k)));
          if (score < params.score_threshold) continue;
          Box b{k, px - std::max(0.0, double(boxes(h, w, 0))) * scale,
                py - std::max(0.0, double(boxes(h, w, 1))) * scale,
                px + std::max(0.0, double(boxes(h, w, 2))) * scale,
                py + std::max(0.0, double(boxes(h, w, 3))) * scale};
          cands.push_back({b, score});
        }
      }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& c : cands) {
    if (static_cast<int>(kept.size()) >= params.max_detections) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.box.label == c.box.label && iou(k.box, c.box) > params.nms_iou;
    });
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

}  // namespace samkd
