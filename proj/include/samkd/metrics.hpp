#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "samkd/dataset.hpp"
#include "samkd/detection.hpp"
#include "samkd/error.hpp"

namespace samkd {

/// Size bands by box area, mirroring the small/medium/large split of COCO
/// at toy scale (side <= 12.5 px, <= 20.5 px, larger).
inline constexpr double kSmallMaxArea = 12.5 * 12.5;
inline constexpr double kMediumMaxArea = 20.5 * 20.5;

enum class SizeBand { All, Small, Medium, Large };

inline bool in_band(double area, SizeBand band) {
  switch (band) {
    case SizeBand::All: return true;
    case SizeBand::Small: return area <= kSmallMaxArea;
    case SizeBand::Medium: return area > kSmallMaxArea && area <= kMediumMaxArea;
    case SizeBand::Large: return area > kMediumMaxArea;
  }
  return false;
}

struct MetricReport {
  double map50 = 0.0;  ///< mean over classes of AP at IoU 0.5
  double ap_small = 0.0;
  double ap_medium = 0.0;
  double ap_large = 0.0;
  double mean_recall = 0.0;  ///< mean over classes of recall at IoU 0.5
  bool operator==(const MetricReport&) const = default;
};

namespace detail {

struct ClassResult {
  double ap = 0.0;
  double recall = 0.0;
  bool has_gt = false;
};

inline double interpolated_ap(const std::vector<double>& precision,
                              const std::vector<double>& recall) {
  std::vector<double> p(precision.size() + 2, 0.0), r(recall.size() + 2, 0.0);
  std::copy(precision.begin(), precision.end(), p.begin() + 1);
  std::copy(recall.begin(), recall.end(), r.begin() + 1);
  r.back() = 1.0;
  for (std::size_t i = p.size() - 1; i > 0; --i) p[i - 1] = std::max(p[i - 1], p[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) ap += (r[i] - r[i - 1]) * p[i];
  return ap;
}

inline ClassResult evaluate_class(const std::vector<std::vector<Detection>>& dets,
                                  const std::vector<std::vector<Box>>& gts, int label,
                                  SizeBand band, double iou_threshold) {
  struct Entry {
    double score;
    std::size_t image;
    Box box;
  };
  std::vector<Entry> entries;
  int num_gt = 0;
  std::vector<std::vector<char>> gt_ignore(gts.size()), gt_used(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    gt_ignore[i].resize(gts[i].size());
    gt_used[i].resize(gts[i].size(), 0);
    for (std::size_t g = 0; g < gts[i].size(); ++g) {
      gt_ignore[i][g] = !in_band(gts[i][g].area(), band);
      if (gts[i][g].label == label && !gt_ignore[i][g]) ++num_gt;
    }
    for (const auto& d : dets[i])
      if (d.box.label == label) entries.push_back({d.score, i, d.box});
  }
  ClassResult res;
  res.has_gt = num_gt > 0;
  if (!res.has_gt) return res;
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.score > b.score; });

  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& e : entries) {
    const auto& img = gts[e.image];
    int best = -1;
    double best_iou = iou_threshold;
    bool best_ignored = true;
    for (std::size_t g = 0; g < img.size(); ++g) {
      if (img[g].label != label || gt_used[e.image][g]) continue;
      const double o = iou(img[g], e.box);
      if (o < iou_threshold) continue;
      const bool ig = gt_ignore[e.image][g];
      // Prefer in-band matches over ignored ones, then higher overlap.
      if (best < 0 || (best_ignored && !ig) || (ig == best_ignored && o > best_iou)) {
        best = static_cast<int>(g);
        best_iou = o;
        best_ignored = ig;
      }
    }
    if (best >= 0) {
      gt_used[e.image][best] = 1;
      if (best_ignored) continue;
      ++tp;
    } else {
      if (!in_band(e.box.area(), band)) continue;
      ++fp;
    }
    precision.push_back(double(tp) / double(tp + fp));
    recall.push_back(double(tp) / double(num_gt));
  }
  res.ap = interpolated_ap(precision, recall);
  res.recall = double(tp) / double(num_gt);
  return res;
}

inline double mean_over_classes(const std::vector<std::vector<Detection>>& dets,
                                const std::vector<std::vector<Box>>& gts, int num_classes,
                                SizeBand band, bool recall) {
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto r = evaluate_class(dets, gts, c, band, 0.5);
    if (!r.has_gt) continue;
    sum += recall ? r.recall : r.ap;
    ++n;
  }
  return n ? sum / n : 0.0;
}

}  // namespace detail

/// mAP at IoU 0.5 (all-point interpolated), per-size AP and mean recall.
inline MetricReport evaluate_detections(const std::vector<std::vector<Detection>>& dets,
                                        const std::vector<std::vector<Box>>& gts,
                                        int num_classes) {
  if (dets.size() != gts.size())
    fail(ErrorKind::InvalidShape, "evaluate: detection and ground-truth image counts differ");
  MetricReport r;
  r.map50 = detail::mean_over_classes(dets, gts, num_classes, SizeBand::All, false);
  r.ap_small = detail::mean_over_classes(dets, gts, num_classes, SizeBand::Small, false);
  r.ap_medium = detail::mean_over_classes(dets, gts, num_classes, SizeBand::Medium, false);
  r.ap_large = detail::mean_over_classes(dets, gts, num_classes, SizeBand::Large, false);
  r.mean_recall = detail::mean_over_classes(dets, gts, num_classes, SizeBand::All, true);
  return r;
}

template <typename T>
MetricReport evaluate(const ToyDetector<T>& model, const Dataset& dataset,
                      const DecodeParams& params = {}) {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Box>> gts;
  for (const auto& scene : dataset) {
    dets.push_back(decode(model.forward(to_tensor<T>(scene.image)), params));
    gts.push_back(scene.boxes);
  }
  return evaluate_detections(dets, gts, model.arch().num_classes);
}

}  // namespace samkd
