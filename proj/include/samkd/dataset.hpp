#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "samkd/config.hpp"
#include "samkd/error.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

/// Axis-aligned box in pixel coordinates, x2/y2 exclusive.
struct Box {
  int label = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool operator==(const Box&) const = default;
};

inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

struct SyntheticScene {
  Tensor<double> image;  ///< H x W x 3, values in [0, 1]
  std::vector<Box> boxes;
  std::uint64_t seed = 0;
  bool operator==(const SyntheticScene&) const = default;
};

using Dataset = std::vector<SyntheticScene>;

/// Shapes drawn per class: square, disc, triangle, plus sign, diamond.
enum class ShapeKind { Square = 0, Disc, Triangle, Cross, Diamond };

namespace detail {

inline bool shape_covers(ShapeKind kind, double u, double v) {
  // u, v in [0, 1) are the normalized coordinates inside the bounding box.
  const double du = u - 0.5, dv = v - 0.5;
  switch (kind) {
    case ShapeKind::Square: return true;
    case ShapeKind::Disc: return du * du + dv * dv <= 0.25;
    case ShapeKind::Triangle: return std::abs(du) <= 0.5 * v;
    case ShapeKind::Cross: return std::abs(du) <= 0.17 || std::abs(dv) <= 0.17;
    case ShapeKind::Diamond: return std::abs(du) + std::abs(dv) <= 0.5;
  }
  return false;
}

inline double color_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h -= std::floor(h);
  const double x = h * 6.0;
  const int sector = static_cast<int>(x) % 6;
  const double f = x - std::floor(x);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace detail

/// Hue jitter as a fraction of one class's hue band.
inline constexpr double kHueJitter = 0.6;

/// Deterministically renders one scene from its own seed.
inline SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = spec.image_size;

  SyntheticScene scene;
  scene.seed = seed;
  scene.image = Tensor<double>(n, n, 3);

  std::array<double, 3> bg{};
  for (auto& c : bg) c = 0.15 + 0.5 * unit(rng);
  const double freq = 0.2 + 0.6 * unit(rng);
  const double phase = 6.283185307179586 * unit(rng);
  const double angle = 3.141592653589793 * unit(rng);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double stripe = 0.06 * std::sin(freq * (ca * x + sa * y) + phase);
      for (int c = 0; c < 3; ++c)
        scene.image(y, x, c) = std::clamp(bg[c] + stripe + 0.08 * (unit(rng) - 0.5), 0.0, 1.0);
    }

  std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<int> class_dist(0, spec.num_classes - 1);
  const int count = count_dist(rng);

  // Three size bands so small, medium and large objects all occur.
  const int lo = spec.min_object_size, hi = spec.max_object_size;
  const int band = std::max(1, (hi - lo + 1) / 3);

  for (int i = 0; i < count; ++i) {
    const int label = class_dist(rng);
    const int b = static_cast<int>(unit(rng) * 3.0);
    const int smin = std::min(hi, lo + b * band);
    const int smax = (b == 2) ? hi : std::min(hi, lo + (b + 1) * band - 1);
    const int size = std::uniform_int_distribution<int>(smin, smax)(rng);

    Box box;
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      const int x1 = std::uniform_int_distribution<int>(0, n - size)(rng);
      const int y1 = std::uniform_int_distribution<int>(0, n - size)(rng);
      box = Box{label, double(x1), double(y1), double(x1 + size), double(y1 + size)};
      placed = std::none_of(scene.boxes.begin(), scene.boxes.end(),
                            [&](const Box& o) { return iou(o, box) > 0.15; });
    }
    if (!placed) continue;

    // Hue is centred on the class with jitter into the neighbouring bands, so
    // colour is a strong but imperfect cue and shape helps disambiguate.
    std::array<double, 3> color{};
    do {
      const double hue = (label + 0.5) / spec.num_classes +
                         (unit(rng) - 0.5) * kHueJitter / spec.num_classes;
      color = detail::hsv_to_rgb(hue, 0.55 + 0.45 * unit(rng), 0.55 + 0.45 * unit(rng));
    } while (detail::color_distance(color, bg) < 0.35);

    const auto kind = static_cast<ShapeKind>(label);
    for (int y = int(box.y1); y < int(box.y2); ++y)
      for (int x = int(box.x1); x < int(box.x2); ++x) {
        const double u = (x - box.x1 + 0.5) / size;
        const double v = (y - box.y1 + 0.5) / size;
        if (!detail::shape_covers(kind, u, v)) continue;
        for (int c = 0; c < 3; ++c) scene.image(y, x, c) = color[c];
      }
    scene.boxes.push_back(box);
  }
  return scene;
}

/// n scenes whose per-scene seeds derive from `seed`; identical inputs give
/// bit-identical datasets.
inline Dataset generate_dataset(int n_scenes, std::uint64_t seed, const SceneSpec& spec = {}) {
  if (n_scenes <= 0) fail(ErrorKind::InvalidSpec, "generate_dataset: n_scenes must be positive");
  spec.validate();
  std::mt19937_64 seeder(seed);
  Dataset out;
  out.reserve(n_scenes);
  for (int i = 0; i < n_scenes; ++i) out.push_back(generate_scene(spec, seeder()));
  return out;
}

}  // namespace samkd
