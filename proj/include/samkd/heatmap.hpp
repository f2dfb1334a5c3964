#pragma once

// Binary PGM/PPM export of scenes and teacher attention maps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "samkd/attention.hpp"
#include "samkd/dataset.hpp"
#include "samkd/detector.hpp"
#include "samkd/error.hpp"
#include "samkd/pyramid.hpp"

namespace samkd {

/// 8-bit grayscale image, row-major.
struct GrayImage {
  int height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

/// Writes an H x W x 3 tensor with values in [0, 1] as a binary PPM.
inline void write_ppm(const std::string& path, const Tensor<double>& rgb) {
  if (rgb.channels() != 3) fail(ErrorKind::InvalidShape, "write_ppm: expected 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << "P6\n" << rgb.width() << " " << rgb.height() << "\n255\n";
  for (double v : rgb.values()) {
    const auto b = static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    out.put(static_cast<char>(b));
  }
}

/// Min-max normalises a single-channel map and upsamples it by `scale`
/// (nearest neighbour). A constant map renders mid-gray.
template <typename T>
GrayImage to_gray(const Tensor<T>& map, int scale = 1) {
  if (map.channels() != 1) fail(ErrorKind::InvalidShape, "to_gray: expected 1 channel");
  const auto vals = map.values();
  const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *lo_it, hi = *hi_it;
  GrayImage img{map.height() * scale, map.width() * scale, {}};
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = map(y / scale, x / scale, 0);
      const double n = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      img.pixels[static_cast<std::size_t>(y) * img.width + x] =
          static_cast<std::uint8_t>(n * 255.0 + 0.5);
    }
  return img;
}

/// Region-wise spatial attention for one pyramid level, stitched back into a
/// full-resolution single-channel map.
template <typename T>
Tensor<T> level_attention_map(const FeatureMap<T>& features, const PyramidLevel& level, T tau) {
  Tensor<T> out(features.height(), features.width(), 1);
  for (const auto& r : level.regions) insert(out, r, spatial_attention(extract(features, r), tau));
  return out;
}

/// Per-pixel L2 norm of a feature map.
template <typename T>
Tensor<T> feature_magnitude(const FeatureMap<T>& features) {
  Tensor<T> out(features.height(), features.width(), 1);
  for (int h = 0; h < features.height(); ++h)
    for (int w = 0; w < features.width(); ++w) {
      T s{0};
      for (int c = 0; c < features.channels(); ++c) s += features(h, w, c) * features(h, w, c);
      out(h, w, 0) = std::sqrt(s);
    }
  return out;
}

/// Writes <prefix>_input.ppm, one <prefix>_attn_g<G>.pgm per pyramid level
/// and <prefix>_magnitude.pgm, all from the finest FPN map. Returns the paths.
template <typename T>
std::vector<std::string> export_scene_heatmaps(const ToyDetector<T>& model,
                                               const SyntheticScene& scene,
                                               const std::vector<int>& grid_sizes, T tau,
                                               const std::string& prefix) {
  const auto out = model.forward(to_tensor<T>(scene.image));
  const auto& fmap = out.features.front();
  const int scale = scene.image.height() / fmap.height();
  std::vector<std::string> written;
  write_ppm(prefix + "_input.ppm", scene.image);
  written.push_back(prefix + "_input.ppm");
  const auto part = partition(fmap.height(), fmap.width(), grid_sizes);
  for (const auto& level : part.levels) {
    const std::string path = prefix + "_attn_g" + std::to_string(level.grid_size) + ".pgm";
    write_pgm(path, to_gray(level_attention_map(fmap, level, tau), scale));
    written.push_back(path);
  }
  write_pgm(prefix + "_magnitude.pgm", to_gray(feature_magnitude(fmap), scale));
  written.push_back(prefix + "_magnitude.pgm");
  return written;
}

}  // namespace samkd
