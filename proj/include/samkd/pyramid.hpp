#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "samkd/error.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

/// Half-open interval [begin, end) of pixel indices along one axis.
struct Span {
  int begin = 0;
  int end = 0;
  int length() const noexcept { return end - begin; }
  bool operator==(const Span&) const = default;
};

/// One cell of one pyramid level. Cells are numbered row-major within a level.
struct Region {
  int level = 0;
  int cell_index = 0;
  Span rows;
  Span cols;

  int height() const noexcept { return rows.length(); }
  int width() const noexcept { return cols.length(); }
  int pixels() const noexcept { return height() * width(); }
  bool operator==(const Region&) const = default;
};

struct PyramidLevel {
  int grid_size = 1;
  std::vector<Region> regions;
  bool operator==(const PyramidLevel&) const = default;
};

struct PyramidPartition {
  int height = 0;
  int width = 0;
  std::vector<PyramidLevel> levels;

  std::size_t region_count() const {
    std::size_t n = 0;
    for (const auto& l : levels) n += l.regions.size();
    return n;
  }

  template <typename F>
  void for_each_region(F&& f) const {
    for (const auto& level : levels)
      for (const auto& region : level.regions) f(region);
  }

  bool operator==(const PyramidPartition&) const = default;
};

inline const std::vector<int>& default_grid_sizes() {
  static const std::vector<int> sizes{1, 2, 4};
  return sizes;
}

namespace detail {

// Splits [0, extent) into `cells` runs of extent / cells pixels; the last run
// absorbs the remainder.
inline std::vector<Span> split_axis(int extent, int cells) {
  std::vector<Span> spans(cells);
  const int step = extent / cells;
  for (int i = 0; i < cells; ++i) {
    spans[i].begin = i * step;
    spans[i].end = (i + 1 == cells) ? extent : (i + 1) * step;
  }
  return spans;
}

}  // namespace detail

inline PyramidPartition partition(int height, int width,
                                  const std::vector<int>& grid_sizes = default_grid_sizes()) {
  if (grid_sizes.empty())
    fail(ErrorKind::InvalidDimension, "partition: empty grid-size list");
  PyramidPartition out;
  out.height = height;
  out.width = width;
  int level_index = 0;
  for (int g : grid_sizes) {
    if (g <= 0)
      fail(ErrorKind::InvalidDimension,
           "partition: grid size must be positive, got " + std::to_string(g));
    if (height < g || width < g)
      fail(ErrorKind::InvalidDimension,
           "partition: " + std::to_string(height) + "x" + std::to_string(width) +
               " map is smaller than grid size " + std::to_string(g));
    PyramidLevel level;
    level.grid_size = g;
    const auto row_spans = detail::split_axis(height, g);
    const auto col_spans = detail::split_axis(width, g);
    for (int r = 0; r < g; ++r)
      for (int c = 0; c < g; ++c)
        level.regions.push_back(Region{level_index, r * g + c, row_spans[r], col_spans[c]});
    out.levels.push_back(std::move(level));
    ++level_index;
  }
  return out;
}

template <typename T>
void check_region(const Tensor<T>& map, const Region& region) {
  if (region.rows.begin < 0 || region.cols.begin < 0 || region.rows.length() <= 0 ||
      region.cols.length() <= 0 || region.rows.end > map.height() ||
      region.cols.end > map.width())
    fail(ErrorKind::InvalidRegion,
         "region [" + std::to_string(region.rows.begin) + "," +
             std::to_string(region.rows.end) + ")x[" + std::to_string(region.cols.begin) +
             "," + std::to_string(region.cols.end) + ") outside " + map.shape_string() +
             " map");
}

/// Copies the H_R x W_R x C slab covered by `region`.
template <typename T>
Tensor<T> extract(const Tensor<T>& map, const Region& region) {
  check_region(map, region);
  Tensor<T> out(region.height(), region.width(), map.channels());
  const int c = map.channels();
  for (int h = 0; h < region.height(); ++h)
    for (int w = 0; w < region.width(); ++w) {
      const T* src = map.pixel(region.rows.begin + h, region.cols.begin + w);
      std::copy(src, src + c, out.pixel(h, w));
    }
  return out;
}

/// Writes `slab` into `map` at `region` (inverse of extract).
template <typename T>
void insert(Tensor<T>& map, const Region& region, const Tensor<T>& slab) {
  check_region(map, region);
  if (slab.height() != region.height() || slab.width() != region.width() ||
      slab.channels() != map.channels())
    fail(ErrorKind::InvalidShape, "insert: slab " + slab.shape_string() +
                                      " does not fit region of " + map.shape_string());
  const int c = map.channels();
  for (int h = 0; h < region.height(); ++h)
    for (int w = 0; w < region.width(); ++w) {
      const T* src = slab.pixel(h, w);
      std::copy(src, src + c, map.pixel(region.rows.begin + h, region.cols.begin + w));
    }
}

/// Adds `slab` into `map` at `region`; used to route region gradients back.
template <typename T>
void accumulate(Tensor<T>& map, const Region& region, const Tensor<T>& slab) {
  check_region(map, region);
  if (slab.height() != region.height() || slab.width() != region.width() ||
      slab.channels() != map.channels())
    fail(ErrorKind::InvalidShape, "accumulate: slab " + slab.shape_string() +
                                      " does not fit region of " + map.shape_string());
  const int c = map.channels();
  for (int h = 0; h < region.height(); ++h)
    for (int w = 0; w < region.width(); ++w) {
      const T* src = slab.pixel(h, w);
      T* dst = map.pixel(region.rows.begin + h, region.cols.begin + w);
      for (int k = 0; k < c; ++k) dst[k] += src[k];
    }
}

}  // namespace samkd
