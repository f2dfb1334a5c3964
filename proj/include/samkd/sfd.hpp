#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "samkd/attention.hpp"
#include "samkd/config.hpp"
#include "samkd/masking.hpp"
#include "samkd/pyramid.hpp"
#include "samkd/reconstruction.hpp"

namespace samkd {

/// Learned state of hierarchical feature-masking distillation: one alignment
/// per FPN map and one pair of reconstruction blocks per (FPN map, pyramid level).
template <typename T>
class FeatureDistiller {
 public:
  struct Result {
    T loss{0};
    std::vector<Tensor<T>> d_student;  ///< per FPN map; filled when gradients requested
  };

  FeatureDistiller() = default;
  FeatureDistiller(int fpn_maps, int student_channels, int teacher_channels,
                   const std::vector<int>& grid_sizes, std::uint64_t seed)
      : student_channels_(student_channels), teacher_channels_(teacher_channels) {
    std::mt19937_64 rng(seed);
    for (int m = 0; m < fpn_maps; ++m) {
      const std::string p = "distill.p" + std::to_string(m);
      aligns_.emplace_back(p + ".align", student_channels, teacher_channels, rng);
      std::map<int, ReconBlocks<T>> blocks;
      for (int g : grid_sizes) {
        ReconBlocks<T> b(p + ".g" + std::to_string(g), teacher_channels);
        b.init(rng);
        blocks.emplace(g, std::move(b));
      }
      blocks_.push_back(std::move(blocks));
    }
  }

  int student_channels() const noexcept { return student_channels_; }
  int teacher_channels() const noexcept { return teacher_channels_; }
  int fpn_maps() const noexcept { return static_cast<int>(aligns_.size()); }

  AlignTransform<T>& align(int m) { return aligns_.at(m); }
  const AlignTransform<T>& align(int m) const { return aligns_.at(m); }
  ReconBlocks<T>& blocks(int m, int grid) { return lookup(m, grid); }

  /// Student features of every FPN map mapped to the teacher channel count.
  std::vector<Tensor<T>> aligned(const std::vector<FeatureMap<T>>& student) const {
    std::vector<Tensor<T>> out;
    for (std::size_t m = 0; m < student.size(); ++m) out.push_back(aligns_.at(m)(student[m]));
    return out;
  }

  /// Hierarchical masked-reconstruction loss summed over FPN maps. When
  /// `grad_scale` is non-zero, parameter gradients of grad_scale * loss are
  /// accumulated and d(grad_scale * loss)/d(student) is returned.
  Result compute(const std::vector<FeatureMap<T>>& teacher,
                 const std::vector<FeatureMap<T>>& student, const DistillConfig& cfg,
                 T grad_scale = T{0}) {
    if (teacher.size() != student.size() || teacher.size() != aligns_.size())
      fail(ErrorKind::InvalidShape, "feature distillation: FPN map count mismatch");
    const bool want_grad = grad_scale != T{0};
    const T tau = static_cast<T>(cfg.tau);
    const T lambda = static_cast<T>(cfg.lambda);
    const T mu = static_cast<T>(cfg.mu);
    Result result;
    for (std::size_t m = 0; m < teacher.size(); ++m) {
      const auto& t_map = teacher[m];
      const auto& s_map = student[m];
      if (t_map.height() != s_map.height() || t_map.width() != s_map.width())
        fail(ErrorKind::InvalidShape, "feature distillation: teacher " + t_map.shape_string() +
                                          " vs student " + s_map.shape_string());
      if (t_map.channels() != teacher_channels_)
        fail(ErrorKind::InvalidShape, "feature distillation: teacher channel mismatch");
      const Tensor<T> aligned_map = aligns_[m](s_map);
      Tensor<T> d_aligned;
      if (want_grad) d_aligned = Tensor<T>::zeros_like(aligned_map);
      const auto part = partition(t_map.height(), t_map.width(), cfg.grid_sizes);

      for (const auto& level : part.levels) {
        ReconBlocks<T>& blocks = lookup(static_cast<int>(m), level.grid_size);
        for (const auto& region : level.regions) {
          const Tensor<T> t_reg = extract(t_map, region);
          const auto masks = make_masks(teacher_attention(t_reg, tau),
                                        static_cast<T>(cfg.omega_s),
                                        static_cast<T>(cfg.omega_c), cfg.threshold_mode);
          const auto masked = mask_aligned(extract(aligned_map, region), masks);
          ReconCache<T> cache;
          const Tensor<T> recon = reconstruct(masked.spatial, masked.channel, lambda, mu, blocks,
                                              want_grad ? &cache : nullptr);
          Tensor<T> diff = recon - t_reg;
          for (T v : diff.values()) result.loss += v * v;
          if (!want_grad) continue;
          diff *= T{2} * grad_scale;
          auto [ds, dc] = reconstruct_backward(cache, diff, lambda, mu, blocks);
          accumulate(d_aligned, region,
                     mask_aligned_backward(MaskedFeatures<T>{std::move(ds), std::move(dc)}, masks));
        }
      }
      if (want_grad) result.d_student.push_back(aligns_[m].backward(s_map, d_aligned));
    }
    return result;
  }

  ParamList<T> params() {
    ParamList<T> p;
    for (std::size_t m = 0; m < aligns_.size(); ++m) {
      for (auto* q : aligns_[m].params()) p.push_back(q);
      for (auto& [g, b] : blocks_[m])
        for (auto* q : b.params()) p.push_back(q);
    }
    return p;
  }

 private:
  ReconBlocks<T>& lookup(int m, int grid) {
    auto& per_map = blocks_.at(m);
    auto it = per_map.find(grid);
    if (it == per_map.end())
      fail(ErrorKind::InvalidHyperparameter,
           "no reconstruction blocks for grid size " + std::to_string(grid));
    return it->second;
  }

  int student_channels_ = 0;
  int teacher_channels_ = 0;
  std::vector<AlignTransform<T>> aligns_;
  std::vector<std::map<int, ReconBlocks<T>>> blocks_;
};

}  // namespace samkd
