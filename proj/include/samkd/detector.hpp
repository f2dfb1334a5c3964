#pragma once

#include <cmath>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "samkd/error.hpp"
#include "samkd/nn.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

/// Channel widths of a toy dense detector. Two FPN outputs at strides 4 and 8.
struct DetectorArch {
  std::string name = "student";
  int stem = 8;
  int mid = 16;
  int deep = 16;
  int fpn = 8;
  int head = 16;
  int num_classes = 4;

  static DetectorArch teacher(int num_classes = 4) {
    return {"teacher", 16, 32, 32, 16, 32, num_classes};
  }
  static DetectorArch student(int num_classes = 4) {
    return {"student", 8, 16, 16, 8, 16, num_classes};
  }

  long long capacity() const {
    return 27LL * stem + 9LL * stem * mid + 9LL * mid * mid + 9LL * mid * deep +
           1LL * (mid + deep) * fpn + 18LL * fpn * fpn + 9LL * fpn * head +
           1LL * head * (num_classes + 4);
  }

  bool operator==(const DetectorArch&) const = default;
};

inline constexpr int kFpnLevels = 2;
inline constexpr int kFpnStrides[kFpnLevels] = {4, 8};

template <typename T>
struct DetectorOutput {
  std::vector<FeatureMap<T>> features;  ///< FPN outputs, stride 4 then 8
  std::vector<LogitMap<T>> logits;      ///< per-location class scores
  std::vector<Tensor<T>> boxes;         ///< per-location (l, t, r, b) offsets
};

template <typename T>
struct DetectorCache {
  Tensor<T> image, stem, mid, mid2, deep, lat3, lat4, merged3;
  std::vector<Tensor<T>> hidden;  ///< head hidden activation per FPN level
};

/// Backbone (three strided stages), a two-scale FPN neck and a head shared
/// across scales that predicts K class logits and four box offsets.
template <typename T>
class ToyDetector {
 public:
  ToyDetector() = default;
  ToyDetector(const DetectorArch& arch, std::uint64_t seed) : arch_(arch) {
    const std::string p = arch.name + ".";
    stem_ = Conv2d<T>(p + "backbone.stem", 3, arch.stem, 3, 2);
    mid_ = Conv2d<T>(p + "backbone.mid", arch.stem, arch.mid, 3, 2);
    mid2_ = Conv2d<T>(p + "backbone.mid2", arch.mid, arch.mid, 3, 1);
    deep_ = Conv2d<T>(p + "backbone.deep", arch.mid, arch.deep, 3, 2);
    lat3_ = Conv2d<T>(p + "fpn.lateral3", arch.mid, arch.fpn, 1);
    lat4_ = Conv2d<T>(p + "fpn.lateral4", arch.deep, arch.fpn, 1);
    out3_ = Conv2d<T>(p + "fpn.out3", arch.fpn, arch.fpn, 3);
    out4_ = Conv2d<T>(p + "fpn.out4", arch.fpn, arch.fpn, 3);
    head_ = Conv2d<T>(p + "head.conv", arch.fpn, arch.head, 3);
    cls_ = Conv2d<T>(p + "head.cls", arch.head, arch.num_classes, 1);
    box_ = Conv2d<T>(p + "head.box", arch.head, 4, 1);

    std::mt19937_64 rng(seed);
    for (auto* c : convs()) c->init_he(rng);
    fill_normal(cls_.weight(), T(0.01), rng);
    fill_normal(box_.weight(), T(0.01), rng);
    // Focal-loss prior: initial foreground probability 0.01.
    std::fill(cls_.bias().value.begin(), cls_.bias().value.end(),
              static_cast<T>(-std::log(99.0)));
    std::fill(box_.bias().value.begin(), box_.bias().value.end(), T(0.3));
  }

  const DetectorArch& arch() const noexcept { return arch_; }

  DetectorOutput<T> forward(const Tensor<T>& image, DetectorCache<T>* cache = nullptr) const {
    if (image.channels() != 3 || image.height() % 16 != 0 || image.width() % 16 != 0)
      fail(ErrorKind::InvalidShape, "detector expects an HxWx3 image with sides divisible by 16, got " +
                                        image.shape_string());
    DetectorCache<T> local;
    DetectorCache<T>& c = cache ? *cache : local;
    c.image = image;
    for (auto& v : c.image.values()) v = (v - T(0.5)) * T(4);
    c.stem = relu(stem_.forward(c.image));
    c.mid = relu(mid_.forward(c.stem));
    c.mid2 = relu(mid2_.forward(c.mid));
    c.deep = relu(deep_.forward(c.mid2));
    c.lat3 = lat3_.forward(c.mid2);
    c.lat4 = lat4_.forward(c.deep);
    c.merged3 = c.lat3 + upsample2x(c.lat4);

    DetectorOutput<T> out;
    out.features.push_back(out3_.forward(c.merged3));
    out.features.push_back(out4_.forward(c.lat4));
    c.hidden.clear();
    for (const auto& f : out.features) {
      Tensor<T> h = relu(head_.forward(f));
      out.logits.push_back(cls_.forward(h));
      out.boxes.push_back(box_.forward(h));
      c.hidden.push_back(std::move(h));
    }
    return out;
  }

  /// Accumulates parameter gradients. `d_features` carries extra gradients
  /// arriving directly at the FPN outputs (from feature distillation); empty
  /// tensors mean none.
  void backward(const DetectorCache<T>& c, const DetectorOutput<T>& out,
                const std::vector<Tensor<T>>& d_logits, const std::vector<Tensor<T>>& d_boxes,
                const std::vector<Tensor<T>>& d_features) {
    std::vector<Tensor<T>> d_fpn(kFpnLevels);
    for (int l = 0; l < kFpnLevels; ++l) {
      Tensor<T> dh = cls_.backward(c.hidden[l], d_logits[l]);
      dh += box_.backward(c.hidden[l], d_boxes[l]);
      dh = relu_backward(c.hidden[l], std::move(dh));
      d_fpn[l] = head_.backward(out.features[l], dh);
      if (l < static_cast<int>(d_features.size()) && !d_features[l].empty())
        d_fpn[l] += d_features[l];
    }
    Tensor<T> d_merged3 = out3_.backward(c.merged3, d_fpn[0]);
    Tensor<T> d_lat4 = out4_.backward(c.lat4, d_fpn[1]);
    d_lat4 += upsample2x_backward(d_merged3);
    Tensor<T> d_deep = relu_backward(c.deep, lat4_.backward(c.deep, d_lat4));
    Tensor<T> d_mid2 = lat3_.backward(c.mid2, d_merged3);
    d_mid2 += deep_.backward(c.mid2, d_deep);
    d_mid2 = relu_backward(c.mid2, std::move(d_mid2));
    Tensor<T> d_mid = relu_backward(c.mid, mid2_.backward(c.mid, d_mid2));
    Tensor<T> d_stem = relu_backward(c.stem, mid_.backward(c.stem, d_mid));
    stem_.backward(c.image, d_stem);
  }

  ParamList<T> params() {
    ParamList<T> p;
    for (auto* c : convs())
      for (auto* q : c->params()) p.push_back(q);
    return p;
  }

 private:
  std::vector<Conv2d<T>*> convs() {
    return {&stem_, &mid_, &mid2_, &deep_, &lat3_, &lat4_, &out3_, &out4_, &head_, &cls_, &box_};
  }

  DetectorArch arch_;
  Conv2d<T> stem_, mid_, mid2_, deep_, lat3_, lat4_, out3_, out4_, head_, cls_, box_;
};

template <typename T>
Tensor<T> to_tensor(const Tensor<double>& image) {
  if constexpr (std::is_same_v<T, double>) {
    return image;
  } else {
    Tensor<T> out(image.height(), image.width(), image.channels());
    for (std::size_t i = 0; i < image.size(); ++i)
      out.values()[i] = static_cast<T>(image.values()[i]);
    return out;
  }
}

}  // namespace samkd
