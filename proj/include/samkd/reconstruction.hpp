#pragma once

#include <functional>
#include <random>
#include <string>

#include "samkd/error.hpp"
#include "samkd/nn.hpp"
#include "samkd/pyramid.hpp"
#include "samkd/tensor.hpp"

namespace samkd {

/// Convolutional reconstruction block: x + conv_b(relu(conv_a(x))), both 3x3
/// and channel preserving. conv_b starts at zero so the block starts as identity.
template <typename T>
class SpatialReconBlock {
 public:
  struct Cache {
    Tensor<T> input;
    Tensor<T> hidden;
  };

  SpatialReconBlock() = default;
  SpatialReconBlock(const std::string& name, int channels)
      : conv_a_(name + ".conv_a", channels, channels, 3),
        conv_b_(name + ".conv_b", channels, channels, 3) {}

  void init(std::mt19937_64& rng) {
    conv_a_.init_he(rng);
    conv_b_.init_zero();
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    Tensor<T> hidden = relu(conv_a_.forward(x));
    Tensor<T> y = conv_b_.forward(hidden);
    y += x;
    if (cache) *cache = Cache{x, std::move(hidden)};
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy) {
    Tensor<T> dh = relu_backward(cache.hidden, conv_b_.backward(cache.hidden, dy));
    Tensor<T> dx = conv_a_.backward(cache.input, dh);
    dx += dy;
    return dx;
  }

  ParamList<T> params() {
    ParamList<T> p = conv_a_.params();
    for (auto* q : conv_b_.params()) p.push_back(q);
    return p;
  }

 private:
  Conv2d<T> conv_a_;
  Conv2d<T> conv_b_;
};

/// Per-pixel perceptron block: x + W2 relu(W1 x + b1) + b2 with a 2x hidden
/// expansion. W2 starts at zero.
template <typename T>
class ChannelReconBlock {
 public:
  struct Cache {
    Tensor<T> input;
    Tensor<T> hidden;
  };

  ChannelReconBlock() = default;
  ChannelReconBlock(const std::string& name, int channels)
      : expand_(name + ".expand", channels, 2 * channels, 1),
        contract_(name + ".contract", 2 * channels, channels, 1) {}

  void init(std::mt19937_64& rng) {
    expand_.init_he(rng);
    contract_.init_zero();
  }

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    Tensor<T> hidden = relu(expand_.forward(x));
    Tensor<T> y = contract_.forward(hidden);
    y += x;
    if (cache) *cache = Cache{x, std::move(hidden)};
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy) {
    Tensor<T> dh = relu_backward(cache.hidden, contract_.backward(cache.hidden, dy));
    Tensor<T> dx = expand_.backward(cache.input, dh);
    dx += dy;
    return dx;
  }

  ParamList<T> params() {
    ParamList<T> p = expand_.params();
    for (auto* q : contract_.params()) p.push_back(q);
    return p;
  }

 private:
  Conv2d<T> expand_;
  Conv2d<T> contract_;
};

/// The pair of reconstruction blocks used at one pyramid level.
template <typename T>
struct ReconBlocks {
  SpatialReconBlock<T> theta_s;
  ChannelReconBlock<T> theta_c;

  ReconBlocks() = default;
  ReconBlocks(const std::string& name, int channels)
      : theta_s(name + ".theta_s", channels), theta_c(name + ".theta_c", channels) {}

  /// Blocks whose residual branches are zero, i.e. exact identities.
  static ReconBlocks identity(int channels) {
    std::mt19937_64 rng(0);
    ReconBlocks b("recon", channels);
    b.init(rng);
    return b;
  }

  void init(std::mt19937_64& rng) {
    theta_s.init(rng);
    theta_c.init(rng);
  }

  ParamList<T> params() {
    ParamList<T> p = theta_s.params();
    for (auto* q : theta_c.params()) p.push_back(q);
    return p;
  }
};

template <typename T>
struct ReconCache {
  typename SpatialReconBlock<T>::Cache spatial;
  typename ChannelReconBlock<T>::Cache channel;
};

namespace detail {
template <typename T>
void check_recon_args(const Tensor<T>& fs, const Tensor<T>& fc, T lambda, T mu) {
  fs.require_same_shape(fc, "reconstruct");
  if (lambda < T{0} || mu < T{0})
    fail(ErrorKind::InvalidHyperparameter, "reconstruct: weights must be non-negative");
}
}  // namespace detail

/// lambda * theta_s(F_s) + mu * theta_c(F_c).
template <typename T>
Tensor<T> reconstruct(const Tensor<T>& spatial_masked, const Tensor<T>& channel_masked,
                      T lambda, T mu, const ReconBlocks<T>& blocks,
                      ReconCache<T>* cache = nullptr) {
  detail::check_recon_args(spatial_masked, channel_masked, lambda, mu);
  Tensor<T> out = blocks.theta_s.forward(spatial_masked, cache ? &cache->spatial : nullptr);
  out *= lambda;
  Tensor<T> c = blocks.theta_c.forward(channel_masked, cache ? &cache->channel : nullptr);
  c *= mu;
  out += c;
  return out;
}

/// Returns (dL/dF_s, dL/dF_c) and accumulates block parameter gradients.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> reconstruct_backward(const ReconCache<T>& cache,
                                                     const Tensor<T>& d_out, T lambda, T mu,
                                                     ReconBlocks<T>& blocks) {
  Tensor<T> ds = blocks.theta_s.backward(cache.spatial, d_out * lambda);
  Tensor<T> dc = blocks.theta_c.backward(cache.channel, d_out * mu);
  return {std::move(ds), std::move(dc)};
}

/// Sum over every region of every level of ||teacher_region - recon(region)||^2.
/// `recon_fn` maps a region to the aligned reconstructed student slab.
template <typename T>
T feature_loss(const PyramidPartition& partition, const FeatureMap<T>& teacher_map,
               const std::function<Tensor<T>(const Region&)>& recon_fn) {
  if (partition.height != teacher_map.height() || partition.width != teacher_map.width())
    fail(ErrorKind::InvalidRegion, "feature_loss: partition is " +
                                       std::to_string(partition.height) + "x" +
                                       std::to_string(partition.width) + ", map is " +
                                       teacher_map.shape_string());
  T loss{0};
  partition.for_each_region([&](const Region& region) {
    const Tensor<T> target = extract(teacher_map, region);
    const Tensor<T> recon = recon_fn(region);
    target.require_same_shape(recon, "feature_loss");
    auto tv = target.values();
    auto rv = recon.values();
    for (std::size_t i = 0; i < tv.size(); ++i) {
      const T d = tv[i] - rv[i];
      loss += d * d;
    }
  });
  return loss;
}

}  // namespace samkd
