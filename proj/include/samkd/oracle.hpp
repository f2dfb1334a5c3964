#pragma once

// Slow scalar-loop reference implementations used to certify the kernels.
// Nothing here calls into attention/masking/logitdistill/sfd; the loops sum in
// a different order from the main code on purpose.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "samkd/config.hpp"
#include "samkd/error.hpp"
#include "samkd/pyramid.hpp"
#include "samkd/tensor.hpp"

namespace samkd::oracle {

inline constexpr double kForwardTolerance = 1e-8;
inline constexpr double kGradientTolerance = 1e-4;

struct OracleReport {
  std::string op_name;
  std::string instance;
  double max_abs_error = 0.0;
  double tolerance = kForwardTolerance;
  bool pass = false;
};

inline OracleReport make_report(std::string op, std::string instance, double err,
                                double tol = kForwardTolerance) {
  return {std::move(op), std::move(instance), err, tol, err <= tol};
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct BruteAttention {
  std::vector<std::vector<double>> spatial;  ///< [h][w]
  std::vector<double> channel;               ///< [c]
};

/// Both attention maps by direct summation. Refuses regions over 8x8x8.
inline BruteAttention brute_attention(const Tensor<double>& region, double tau) {
  if (region.height() > 8 || region.width() > 8 || region.channels() > 8)
    fail(ErrorKind::InvalidShape, "brute_attention: oracle accepts at most 8x8x8 regions");
  if (!(tau > 0)) fail(ErrorKind::InvalidHyperparameter, "brute_attention: tau must be positive");
  const int H = region.height(), W = region.width(), C = region.channels();
  BruteAttention out;
  out.spatial.assign(H, std::vector<double>(W, 0.0));
  out.channel.assign(C, 0.0);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w) {
      double sq = 0.0;
      for (int c = C - 1; c >= 0; --c) sq += region(h, w, c) * region(h, w, c);
      out.spatial[h][w] = logistic(sq / (tau * C));
    }
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int w = W - 1; w >= 0; --w)
      for (int h = H - 1; h >= 0; --h) s += region(h, w, c);
    out.channel[c] = logistic(s / (tau * H * W));
  }
  return out;
}

/// Relative (omega * mean) or absolute thresholding; 0 where attention >= cut.
inline std::vector<double> brute_threshold(const std::vector<double>& attn, double omega,
                                           bool relative) {
  double cut = omega;
  if (relative) {
    double s = 0.0;
    for (std::size_t i = attn.size(); i-- > 0;) s += attn[i];
    cut = omega * (s / attn.size());
  }
  std::vector<double> m(attn.size());
  for (std::size_t i = 0; i < attn.size(); ++i) m[i] = (attn[i] < cut) ? 1.0 : 0.0;
  return m;
}

/// Region-pooled logits for every region of the partition, found by testing
/// every pixel of the map for membership.
inline std::vector<std::vector<double>> brute_pool(const Tensor<double>& logit_map,
                                                   const PyramidPartition& part) {
  std::vector<std::vector<double>> out;
  part.for_each_region([&](const Region& r) {
    std::vector<double> acc(logit_map.channels(), 0.0);
    int n = 0;
    for (int h = 0; h < logit_map.height(); ++h)
      for (int w = 0; w < logit_map.width(); ++w) {
        if (h < r.rows.begin || h >= r.rows.end || w < r.cols.begin || w >= r.cols.end) continue;
        ++n;
        for (int k = 0; k < logit_map.channels(); ++k) acc[k] += logit_map(h, w, k);
      }
    for (auto& v : acc) v /= n;
    out.push_back(std::move(acc));
  });
  return out;
}

/// 1 - cos(u, v) with u, v the channel means of each region; 1 if either is zero.
inline double brute_diff_weight(const Tensor<double>& teacher_region,
                                const Tensor<double>& student_region) {
  const int C = teacher_region.channels();
  double dot = 0, nu = 0, nv = 0;
  for (int c = 0; c < C; ++c) {
    double u = 0, v = 0;
    for (int h = 0; h < teacher_region.height(); ++h)
      for (int w = 0; w < teacher_region.width(); ++w) {
        u += teacher_region(h, w, c);
        v += student_region(h, w, c);
      }
    u /= teacher_region.pixels();
    v /= student_region.pixels();
    dot += u * v;
    nu += u * u;
    nv += v * v;
  }
  if (nu == 0 || nv == 0) return 1.0;
  double d = 1.0 - dot / std::sqrt(nu * nv);
  return d < 0 ? 0 : (d > 2 ? 2 : d);
}

inline double brute_kl(const std::vector<double>& zt, const std::vector<double>& zs, double temp,
                       bool forward) {
  const std::size_t K = zt.size();
  std::vector<double> p(K), q(K);
  double sp = 0, sq = 0;
  for (std::size_t k = 0; k < K; ++k) {
    p[k] = std::exp(zt[k] / temp);
    q[k] = std::exp(zs[k] / temp);
    sp += p[k];
    sq += q[k];
  }
  double kl = 0;
  for (std::size_t k = 0; k < K; ++k) {
    p[k] /= sp;
    q[k] /= sq;
  }
  for (std::size_t k = 0; k < K; ++k)
    kl += forward ? p[k] * std::log(p[k] / q[k]) : q[k] * std::log(q[k] / p[k]);
  return kl;
}

/// Weighted region KL summed over the partition.
inline double brute_logit_loss(const PyramidPartition& part, const Tensor<double>& teacher_logits,
                               const Tensor<double>& student_logits,
                               const Tensor<double>& teacher_feats,
                               const Tensor<double>& student_feats, double temperature,
                               bool forward_kl, bool adaptive) {
  const auto zt = brute_pool(teacher_logits, part);
  const auto zs = brute_pool(student_logits, part);
  double loss = 0.0;
  std::size_t i = 0;
  part.for_each_region([&](const Region& r) {
    const double w =
        adaptive ? brute_diff_weight(extract(teacher_feats, r), extract(student_feats, r)) : 1.0;
    loss += w * brute_kl(zt[i], zs[i], temperature, forward_kl);
    ++i;
  });
  return loss;
}

/// Weights of one k x k convolution in [kh][kw][in][out] layout.
struct ConvWeights {
  int k = 1, in = 0, out = 0;
  std::vector<double> weight;
  std::vector<double> bias;
};

/// Same-padded stride-1 convolution by direct summation.
inline Tensor<double> brute_conv(const Tensor<double>& x, const ConvWeights& cw) {
  const int pad = cw.k / 2;
  Tensor<double> y(x.height(), x.width(), cw.out);
  for (int o = 0; o < cw.out; ++o)
    for (int h = 0; h < x.height(); ++h)
      for (int w = 0; w < x.width(); ++w) {
        double s = 0.0;
        for (int i = cw.in - 1; i >= 0; --i)
          for (int kh = 0; kh < cw.k; ++kh)
            for (int kw = 0; kw < cw.k; ++kw) {
              const int ih = h + kh - pad, iw = w + kw - pad;
              if (ih < 0 || iw < 0 || ih >= x.height() || iw >= x.width()) continue;
              s += x(ih, iw, i) * cw.weight[((kh * cw.k + kw) * cw.in + i) * cw.out + o];
            }
        y(h, w, o) = s + cw.bias[o];
      }
  return y;
}

/// Residual two-layer block: x + b(relu(a(x))).
inline Tensor<double> brute_residual(const Tensor<double>& x, const ConvWeights& a,
                                     const ConvWeights& b) {
  Tensor<double> hidden = brute_conv(x, a);
  for (auto& v : hidden.values()) v = v > 0 ? v : 0;
  Tensor<double> y = brute_conv(hidden, b);
  for (std::size_t i = 0; i < y.size(); ++i) y.values()[i] += x.values()[i];
  return y;
}

/// Weights of one FPN map's feature-distillation pipeline.
struct SfdWeights {
  ConvWeights align;
  /// Per grid size: theta_s (conv_a, conv_b) and theta_c (expand, contract).
  std::vector<std::pair<int, std::array<ConvWeights, 4>>> blocks;
};

/// Full masked-reconstruction loss for one FPN map, from scratch.
inline double brute_feature_loss(const Tensor<double>& teacher, const Tensor<double>& student,
                                 const SfdWeights& weights, const DistillConfig& cfg) {
  const Tensor<double> aligned = brute_conv(student, weights.align);
  const auto part = partition(teacher.height(), teacher.width(), cfg.grid_sizes);
  const bool relative = cfg.threshold_mode == ThresholdMode::Relative;
  double loss = 0.0;
  for (const auto& level : part.levels) {
    const std::array<ConvWeights, 4>* blk = nullptr;
    for (const auto& [g, b] : weights.blocks)
      if (g == level.grid_size) blk = &b;
    if (!blk) fail(ErrorKind::InvalidHyperparameter, "brute_feature_loss: missing blocks");
    for (const auto& r : level.regions) {
      const Tensor<double> t_reg = extract(teacher, r);
      const Tensor<double> a_reg = extract(aligned, r);
      const auto attn = brute_attention(t_reg, cfg.tau);
      std::vector<double> flat_s;
      for (const auto& row : attn.spatial) flat_s.insert(flat_s.end(), row.begin(), row.end());
      const auto ms = brute_threshold(flat_s, cfg.omega_s, relative);
      const auto mc = brute_threshold(attn.channel, cfg.omega_c, relative);
      Tensor<double> fs = a_reg, fc = a_reg;
      for (int h = 0; h < a_reg.height(); ++h)
        for (int w = 0; w < a_reg.width(); ++w)
          for (int c = 0; c < a_reg.channels(); ++c) {
            fs(h, w, c) *= ms[h * a_reg.width() + w];
            fc(h, w, c) *= mc[c];
          }
      const Tensor<double> rs = brute_residual(fs, (*blk)[0], (*blk)[1]);
      const Tensor<double> rc = brute_residual(fc, (*blk)[2], (*blk)[3]);
      for (int c = 0; c < t_reg.channels(); ++c)
        for (int w = 0; w < t_reg.width(); ++w)
          for (int h = 0; h < t_reg.height(); ++h) {
            const double d = t_reg(h, w, c) - (cfg.lambda * rs(h, w, c) + cfg.mu * rc(h, w, c));
            loss += d * d;
          }
    }
  }
  return loss;
}

struct FiniteDiffResult {
  std::vector<double> gradient;
  std::vector<std::size_t> skipped;  ///< coordinates where the loss was non-finite
};

/// Central differences of `loss` with respect to every entry of `params`.
inline FiniteDiffResult finite_diff_grad(const std::function<double()>& loss,
                                         std::vector<double*> params, double epsilon) {
  if (params.size() > 5000)
    fail(ErrorKind::InvalidShape, "finite_diff_grad: at most 5000 parameters");
  if (epsilon < 1e-6 || epsilon > 1e-3)
    fail(ErrorKind::InvalidHyperparameter, "finite_diff_grad: epsilon must lie in [1e-6, 1e-3]");
  FiniteDiffResult r;
  r.gradient.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double v = *params[i];
    *params[i] = v + epsilon;
    const double up = loss();
    *params[i] = v - epsilon;
    const double down = loss();
    *params[i] = v;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      r.skipped.push_back(i);
      continue;
    }
    r.gradient[i] = (up - down) / (2.0 * epsilon);
  }
  return r;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                                 double floor = 1e-6) {
  if (a.size() != b.size()) fail(ErrorKind::InvalidShape, "max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace samkd::oracle
