#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

#include "samkd/config.hpp"
#include "samkd/dataset.hpp"
#include "samkd/detection.hpp"
#include "samkd/detector.hpp"
#include "samkd/logitdistill.hpp"
#include "samkd/metrics.hpp"
#include "samkd/sfd.hpp"

namespace samkd {

template <typename T>
struct SamkdLoss {
  T total{0};
  T l_det{0};
  T l_feat{0};
  T l_logit{0};
};

/// Gradients of the combined objective with respect to the student outputs.
template <typename T>
struct StudentGrads {
  std::vector<Tensor<T>> d_logits;
  std::vector<Tensor<T>> d_boxes;
  std::vector<Tensor<T>> d_features;
};

/// L_det + alpha * L_feat + beta * L_logit. Disabled components are exactly
/// zero and are never evaluated. Teacher outputs are read only. When `grads`
/// is given, student-output gradients are written there and distiller
/// parameter gradients are accumulated.
template <typename T>
SamkdLoss<T> samkd_loss(const DetectorOutput<T>& teacher, const DetectorOutput<T>& student,
                        const DetectionTargets& targets, const DistillConfig& cfg,
                        FeatureDistiller<T>& distiller, StudentGrads<T>* grads = nullptr) {
  cfg.validate();
  SamkdLoss<T> out;
  auto det = detection_loss(student, targets);
  out.l_det = det.total;
  if (grads) {
    grads->d_logits = std::move(det.d_logits);
    grads->d_boxes = std::move(det.d_boxes);
    grads->d_features.assign(student.features.size(), Tensor<T>());
  }
  const T alpha = static_cast<T>(cfg.alpha);
  const T beta = static_cast<T>(cfg.beta);

  if (cfg.enable_sfd) {
    auto feat = distiller.compute(teacher.features, student.features, cfg,
                                  grads ? alpha : T{0});
    out.l_feat = feat.loss;
    if (grads && alpha != T{0}) grads->d_features = std::move(feat.d_student);
  }

  if (cfg.enable_sld) {
    if (teacher.logits.size() != student.logits.size())
      fail(ErrorKind::InvalidShape, "samkd_loss: teacher/student FPN layouts differ");
    const LogitLossOptions opts{cfg.logit_temperature, cfg.kl_direction,
                                cfg.adaptive_logit_weights};
    // Cosine weights compare teacher features with aligned student features.
    const auto aligned = distiller.aligned(student.features);
    for (std::size_t m = 0; m < student.logits.size(); ++m) {
      const auto part = partition(student.logits[m].height(), student.logits[m].width(),
                                  cfg.grid_sizes);
      auto r = logit_loss(part, teacher.logits[m], student.logits[m], teacher.features[m],
                          aligned[m], opts, grads != nullptr && beta != T{0});
      out.l_logit += r.loss;
      if (grads && beta != T{0}) {
        r.student_grad *= beta;
        grads->d_logits[m] += r.student_grad;
      }
    }
  }
  out.total = out.l_det + alpha * out.l_feat + beta * out.l_logit;
  return out;
}

/// SGD with momentum and L2 weight decay: v = m v + (g + wd w); w -= lr v.
template <typename T>
class Sgd {
 public:
  Sgd(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step(const ParamList<T>& params) const {
    const T lr = static_cast<T>(lr_), m = static_cast<T>(momentum_),
            wd = static_cast<T>(weight_decay_);
    for (auto* p : params)
      for (std::size_t i = 0; i < p->size(); ++i) {
        p->velocity[i] = m * p->velocity[i] + p->grad[i] + wd * p->value[i];
        p->value[i] -= lr * p->velocity[i];
      }
  }

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
};

template <typename T>
double grad_norm(const ParamList<T>& params) {
  double s = 0.0;
  for (auto* p : params)
    for (T g : p->grad) s += static_cast<double>(g) * g;
  return std::sqrt(s);
}

template <typename T>
void scale_grads(const ParamList<T>& params, T factor) {
  for (auto* p : params)
    for (auto& g : p->grad) g *= factor;
}

struct EpochRecord {
  int epoch = 0;
  double l_det = 0, l_feat = 0, l_logit = 0, total = 0;
  MetricReport metrics;
  bool operator==(const EpochRecord&) const = default;
};

using MetricLog = std::vector<EpochRecord>;

/// Learning rate for an epoch: constant, then x0.1 for the final quarter.
inline double scheduled_lr(double base, int epoch, int epochs) {
  const int drop_at = epochs - std::max(1, epochs / 4);
  return (epochs >= 4 && epoch >= drop_at) ? base * 0.1 : base;
}

/// Linear learning-rate warmup length, capped at one epoch.
inline constexpr std::size_t kWarmupSteps = 100;

struct TrainHooks {
  std::ostream* progress = nullptr;
  /// Called before throwing on divergence with a textual state dump.
  std::function<void(const std::string&)> on_divergence;
};

namespace detail {

/// Shared SGD loop. `step(index, grads_wanted)` runs forward + backward on
/// one training scene and returns its loss components.
template <typename T, typename StepFn, typename EvalFn>
MetricLog run_training(const ParamList<T>& params, std::size_t n_train, const TrainConfig& tc,
                       int epochs, StepFn&& step, EvalFn&& eval, const TrainHooks& hooks) {
  MetricLog log;
  Sgd<T> sgd(tc.learning_rate, tc.momentum, tc.weight_decay);
  std::mt19937_64 order_rng(tc.seed * 0x9E3779B97F4A7C15ULL + 17);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t steps_per_epoch = (n_train + tc.batch_size - 1) / tc.batch_size;
  const std::size_t warmup = std::min<std::size_t>(kWarmupSteps, steps_per_epoch);
  std::size_t global_step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double epoch_lr = scheduled_lr(tc.learning_rate, epoch, epochs);
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    for (std::size_t start = 0; start < n_train; start += tc.batch_size, ++global_step) {
      const std::size_t end = std::min(n_train, start + tc.batch_size);
      sgd.set_lr(global_step < warmup ? epoch_lr * double(global_step + 1) / double(warmup)
                                      : epoch_lr);
      zero_grads(params);
      for (std::size_t i = start; i < end; ++i) {
        const SamkdLoss<T> l = step(order[i]);
        if (!std::isfinite(static_cast<double>(l.total))) {
          std::ostringstream dump;
          dump << "non-finite loss at epoch " << epoch + 1 << ", scene " << order[i]
               << ": l_det=" << l.l_det << " l_feat=" << l.l_feat << " l_logit=" << l.l_logit
               << " lr=" << sgd.lr() << " grad_norm=" << grad_norm(params);
          if (hooks.on_divergence) hooks.on_divergence(dump.str());
          fail(ErrorKind::Divergence, dump.str());
        }
        rec.l_det += l.l_det;
        rec.l_feat += l.l_feat;
        rec.l_logit += l.l_logit;
        rec.total += l.total;
      }
      scale_grads(params, static_cast<T>(1.0 / double(end - start)));
      const double norm = grad_norm(params);
      if (tc.clip_norm > 0 && norm > tc.clip_norm)
        scale_grads(params, static_cast<T>(tc.clip_norm / norm));
      sgd.step(params);
    }
    const double inv = 1.0 / double(n_train);
    rec.l_det *= inv;
    rec.l_feat *= inv;
    rec.l_logit *= inv;
    rec.total *= inv;
    rec.metrics = eval();
    if (hooks.progress)
      *hooks.progress << "epoch " << rec.epoch << " total=" << rec.total
                      << " det=" << rec.l_det << " feat=" << rec.l_feat
                      << " logit=" << rec.l_logit << " mAP50=" << rec.metrics.map50 << "\n";
    log.push_back(rec);
  }
  return log;
}

}  // namespace detail

/// Plain detection training (teacher, or the undistilled student baseline).
template <typename T>
MetricLog train_detector(ToyDetector<T>& model, const Dataset& train, const Dataset& test,
                         const TrainConfig& tc, int epochs, const TrainHooks& hooks = {}) {
  if (train.empty()) fail(ErrorKind::InvalidSpec, "train: empty dataset");
  tc.validate();
  const int k = model.arch().num_classes;
  std::vector<DetectionTargets> targets;
  for (const auto& s : train) targets.push_back(encode_targets(s.boxes, s.image.height(), k));
  const auto params = model.params();
  auto step = [&](std::size_t i) {
    DetectorCache<T> cache;
    const auto out = model.forward(to_tensor<T>(train[i].image), &cache);
    auto det = detection_loss(out, targets[i]);
    model.backward(cache, out, det.d_logits, det.d_boxes, {});
    return SamkdLoss<T>{det.total, det.total, T{0}, T{0}};
  };
  auto eval = [&] { return evaluate(model, test); };
  return detail::run_training<T>(params, train.size(), tc, epochs, step, eval, hooks);
}

/// Trains `student` (and the distiller's alignment/reconstruction parameters)
/// against a frozen teacher with the combined objective.
template <typename T>
MetricLog distill(ToyDetector<T>& student, FeatureDistiller<T>& distiller,
                  const ToyDetector<T>& teacher, const Dataset& train, const Dataset& test,
                  const DistillConfig& cfg, const TrainConfig& tc, int epochs,
                  const TrainHooks& hooks = {}) {
  if (train.empty()) fail(ErrorKind::InvalidSpec, "distill: empty dataset");
  cfg.validate();
  tc.validate();
  if (teacher.arch().num_classes != student.arch().num_classes)
    fail(ErrorKind::Incompatible, "teacher and student class counts differ");
  if (teacher.arch().fpn != distiller.teacher_channels() ||
      student.arch().fpn != distiller.student_channels())
    fail(ErrorKind::Incompatible, "distiller channels do not match teacher/student FPN widths");

  const int k = student.arch().num_classes;
  std::vector<DetectionTargets> targets;
  std::vector<DetectorOutput<T>> teacher_out;
  for (const auto& s : train) {
    targets.push_back(encode_targets(s.boxes, s.image.height(), k));
    teacher_out.push_back(teacher.forward(to_tensor<T>(s.image)));
  }
  ParamList<T> params = student.params();
  for (auto* p : distiller.params()) params.push_back(p);

  auto step = [&](std::size_t i) {
    DetectorCache<T> cache;
    const auto out = student.forward(to_tensor<T>(train[i].image), &cache);
    StudentGrads<T> g;
    const auto l = samkd_loss(teacher_out[i], out, targets[i], cfg, distiller, &g);
    student.backward(cache, out, g.d_logits, g.d_boxes, g.d_features);
    return l;
  };
  auto eval = [&] { return evaluate(student, test); };
  return detail::run_training<T>(params, train.size(), tc, epochs, step, eval, hooks);
}

}  // namespace samkd
