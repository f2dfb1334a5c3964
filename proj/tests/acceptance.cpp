// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <bit>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "samkd/checkpoint.hpp"
#include "samkd/experiment.hpp"
#include "samkd/trainer.hpp"
#include "test_support.hpp"

using namespace samkd;
using samkd::testing::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

// Verdicts and tables are also kept in a report file, since ctest hides the
// output of passing tests.
std::ofstream report("acceptance_report.txt");

void emit(const std::string& text) {
  std::cout << text << std::flush;
  report << text << std::flush;
}

void verdict(int id, const std::string& name, bool pass, const std::string& detail) {
  emit("criterion " + std::to_string(id) + " [" + name + "]: " + (pass ? "PASS" : "FAIL") +
       " - " + detail + "\n");
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// --- 1: library kernels against brute-force oracles ------------------------------

struct OpResult {
  std::string op;
  int instances = 0;
  double worst = 0;
};

void criterion_kernels() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const int n = 100;
  std::vector<OpResult> ops;

  OpResult attn{"attention", n, 0};
  for (int i = 0; i < n; ++i) {
    const auto f = random_tensor(uniform_int(rng, 1, 8), uniform_int(rng, 1, 8),
                                 uniform_int(rng, 1, 8), rng);
    const double tau = uniform(rng, 0.3, 3.0);
    const auto lib = teacher_attention(f, tau);
    const auto ref = oracle::brute_attention(f, tau);
    for (int h = 0; h < f.height(); ++h)
      for (int w = 0; w < f.width(); ++w)
        attn.worst = std::max(attn.worst, std::abs(lib.spatial(h, w, 0) - ref.spatial[h][w]));
    for (int c = 0; c < f.channels(); ++c)
      attn.worst = std::max(attn.worst, std::abs(lib.channel(0, 0, c) - ref.channel[c]));
  }
  ops.push_back(attn);

  OpResult mask{"masking", n, 0};
  for (int i = 0; i < n; ++i) {
    const auto f = random_tensor(uniform_int(rng, 1, 8), uniform_int(rng, 1, 8),
                                 uniform_int(rng, 1, 8), rng);
    const auto a = teacher_attention(f, 1.0);
    const bool relative = i % 2 == 0;
    const double ws = relative ? uniform(rng, 0.8, 1.2) : uniform(rng, 0.5, 0.9);
    const double wc = relative ? uniform(rng, 0.3, 1.2) : uniform(rng, 0.5, 0.9);
    const auto m = make_masks(a, ws, wc, relative ? ThresholdMode::Relative : ThresholdMode::Absolute);
    const auto rs = oracle::brute_threshold(samkd::testing::to_vector(a.spatial), ws, relative);
    const auto rc = oracle::brute_threshold(samkd::testing::to_vector(a.channel), wc, relative);
    for (std::size_t k = 0; k < rs.size(); ++k)
      mask.worst = std::max(mask.worst, std::abs(m.spatial.values()[k] - rs[k]));
    for (std::size_t k = 0; k < rc.size(); ++k)
      mask.worst = std::max(mask.worst, std::abs(m.channel.values()[k] - rc[k]));
  }
  ops.push_back(mask);

  OpResult pool{"pooling", n, 0};
  for (int i = 0; i < n; ++i) {
    const int h = uniform_int(rng, 4, 16), w = uniform_int(rng, 4, 16);
    const auto map = random_tensor(h, w, uniform_int(rng, 1, 5), rng, 3.0);
    const auto part = partition(h, w);
    const auto ref = oracle::brute_pool(map, part);
    std::size_t r = 0;
    part.for_each_region([&](const Region& reg) {
      const auto z = pool_logits(map, reg);
      for (int k = 0; k < map.channels(); ++k)
        pool.worst = std::max(pool.worst, std::abs(z(0, 0, k) - ref[r][k]));
      ++r;
    });
  }
  ops.push_back(pool);

  OpResult cosine{"cosine weights", n, 0};
  for (int i = 0; i < n; ++i) {
    const int h = uniform_int(rng, 1, 6), w = uniform_int(rng, 1, 6), c = uniform_int(rng, 1, 8);
    const auto u = random_tensor(h, w, c, rng), v = random_tensor(h, w, c, rng, 1.0, 0.3);
    cosine.worst = std::max(
        cosine.worst, std::abs(diff_weight(u, v).value - oracle::brute_diff_weight(u, v)));
  }
  ops.push_back(cosine);

  OpResult feat{"feature loss", n, 0};
  for (int i = 0; i < n; ++i) {
    const int h = uniform_int(rng, 4, 8), w = uniform_int(rng, 4, 8);
    const int cs = uniform_int(rng, 1, 6), ct = uniform_int(rng, 1, 6);
    DistillConfig cfg;
    cfg.grid_sizes = i % 3 == 0 ? std::vector<int>{1, 2} : std::vector<int>{1, 2, 4};
    cfg.tau = uniform(rng, 0.5, 2.0);
    cfg.lambda = uniform(rng, 0.0, 1.0);
    cfg.mu = 1.0 - cfg.lambda;
    FeatureDistiller<double> d(1, cs, ct, cfg.grid_sizes, 1000 + i);
    samkd::testing::randomize(d, rng);
    const auto t = random_tensor(h, w, ct, rng), s = random_tensor(h, w, cs, rng);
    const double lib = d.compute({t}, {s}, cfg).loss;
    const double ref =
        oracle::brute_feature_loss(t, s, samkd::testing::sfd_weights(d, 0, cfg.grid_sizes), cfg);
    feat.worst = std::max(feat.worst, std::abs(lib - ref));
  }
  ops.push_back(feat);

  OpResult logit{"logit loss", n, 0};
  for (int i = 0; i < n; ++i) {
    const int h = uniform_int(rng, 4, 12), w = uniform_int(rng, 4, 12);
    const int k = uniform_int(rng, 2, 5), c = uniform_int(rng, 1, 8);
    const auto zt = random_tensor(h, w, k, rng, 2.0), zs = random_tensor(h, w, k, rng, 2.0);
    const auto ft = random_tensor(h, w, c, rng), fs = random_tensor(h, w, c, rng);
    const double temp = uniform(rng, 0.5, 4.0);
    const bool forward = i % 2 == 0, adaptive = i % 5 != 0;
    const auto part = partition(h, w);
    const LogitLossOptions opts{temp, forward ? KlDirection::Forward : KlDirection::Reverse,
                                adaptive};
    const double lib = logit_loss(part, zt, zs, ft, fs, opts).loss;
    const double ref = oracle::brute_logit_loss(part, zt, zs, ft, fs, temp, forward, adaptive);
    logit.worst = std::max(logit.worst, std::abs(lib - ref));
  }
  ops.push_back(logit);

  const double secs = seconds_since(t0);
  bool pass = secs <= 60.0;
  std::string detail;
  for (const auto& op : ops) {
    pass = pass && op.worst <= oracle::kForwardTolerance;
    detail += op.op + " " + fmt("%.2e", op.worst) + " (" + std::to_string(op.instances) + "); ";
  }
  verdict(1, "kernel-oracle equivalence", pass,
          detail + fmt("tolerance %.0e, %.1f s (limit 60 s)", oracle::kForwardTolerance, secs));
}

// --- 2: analytic gradients against central differences ----------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  const int n = 20;
  double worst_feat = 0, worst_logit = 0;
  std::size_t skipped = 0;

  for (int i = 0; i < n; ++i) {
    const int h = uniform_int(rng, 4, 6), w = uniform_int(rng, 4, 6);
    const int cs = uniform_int(rng, 2, 4), ct = uniform_int(rng, 2, 4);
    DistillConfig cfg;
    cfg.grid_sizes = {1, 2, 4};
    FeatureDistiller<double> d(1, cs, ct, cfg.grid_sizes, 2000 + i);
    samkd::testing::randomize(d, rng);
    const auto teacher = random_tensor(h, w, ct, rng);
    auto student = random_tensor(h, w, cs, rng);
    const auto params = d.params();
    zero_grads(params);
    const auto res = d.compute({teacher}, {student}, cfg, 1.0);
    auto analytic = samkd::testing::to_vector(res.d_student[0]);
    const auto pg = samkd::testing::grad_values(params);
    analytic.insert(analytic.end(), pg.begin(), pg.end());

    auto coords = samkd::testing::value_pointers(student);
    const auto pp = samkd::testing::value_pointers(params);
    coords.insert(coords.end(), pp.begin(), pp.end());
    const auto fd = oracle::finite_diff_grad(
        [&] { return d.compute({teacher}, {student}, cfg).loss; }, coords, 1e-5);
    skipped += fd.skipped.size();
    worst_feat = std::max(worst_feat, oracle::max_relative_error(analytic, fd.gradient));
  }

  for (int i = 0; i < n; ++i) {
    const int h = uniform_int(rng, 4, 10), w = uniform_int(rng, 4, 10), k = uniform_int(rng, 2, 5);
    const auto zt = random_tensor(h, w, k, rng, 1.5);
    auto zs = random_tensor(h, w, k, rng, 1.5);
    const auto ft = random_tensor(h, w, 3, rng), fs = random_tensor(h, w, 3, rng);
    const LogitLossOptions opts{uniform(rng, 0.5, 3.0),
                                i % 2 ? KlDirection::Reverse : KlDirection::Forward, true};
    const auto part = partition(h, w);
    const auto r = logit_loss(part, zt, zs, ft, fs, opts, true);
    const auto fd = oracle::finite_diff_grad(
        [&] { return logit_loss(part, zt, zs, ft, fs, opts).loss; },
        samkd::testing::value_pointers(zs), 1e-5);
    skipped += fd.skipped.size();
    worst_logit = std::max(worst_logit,
                           oracle::max_relative_error(samkd::testing::to_vector(r.student_grad),
                                                      fd.gradient));
  }

  const double secs = seconds_since(t0);
  const bool pass = worst_feat <= oracle::kGradientTolerance &&
                    worst_logit <= oracle::kGradientTolerance && skipped == 0 && secs <= 120.0;
  verdict(2, "gradient check", pass,
          fmt("L_feat max rel err %.2e, L_logit max rel err %.2e (20 instances each, ", worst_feat,
              worst_logit) +
              fmt("tolerance %.0e), skipped %g, %.1f s (limit 120 s)", oracle::kGradientTolerance,
                  double(skipped), secs));
}

// --- 3: structural invariants ------------------------------------------------------

void criterion_invariants() {
  std::mt19937_64 rng(303);
  int cover_failures = 0;
  for (int i = 0; i < 50; ++i) {
    const int h = uniform_int(rng, 4, 80), w = uniform_int(rng, 4, 80);
    const auto part = partition(h, w);
    for (const auto& level : part.levels) {
      std::vector<int> hits(static_cast<std::size_t>(h) * w, 0);
      for (const auto& r : level.regions)
        for (int y = r.rows.begin; y < r.rows.end; ++y)
          for (int x = r.cols.begin; x < r.cols.end; ++x) ++hits[y * w + x];
      for (int v : hits) cover_failures += v != 1;
    }
  }

  int non_binary = 0;
  for (int i = 0; i < 100; ++i) {
    const auto f = random_tensor(uniform_int(rng, 1, 12), uniform_int(rng, 1, 12),
                                 uniform_int(rng, 1, 16), rng);
    const auto m = make_masks(teacher_attention(f, 1.0), 0.95, 0.5);
    for (double v : m.spatial.values()) non_binary += !(v == 0.0 || v == 1.0);
    for (double v : m.channel.values()) non_binary += !(v == 0.0 || v == 1.0);
  }

  int out_of_range = 0;
  for (int i = 0; i < 100; ++i) {
    const auto ft = random_tensor(8, 8, 4, rng), fs = random_tensor(8, 8, 4, rng, 1.0, -0.2);
    const auto zt = random_tensor(8, 8, 3, rng), zs = random_tensor(8, 8, 3, rng);
    for (const auto& w : logit_loss(partition(8, 8), zt, zs, ft, fs).weights)
      out_of_range += !(w.value >= 0.0 && w.value <= 2.0);
  }

  double identity_worst = 0;
  for (int i = 0; i < 20; ++i) {
    const auto z = random_tensor(8, 8, 3, rng), f = random_tensor(8, 8, 4, rng);
    const auto other = random_tensor(8, 8, 3, rng), g = random_tensor(8, 8, 4, rng);
    identity_worst = std::max(identity_worst, logit_loss(partition(8, 8), z, z, f, g).loss);
    identity_worst = std::max(identity_worst, logit_loss(partition(8, 8), z, other, f, f).loss);
    // Nothing masked, identity alignment and blocks, lambda + mu = 1.
    FeatureDistiller<double> d(1, 4, 4, {1, 2, 4}, 3000 + i);
    DistillConfig cfg;
    cfg.omega_s = cfg.omega_c = 100.0;
    cfg.lambda = cfg.mu = 0.5;
    identity_worst = std::max(identity_worst, d.compute({f}, {f}, cfg).loss);
  }

  const bool pass = cover_failures == 0 && non_binary == 0 && out_of_range == 0 &&
                    identity_worst <= 1e-12;
  verdict(3, "structural invariants", pass,
          "tiling defects " + std::to_string(cover_failures) + " over 50 sizes, non-binary mask entries " +
              std::to_string(non_binary) + ", weights outside [0,2] " + std::to_string(out_of_range) +
              fmt(", identity-case max loss %.1e", identity_worst));
}

// --- 8: toggles ---------------------------------------------------------------------

void criterion_toggles(const ExperimentConfig& base, const ToyDetector<double>& teacher,
                       const DataSplit& data) {
  ToyDetector<double> student(student_arch(base), 8);
  auto distiller = make_distiller<double>(base);
  std::mt19937_64 rng(808);
  samkd::testing::randomize(distiller, rng, 0.1);
  int bad_zero_weight = 0, bad_no_sfd = 0, bad_no_sld = 0, bad_both = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& scene = data.train[i];
    const auto image = to_tensor<double>(scene.image);
    const auto t_out = teacher.forward(image);
    const auto s_out = student.forward(image);
    const auto targets = encode_targets(scene.boxes, scene.image.height(), base.scene.num_classes);
    const double det = detection_loss(s_out, targets).total;

    ExperimentConfig c = base;
    apply_setting(c, "alpha", "0");
    apply_setting(c, "beta", "0");
    auto l = samkd_loss(t_out, s_out, targets, c.distill, distiller);
    bad_zero_weight += std::bit_cast<std::uint64_t>(l.total) != std::bit_cast<std::uint64_t>(det);

    c = base;
    apply_setting(c, "enable_sfd", "false");
    l = samkd_loss(t_out, s_out, targets, c.distill, distiller);
    bad_no_sfd += !(std::bit_cast<std::uint64_t>(l.l_feat) == 0 && l.l_logit > 0);

    c = base;
    apply_setting(c, "enable_sld", "false");
    l = samkd_loss(t_out, s_out, targets, c.distill, distiller);
    bad_no_sld += !(std::bit_cast<std::uint64_t>(l.l_logit) == 0 && l.l_feat > 0);

    apply_setting(c, "enable_sfd", "false");
    l = samkd_loss(t_out, s_out, targets, c.distill, distiller);
    bad_both += std::bit_cast<std::uint64_t>(l.total) != std::bit_cast<std::uint64_t>(det);
  }
  const bool pass = bad_zero_weight + bad_no_sfd + bad_no_sld + bad_both == 0;
  verdict(8, "toggle exactness", pass,
          "20 scenes: alpha=beta=0 mismatches " + std::to_string(bad_zero_weight) +
              ", no-sfd nonzero L_feat " + std::to_string(bad_no_sfd) +
              ", no-sld nonzero L_logit " + std::to_string(bad_no_sld) +
              ", both off mismatches " + std::to_string(bad_both));
}

// --- 7: determinism -------------------------------------------------------------------

void criterion_determinism(const ExperimentConfig& cfg, const ToyDetector<double>& teacher,
                           const DataSplit& data) {
  auto a = run_student<double>(cfg, teacher, data, true);
  auto b = run_student<double>(cfg, teacher, data, true);
  auto ckpt = [&](StudentRun<double>& r) {
    auto params = r.model.params();
    for (auto* p : r.distiller.params()) params.push_back(p);
    return strip_timestamp(make_checkpoint(params, cfg, "student", cfg.train.seed)).dump();
  };
  const bool logs = metric_log_jsonl(a.log) == metric_log_jsonl(b.log);
  const bool ckpts = ckpt(a) == ckpt(b);
  verdict(7, "determinism", logs && ckpts,
          std::string("two distillation runs, seed ") + std::to_string(cfg.train.seed) +
              ": logs " + (logs ? "identical" : "differ") + ", checkpoints " +
              (ckpts ? "identical" : "differ") + " (timestamp excluded)");
}

}  // namespace

int main() {
  ExperimentConfig cfg;
  apply_config_file(cfg, SAMKD_DESK_CONFIG);
  cfg.validate();
  emit(std::string("config: ") + SAMKD_DESK_CONFIG + "\n");

  criterion_kernels();
  criterion_gradients();
  criterion_invariants();

  const auto t_start = Clock::now();
  const auto data = make_data(cfg);
  const auto teacher = run_teacher<double>(cfg, data);
  emit(fmt("teacher: %g epochs, mAP50 %.4f, %.1f s\n", cfg.train.teacher_epochs,
           teacher.log.empty() ? 0.0 : teacher.log.back().metrics.map50, seconds_since(t_start)));

  criterion_toggles(cfg, teacher.model, data);

  const std::vector<std::uint64_t> seeds{0, 1, 2};
  SuiteRunner<double> runner(cfg, teacher.model, data, &std::cout);
  const auto components = runner.run(make_suite("components", cfg.distill), seeds);
  const double gain_secs = seconds_since(t_start);
  emit(format_table(components));

  {
    const auto& full = components.row("SFD+SLD");
    const auto& base = components.baseline;
    bool paired = true;
    std::string per_seed;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      paired = paired && full.values[i] >= base.values[i] - 0.01;
      per_seed += fmt(" seed %g: %.4f vs %.4f;", double(seeds[i]), full.values[i], base.values[i]);
    }
    const bool pass = full.mean > base.mean && paired && gain_secs <= 1800.0;
    verdict(4, "distillation gain", pass,
            fmt("distilled mean %.4f vs baseline mean %.4f;", full.mean, base.mean) + per_seed +
                fmt(" %.0f s (limit 1800 s)", gain_secs));
  }
  {
    const auto& none = components.baseline;
    const auto& full = components.row("SFD+SLD");
    verdict(5, "component ablation", full.mean > none.mean,
            fmt("none %.4f, SFD %.4f, SLD %.4f", none.mean, components.row("SFD").mean,
                components.row("SLD").mean) +
                fmt(", SFD+SLD %.4f (asserted: full > none)", full.mean));
  }

  const auto scales = runner.run(make_suite("scales", cfg.distill), seeds);
  emit(format_table(scales));
  {
    double best_single = 0;
    std::string best_name;
    for (const char* name : {"S1", "S2", "S3"})
      if (scales.row(name).mean > best_single) {
        best_single = scales.row(name).mean;
        best_name = name;
      }
    const double all = scales.row("S1+S2+S3").mean;
    std::string rows;
    for (const auto& r : scales.rows) rows += " " + r.name + fmt("=%.4f", r.mean);
    verdict(6, "scale ablation", scales.rows.size() == 7 && all >= best_single - 0.005,
            fmt("S1+S2+S3 %.4f vs best single ", all) + best_name +
                fmt(" %.4f (margin 0.005);", best_single) + rows);
  }

  criterion_determinism(cfg, teacher.model, data);

  emit(fmt("total %.0f s, %g criteria failed\n", seconds_since(t_start), double(failures)));
  return failures == 0 ? 0 : 1;
}
