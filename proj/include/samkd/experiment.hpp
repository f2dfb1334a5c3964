#pragma once

// Experiment orchestration: teacher/student runs with pinned seeds and the
// ablation suites (components, scales, logit, lambda-mu, thresholds,
// alpha-beta) with mean +- spread result tables.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samkd/config.hpp"
#include "samkd/dataset.hpp"
#include "samkd/detector.hpp"
#include "samkd/error.hpp"
#include "samkd/sfd.hpp"
#include "samkd/trainer.hpp"

namespace samkd {

// Model seeds are offsets of the run seed; dataset seeds come from
// TrainConfig::dataset_seed only, so suite cells differ only in the config.
inline constexpr std::uint64_t kTeacherSeedOffset = 100;
inline constexpr std::uint64_t kStudentSeedOffset = 200;
inline constexpr std::uint64_t kDistillerSeedOffset = 300;

struct DataSplit {
  Dataset train;
  Dataset test;
};

inline DataSplit make_data(const ExperimentConfig& cfg) {
  cfg.validate();
  return {generate_dataset(cfg.train.train_scenes, cfg.train.dataset_seed, cfg.scene),
          generate_dataset(cfg.train.test_scenes, cfg.train.dataset_seed + 1, cfg.scene)};
}

inline DetectorArch teacher_arch(const ExperimentConfig& cfg) {
  return DetectorArch::teacher(cfg.scene.num_classes);
}
inline DetectorArch student_arch(const ExperimentConfig& cfg) {
  return DetectorArch::student(cfg.scene.num_classes);
}

template <typename T>
struct TeacherRun {
  ToyDetector<T> model;
  MetricLog log;
};

template <typename T>
TeacherRun<T> run_teacher(const ExperimentConfig& cfg, const DataSplit& data,
                          const TrainHooks& hooks = {}) {
  TeacherRun<T> r{ToyDetector<T>(teacher_arch(cfg), cfg.train.seed + kTeacherSeedOffset), {}};
  TrainConfig tc = cfg.train;
  tc.learning_rate = tc.teacher_learning_rate;
  r.log = train_detector(r.model, data.train, data.test, tc, tc.teacher_epochs, hooks);
  return r;
}

template <typename T>
struct StudentRun {
  ToyDetector<T> model;
  FeatureDistiller<T> distiller;
  MetricLog log;
};

template <typename T>
FeatureDistiller<T> make_distiller(const ExperimentConfig& cfg) {
  return FeatureDistiller<T>(kFpnLevels, student_arch(cfg).fpn, teacher_arch(cfg).fpn,
                             cfg.distill.grid_sizes, cfg.train.seed + kDistillerSeedOffset);
}

/// Trains a student from the seeded initialisation, distilled from `teacher`
/// or (distilled = false) with detection loss alone.
template <typename T>
StudentRun<T> run_student(const ExperimentConfig& cfg, const ToyDetector<T>& teacher,
                          const DataSplit& data, bool distilled, const TrainHooks& hooks = {}) {
  StudentRun<T> r{ToyDetector<T>(student_arch(cfg), cfg.train.seed + kStudentSeedOffset),
                  make_distiller<T>(cfg), {}};
  if (distilled)
    r.log = distill(r.model, r.distiller, teacher, data.train, data.test, cfg.distill, cfg.train,
                    cfg.train.epochs, hooks);
  else
    r.log = train_detector(r.model, data.train, data.test, cfg.train, cfg.train.epochs, hooks);
  return r;
}

// ---------------------------------------------------------------------------
// Ablation suites

struct AblationRow {
  std::string name;
  DistillConfig cfg;
};

struct AblationSuite {
  std::string name;
  std::string title;
  std::vector<AblationRow> rows;
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"components", "scales",     "logit",
                                              "lambda-mu",  "thresholds", "alpha-beta"};
  return names;
}

namespace detail {

inline std::string short_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::string scale_label(const std::vector<int>& grids) {
  std::string s;
  for (int g : grids) {
    const int idx = g == 1 ? 1 : g == 2 ? 2 : g == 4 ? 3 : 0;
    if (!s.empty()) s += "+";
    s += idx ? "S" + std::to_string(idx) : "G" + std::to_string(g);
  }
  return s;
}

}  // namespace detail

/// Builds the config grid of a suite around `base`. Unknown names raise a
/// config error listing the available suites.
inline AblationSuite make_suite(const std::string& name, const DistillConfig& base) {
  AblationSuite s;
  s.name = name;
  auto row = [&](std::string n, auto&& edit) {
    DistillConfig c = base;
    c.enable_sfd = c.enable_sld = true;
    edit(c);
    s.rows.push_back({std::move(n), c});
  };
  if (name == "components") {
    s.title = "Component ablation (SFD / SLD)";
    row("SFD", [](DistillConfig& c) { c.enable_sld = false; });
    row("SLD", [](DistillConfig& c) { c.enable_sfd = false; });
    row("SFD+SLD", [](DistillConfig&) {});
  } else if (name == "scales") {
    s.title = "Distillation scales (S1=1x1, S2=2x2, S3=4x4)";
    const std::vector<std::vector<int>> grids{{1}, {2}, {4}, {1, 2}, {1, 4}, {2, 4}, {1, 2, 4}};
    for (const auto& g : grids)
      row(detail::scale_label(g), [&](DistillConfig& c) { c.grid_sizes = g; });
  } else if (name == "logit") {
    s.title = "Logit distillation strategy (no SFD)";
    row("w/o SLD", [](DistillConfig& c) {
      c.enable_sfd = false;
      c.adaptive_logit_weights = false;
    });
    row("w/ SLD", [](DistillConfig& c) {
      c.enable_sfd = false;
      c.adaptive_logit_weights = true;
    });
  } else if (name == "lambda-mu") {
    s.title = "Spatial/channel reconstruction balance";
    for (auto [l, m] : {std::pair{0.35, 0.65}, {0.45, 0.55}, {0.55, 0.45}, {0.65, 0.35}})
      row("lambda=" + detail::short_num(l) + " mu=" + detail::short_num(m),
          [&](DistillConfig& c) {
            c.lambda = l;
            c.mu = m;
          });
  } else if (name == "thresholds") {
    s.title = "Dual masking thresholds";
    for (double ws : {0.95, 1.0, 1.05})
      row("omega_s=" + detail::short_num(ws) + " (omega_c=0.5)", [&](DistillConfig& c) {
        c.omega_s = ws;
        c.omega_c = 0.5;
      });
    for (double wc : {0.45, 0.5, 0.55})
      row("omega_c=" + detail::short_num(wc) + " (omega_s=0.95)", [&](DistillConfig& c) {
        c.omega_s = 0.95;
        c.omega_c = wc;
      });
  } else if (name == "alpha-beta") {
    s.title = "Loss weights alpha / beta";
    for (double f : {0.5, 1.0, 2.0})
      row("alpha=" + detail::short_num(base.alpha * f) + " beta=" + detail::short_num(base.beta),
          [&](DistillConfig& c) { c.alpha = base.alpha * f; });
    for (double f : {0.5, 2.0})
      row("alpha=" + detail::short_num(base.alpha) + " beta=" + detail::short_num(base.beta * f),
          [&](DistillConfig& c) { c.beta = base.beta * f; });
  } else {
    std::string avail;
    for (const auto& n : suite_names()) avail += (avail.empty() ? "" : ", ") + n;
    fail(ErrorKind::Config, "unknown suite '" + name + "'; available: " + avail);
  }
  return s;
}

struct RowStats {
  std::string name;
  std::vector<double> values;  ///< final-epoch mAP@0.5 per seed
  double mean = 0.0;
  double spread = 0.0;  ///< sample standard deviation over seeds
};

inline RowStats summarize(std::string name, std::vector<double> values) {
  RowStats r{std::move(name), std::move(values), 0.0, 0.0};
  if (r.values.empty()) return r;
  for (double v : r.values) r.mean += v;
  r.mean /= r.values.size();
  if (r.values.size() > 1) {
    double ss = 0.0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.spread = std::sqrt(ss / (r.values.size() - 1));
  }
  return r;
}

struct SuiteResult {
  std::string suite;
  std::string title;
  std::vector<std::uint64_t> seeds;
  RowStats baseline;  ///< undistilled student, same seeds
  std::vector<RowStats> rows;

  const RowStats& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    fail(ErrorKind::Config, "no row named '" + name + "' in suite " + suite);
  }
};

/// Runs students against one frozen teacher, memoising results by
/// (effective config, seed, distilled) so overlapping suites share runs.
template <typename T>
class SuiteRunner {
 public:
  SuiteRunner(ExperimentConfig base, const ToyDetector<T>& teacher, const DataSplit& data,
              std::ostream* progress = nullptr)
      : base_(std::move(base)), teacher_(teacher), data_(data), progress_(progress) {}

  double final_map(const DistillConfig& dcfg, std::uint64_t seed, bool distilled) {
    ExperimentConfig cfg = base_;
    cfg.distill = dcfg;
    cfg.train.seed = seed;
    // Baselines ignore the distillation settings; data and training settings
    // are fixed for the lifetime of the runner.
    std::string key = "baseline|" + std::to_string(seed);
    if (distilled) {
      key = "distill|";
      for (const auto& [k, v] : config_entries(cfg)) key += k + "=" + v + ";";
    }
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const auto run = run_student<T>(cfg, teacher_, data_, distilled);
    const double v = run.log.empty() ? evaluate(run.model, data_.test).map50
                                     : run.log.back().metrics.map50;
    if (progress_) *progress_ << "  " << (distilled ? "distilled" : "baseline ") << " seed " << seed
                              << " -> mAP50 " << v << "\n";
    cache_.emplace(key, v);
    return v;
  }

  SuiteResult run(const AblationSuite& suite, const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) fail(ErrorKind::Config, "ablate: seed list is empty");
    SuiteResult res{suite.name, suite.title, seeds, {}, {}};
    std::vector<double> base;
    for (auto s : seeds) base.push_back(final_map(base_.distill, s, false));
    res.baseline = summarize("baseline (no KD)", base);
    for (const auto& row : suite.rows) {
      if (progress_) *progress_ << "row " << row.name << "\n";
      std::vector<double> vals;
      for (auto s : seeds) vals.push_back(final_map(row.cfg, s, true));
      res.rows.push_back(summarize(row.name, vals));
    }
    return res;
  }

  const ExperimentConfig& base() const { return base_; }

 private:
  ExperimentConfig base_;
  const ToyDetector<T>& teacher_;
  const DataSplit& data_;
  std::ostream* progress_;
  std::map<std::string, double> cache_;
};

/// Fixed-width text table: one line per row, mAP as percentages.
inline std::string format_table(const SuiteResult& r) {
  std::ostringstream os;
  std::size_t width = r.baseline.name.size();
  for (const auto& row : r.rows) width = std::max(width, row.name.size());
  os << r.title << " | seeds:";
  for (auto s : r.seeds) os << " " << s;
  os << "\n";
  auto line = [&](const RowStats& row) {
    os << "  " << std::left << std::setw(static_cast<int>(width)) << row.name << "  " << std::right
       << std::fixed << std::setprecision(2) << std::setw(6) << 100.0 * row.mean << " +- "
       << std::setw(5) << 100.0 * row.spread << "  [";
    for (std::size_t i = 0; i < row.values.size(); ++i)
      os << (i ? " " : "") << std::setprecision(2) << 100.0 * row.values[i];
    os << "]\n";
  };
  os << "  " << std::left << std::setw(static_cast<int>(width)) << "config"
     << "  mAP50(%) mean +- sd  [per seed]\n";
  line(r.baseline);
  for (const auto& row : r.rows) line(row);
  return os.str();
}

inline nlohmann::json to_json(const RowStats& r) {
  return {{"name", r.name}, {"values", r.values}, {"mean", r.mean}, {"spread", r.spread}};
}

inline nlohmann::json to_json(const SuiteResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(to_json(row));
  return {{"suite", r.suite}, {"title", r.title},       {"metric", "mAP50"},
          {"seeds", r.seeds}, {"baseline", to_json(r.baseline)}, {"rows", rows}};
}

}  // namespace samkd
