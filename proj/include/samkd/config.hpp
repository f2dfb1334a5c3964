#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "samkd/error.hpp"
#include "samkd/logitdistill.hpp"
#include "samkd/masking.hpp"

namespace samkd {

/// Scalar hyperparameters of the distillation objective.
struct DistillConfig {
  double tau = 1.0;
  double omega_s = 0.95;
  double omega_c = 0.50;
  double lambda = 0.45;
  double mu = 0.55;
  double alpha = 2.0e-3;
  double beta = 6.0e-6;
  double logit_temperature = 1.0;
  std::vector<int> grid_sizes{1, 2, 4};
  bool enable_sfd = true;
  bool enable_sld = true;
  bool adaptive_logit_weights = true;
  ThresholdMode threshold_mode = ThresholdMode::Relative;
  KlDirection kl_direction = KlDirection::Forward;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0))
        fail(ErrorKind::InvalidHyperparameter, std::string(name) + " must be positive");
    };
    auto non_negative = [](double v, const char* name) {
      if (!(v >= 0.0))
        fail(ErrorKind::InvalidHyperparameter, std::string(name) + " must be non-negative");
    };
    positive(tau, "tau");
    positive(omega_s, "omega_s");
    positive(omega_c, "omega_c");
    positive(logit_temperature, "logit_temperature");
    non_negative(lambda, "lambda");
    non_negative(mu, "mu");
    non_negative(alpha, "alpha");
    non_negative(beta, "beta");
    if (grid_sizes.empty())
      fail(ErrorKind::InvalidHyperparameter, "grid_sizes must not be empty");
    for (std::size_t i = 0; i < grid_sizes.size(); ++i) {
      if (grid_sizes[i] <= 0)
        fail(ErrorKind::InvalidHyperparameter, "grid sizes must be positive");
      if (i > 0 && grid_sizes[i] <= grid_sizes[i - 1])
        fail(ErrorKind::InvalidHyperparameter, "grid sizes must be strictly ascending");
    }
  }
};

/// Synthetic scene generator settings.
struct SceneSpec {
  int image_size = 48;
  int num_classes = 4;
  int min_objects = 1;
  int max_objects = 6;
  int min_object_size = 5;
  int max_object_size = 28;

  void validate() const {
    if (image_size < 16 || image_size % 16 != 0)
      fail(ErrorKind::InvalidSpec, "image_size must be a positive multiple of 16");
    if (num_classes < 1 || num_classes > 5)
      fail(ErrorKind::InvalidSpec, "num_classes must lie in [1, 5]");
    if (min_objects < 0 || max_objects < min_objects)
      fail(ErrorKind::InvalidSpec, "object count range is empty");
    if (min_object_size < 2 || max_object_size < min_object_size)
      fail(ErrorKind::InvalidSpec, "object size range is empty");
    if (max_object_size > image_size)
      fail(ErrorKind::InvalidSpec, "objects of size " + std::to_string(max_object_size) +
                                       " do not fit a " + std::to_string(image_size) +
                                       " pixel image");
  }
};

struct TrainConfig {
  int epochs = 10;
  int teacher_epochs = 20;
  double learning_rate = 0.005;
  double teacher_learning_rate = 0.003;  ///< the wider teacher is less stable at the student rate
  double momentum = 0.9;
  double weight_decay = 1.0e-4;
  int batch_size = 1;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  std::uint64_t dataset_seed = 1234;
  int train_scenes = 500;
  int test_scenes = 100;

  void validate() const {
    if (epochs < 0 || teacher_epochs < 0)
      fail(ErrorKind::Config, "epochs must be non-negative");
    if (!(learning_rate >= 0.0)) fail(ErrorKind::Config, "learning_rate must be >= 0");
    if (!(teacher_learning_rate >= 0.0))
      fail(ErrorKind::Config, "teacher_learning_rate must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) fail(ErrorKind::Config, "momentum must be in [0,1)");
    if (weight_decay < 0.0) fail(ErrorKind::Config, "weight_decay must be >= 0");
    if (batch_size < 1) fail(ErrorKind::Config, "batch_size must be >= 1");
    if (train_scenes < 1 || test_scenes < 1)
      fail(ErrorKind::Config, "train_scenes and test_scenes must be positive");
  }
};

/// Everything a command needs, resolved with precedence flag > file > default.
struct ExperimentConfig {
  DistillConfig distill;
  SceneSpec scene;
  TrainConfig train;

  void validate() const {
    distill.validate();
    scene.validate();
    train.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::Config, "key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace detail

inline std::vector<int> parse_grid_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(detail::parse_int("grid_sizes", item)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Applies a single key/value pair. Keys mirror the struct field names.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key,
                          const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  auto& d = cfg.distill;
  auto& s = cfg.scene;
  auto& t = cfg.train;
  if (key == "tau") d.tau = parse_double(key, value);
  else if (key == "omega_s") d.omega_s = parse_double(key, value);
  else if (key == "omega_c") d.omega_c = parse_double(key, value);
  else if (key == "lambda") d.lambda = parse_double(key, value);
  else if (key == "mu") d.mu = parse_double(key, value);
  else if (key == "alpha") d.alpha = parse_double(key, value);
  else if (key == "beta") d.beta = parse_double(key, value);
  else if (key == "logit_temperature") d.logit_temperature = parse_double(key, value);
  else if (key == "grid_sizes") d.grid_sizes = parse_grid_list(value);
  else if (key == "enable_sfd") d.enable_sfd = parse_bool(key, value);
  else if (key == "enable_sld") d.enable_sld = parse_bool(key, value);
  else if (key == "adaptive_logit_weights") d.adaptive_logit_weights = parse_bool(key, value);
  else if (key == "threshold_mode") {
    if (value == "relative") d.threshold_mode = ThresholdMode::Relative;
    else if (value == "absolute") d.threshold_mode = ThresholdMode::Absolute;
    else fail(ErrorKind::Config, "threshold_mode must be relative or absolute");
  } else if (key == "kl_direction") {
    if (value == "forward") d.kl_direction = KlDirection::Forward;
    else if (value == "reverse") d.kl_direction = KlDirection::Reverse;
    else fail(ErrorKind::Config, "kl_direction must be forward or reverse");
  }
  else if (key == "image_size") s.image_size = static_cast<int>(parse_int(key, value));
  else if (key == "num_classes") s.num_classes = static_cast<int>(parse_int(key, value));
  else if (key == "min_objects") s.min_objects = static_cast<int>(parse_int(key, value));
  else if (key == "max_objects") s.max_objects = static_cast<int>(parse_int(key, value));
  else if (key == "min_object_size") s.min_object_size = static_cast<int>(parse_int(key, value));
  else if (key == "max_object_size") s.max_object_size = static_cast<int>(parse_int(key, value));
  else if (key == "epochs") t.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "teacher_epochs") t.teacher_epochs = static_cast<int>(parse_int(key, value));
  else if (key == "learning_rate") t.learning_rate = parse_double(key, value);
  else if (key == "teacher_learning_rate") t.teacher_learning_rate = parse_double(key, value);
  else if (key == "momentum") t.momentum = parse_double(key, value);
  else if (key == "weight_decay") t.weight_decay = parse_double(key, value);
  else if (key == "batch_size") t.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "clip_norm") t.clip_norm = parse_double(key, value);
  else if (key == "seed") t.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "dataset_seed") t.dataset_seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "train_scenes") t.train_scenes = static_cast<int>(parse_int(key, value));
  else if (key == "test_scenes") t.test_scenes = static_cast<int>(parse_int(key, value));
  else fail(ErrorKind::Config, "unknown config key '" + key + "'");
}

/// Parses `key = value` lines; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(cfg, buf.str());
}

namespace detail {
/// Shortest text that parses back to exactly `v`.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
}  // namespace detail

/// Ordered key/value view of a config; the inverse of apply_config_text.
inline std::vector<std::pair<std::string, std::string>> config_entries(
    const ExperimentConfig& cfg) {
  using detail::fmt_double;
  const auto& d = cfg.distill;
  const auto& s = cfg.scene;
  const auto& t = cfg.train;
  std::string grids;
  for (std::size_t i = 0; i < d.grid_sizes.size(); ++i)
    grids += (i ? "," : "") + std::to_string(d.grid_sizes[i]);
  return {
      {"tau", fmt_double(d.tau)},
      {"omega_s", fmt_double(d.omega_s)},
      {"omega_c", fmt_double(d.omega_c)},
      {"lambda", fmt_double(d.lambda)},
      {"mu", fmt_double(d.mu)},
      {"alpha", fmt_double(d.alpha)},
      {"beta", fmt_double(d.beta)},
      {"logit_temperature", fmt_double(d.logit_temperature)},
      {"grid_sizes", grids},
      {"enable_sfd", d.enable_sfd ? "true" : "false"},
      {"enable_sld", d.enable_sld ? "true" : "false"},
      {"adaptive_logit_weights", d.adaptive_logit_weights ? "true" : "false"},
      {"threshold_mode", d.threshold_mode == ThresholdMode::Relative ? "relative" : "absolute"},
      {"kl_direction", d.kl_direction == KlDirection::Forward ? "forward" : "reverse"},
      {"image_size", std::to_string(s.image_size)},
      {"num_classes", std::to_string(s.num_classes)},
      {"min_objects", std::to_string(s.min_objects)},
      {"max_objects", std::to_string(s.max_objects)},
      {"min_object_size", std::to_string(s.min_object_size)},
      {"max_object_size", std::to_string(s.max_object_size)},
      {"epochs", std::to_string(t.epochs)},
      {"teacher_epochs", std::to_string(t.teacher_epochs)},
      {"learning_rate", fmt_double(t.learning_rate)},
      {"teacher_learning_rate", fmt_double(t.teacher_learning_rate)},
      {"momentum", fmt_double(t.momentum)},
      {"weight_decay", fmt_double(t.weight_decay)},
      {"batch_size", std::to_string(t.batch_size)},
      {"clip_norm", fmt_double(t.clip_norm)},
      {"seed", std::to_string(t.seed)},
      {"dataset_seed", std::to_string(t.dataset_seed)},
      {"train_scenes", std::to_string(t.train_scenes)},
      {"test_scenes", std::to_string(t.test_scenes)},
  };
}

inline std::string to_config_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace samkd
