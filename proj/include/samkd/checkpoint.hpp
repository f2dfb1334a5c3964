#pragma once

// Self-describing JSON checkpoints and JSONL metric logs.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samkd/config.hpp"
#include "samkd/error.hpp"
#include "samkd/nn.hpp"
#include "samkd/trainer.hpp"

namespace samkd {

inline constexpr const char* kCheckpointFormat = "samkd-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
  return j;
}

/// Builds the checkpoint document: format tag, metadata (role, seed,
/// timestamp), the effective configuration and every named parameter.
template <typename T>
nlohmann::json make_checkpoint(const ParamList<T>& params, const ExperimentConfig& cfg,
                               const std::string& role, std::uint64_t seed) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["metadata"] = {{"role", role}, {"seed", seed}, {"timestamp", utc_timestamp()}};
  j["config"] = config_json(cfg);
  auto& ps = j["params"] = nlohmann::json::array();
  for (const auto* p : params) {
    std::vector<double> values(p->value.begin(), p->value.end());
    ps.push_back({{"name", p->name}, {"shape", p->shape}, {"values", values}});
  }
  return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << j.dump() << "\n";
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, "malformed JSON in '" + path + "': " + e.what());
  }
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamList<T>& params,
                     const ExperimentConfig& cfg, const std::string& role, std::uint64_t seed) {
  write_json(path, make_checkpoint(params, cfg, role, seed));
}

/// Copies parameter values from a checkpoint document into `params`, matching
/// by name. Every parameter must be present with the same shape.
template <typename T>
void restore_params(const nlohmann::json& ckpt, const ParamList<T>& params) {
  if (ckpt.value("format", "") != kCheckpointFormat)
    fail(ErrorKind::Incompatible, "not a samkd checkpoint");
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& p : ckpt.at("params")) by_name[p.at("name").get<std::string>()] = &p;
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) fail(ErrorKind::Incompatible, "checkpoint lacks parameter " + p->name);
    const auto& entry = *it->second;
    if (entry.at("shape").template get<std::vector<int>>() != p->shape)
      fail(ErrorKind::Incompatible, "shape mismatch for parameter " + p->name);
    const auto values = entry.at("values").template get<std::vector<double>>();
    if (values.size() != p->size())
      fail(ErrorKind::Incompatible, "size mismatch for parameter " + p->name);
    for (std::size_t i = 0; i < values.size(); ++i) p->value[i] = static_cast<T>(values[i]);
  }
}

template <typename T>
void load_checkpoint(const std::string& path, const ParamList<T>& params) {
  restore_params(read_json(path), params);
}

/// Checkpoint without its timestamp, for reproducibility comparisons.
inline nlohmann::json strip_timestamp(nlohmann::json ckpt) {
  if (ckpt.contains("metadata")) ckpt["metadata"].erase("timestamp");
  return ckpt;
}

inline nlohmann::json epoch_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"l_det", r.l_det},
          {"l_feat", r.l_feat},
          {"l_logit", r.l_logit},
          {"total", r.total},
          {"mAP", r.metrics.map50},
          {"AP_s", r.metrics.ap_small},
          {"AP_m", r.metrics.ap_medium},
          {"AP_l", r.metrics.ap_large},
          {"AR", r.metrics.mean_recall}};
}

inline std::string metric_log_jsonl(const MetricLog& log) {
  std::string out;
  for (const auto& r : log) out += epoch_json(r).dump() + "\n";
  return out;
}

inline void write_metric_log(const std::string& path, const MetricLog& log) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << metric_log_jsonl(log);
}

}  // namespace samkd
