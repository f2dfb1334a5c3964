// samkd: command-line front end for teacher training, distillation,
// ablation suites, evaluation and heatmap export.
//
// Config precedence: command-line flag > --config file > built-in default.
// Every command writes the effective config to <out>/effective.cfg.
// On failure a single line "error=<class> message=<text>" goes to stderr.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "samkd/checkpoint.hpp"
#include "samkd/config.hpp"
#include "samkd/experiment.hpp"
#include "samkd/heatmap.hpp"

namespace fs = std::filesystem;
using namespace samkd;
using Real = double;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir = "samkd_out";
  std::optional<std::string> seed, epochs, scales, alpha, beta, lambda, mu, omega_s, omega_c, tau,
      threshold_mode;
  bool no_sfd = false;
  bool no_sld = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--out", f.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "model/run seed");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--scales", f.scales, "pyramid grid sizes, e.g. 1,2,4");
  cmd->add_flag("--no-sfd", f.no_sfd, "disable feature distillation");
  cmd->add_flag("--no-sld", f.no_sld, "disable logit distillation");
  cmd->add_option("--alpha", f.alpha, "feature loss weight");
  cmd->add_option("--beta", f.beta, "logit loss weight");
  cmd->add_option("--lambda", f.lambda, "spatial reconstruction weight");
  cmd->add_option("--mu", f.mu, "channel reconstruction weight");
  cmd->add_option("--omega-s", f.omega_s, "spatial mask threshold");
  cmd->add_option("--omega-c", f.omega_c, "channel mask threshold");
  cmd->add_option("--tau", f.tau, "attention temperature");
  cmd->add_option("--threshold-mode", f.threshold_mode, "relative or absolute")
      ->check(CLI::IsMember({"relative", "absolute"}));
}

/// Defaults, then the config file, then explicit flags.
ExperimentConfig effective_config(const CommonFlags& f, const std::string& epochs_key) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) apply_config_file(cfg, f.config_path);
  auto set = [&](const char* key, const std::optional<std::string>& v) {
    if (v) apply_setting(cfg, key, *v);
  };
  set("seed", f.seed);
  set(epochs_key.c_str(), f.epochs);
  set("grid_sizes", f.scales);
  set("alpha", f.alpha);
  set("beta", f.beta);
  set("lambda", f.lambda);
  set("mu", f.mu);
  set("omega_s", f.omega_s);
  set("omega_c", f.omega_c);
  set("tau", f.tau);
  set("threshold_mode", f.threshold_mode);
  if (f.no_sfd) cfg.distill.enable_sfd = false;
  if (f.no_sld) cfg.distill.enable_sld = false;
  cfg.validate();
  return cfg;
}

std::string prepare_out(const CommonFlags& f, const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(f.out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory '" + f.out_dir + "': " + ec.message());
  const std::string path = (fs::path(f.out_dir) / "effective.cfg").string();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << to_config_text(cfg);
  return f.out_dir;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "bad seed '" + item + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::Config, "seed list is empty");
  return out;
}

/// Loads a checkpoint into the architecture named by its role metadata.
ToyDetector<Real> load_model(const std::string& path, const ExperimentConfig& cfg) {
  const auto j = read_json(path);
  const std::string role = j.value("/metadata/role"_json_pointer, std::string("student"));
  ToyDetector<Real> model(role == "teacher" ? teacher_arch(cfg) : student_arch(cfg), 0);
  restore_params(j, model.params());
  return model;
}

int cmd_train_teacher(const CommonFlags& f) {
  const auto cfg = effective_config(f, "teacher_epochs");
  const auto out = prepare_out(f, cfg);
  const auto data = make_data(cfg);
  TrainHooks hooks{&std::cout, {}};
  auto run = run_teacher<Real>(cfg, data, hooks);
  save_checkpoint(join(out, "teacher.ckpt.json"), run.model.params(), cfg, "teacher",
                  cfg.train.seed);
  write_metric_log(join(out, "teacher_log.jsonl"), run.log);
  std::cout << "teacher checkpoint: " << join(out, "teacher.ckpt.json") << "\n";
  return 0;
}

int cmd_distill(const CommonFlags& f, const std::string& teacher_path, bool baseline) {
  const auto cfg = effective_config(f, "epochs");
  const auto out = prepare_out(f, cfg);
  const auto data = make_data(cfg);
  ToyDetector<Real> teacher(teacher_arch(cfg), 0);
  if (!baseline) {
    if (teacher_path.empty()) fail(ErrorKind::Config, "distill: --teacher is required");
    restore_params(read_json(teacher_path), teacher.params());
  }
  TrainHooks hooks{&std::cout, {}};
  auto run = run_student<Real>(cfg, teacher, data, !baseline, hooks);
  auto params = run.model.params();
  for (auto* p : run.distiller.params()) params.push_back(p);
  save_checkpoint(join(out, "student.ckpt.json"), params, cfg, "student", cfg.train.seed);
  write_metric_log(join(out, "student_log.jsonl"), run.log);
  std::cout << "student checkpoint: " << join(out, "student.ckpt.json") << "\n";
  return 0;
}

int cmd_ablate(const CommonFlags& f, const std::string& suite_name, const std::string& teacher_path,
               const std::string& seeds_text) {
  const auto cfg = effective_config(f, "epochs");
  const auto suite = make_suite(suite_name, cfg.distill);  // validates the name first
  const auto seeds = parse_seeds(seeds_text);
  const auto out = prepare_out(f, cfg);
  const auto data = make_data(cfg);
  ToyDetector<Real> teacher(teacher_arch(cfg), 0);
  if (teacher_path.empty()) {
    std::cout << "training teacher (" << cfg.train.teacher_epochs << " epochs)\n";
    teacher = run_teacher<Real>(cfg, data).model;
  } else {
    restore_params(read_json(teacher_path), teacher.params());
  }
  SuiteRunner<Real> runner(cfg, teacher, data, &std::cout);
  const auto result = runner.run(suite, seeds);
  const auto table = format_table(result);
  std::cout << table;
  std::ofstream(join(out, "ablate_" + suite_name + ".txt")) << table;
  write_json(join(out, "ablate_" + suite_name + ".json"), to_json(result));
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& ckpt_path) {
  const auto cfg = effective_config(f, "epochs");
  const auto out = prepare_out(f, cfg);
  const auto data = make_data(cfg);
  const auto model = load_model(ckpt_path, cfg);
  const auto m = evaluate(model, data.test);
  const nlohmann::json j = {{"checkpoint", ckpt_path}, {"mAP", m.map50},   {"AP_s", m.ap_small},
                            {"AP_m", m.ap_medium},     {"AP_l", m.ap_large}, {"AR", m.mean_recall}};
  std::cout << j.dump(2) << "\n";
  write_json(join(out, "eval.json"), j);
  return 0;
}

int cmd_export_heatmaps(const CommonFlags& f, const std::string& ckpt_path,
                        const std::vector<int>& scene_ids) {
  const auto cfg = effective_config(f, "epochs");
  const auto out = prepare_out(f, cfg);
  if (scene_ids.empty()) return 0;
  const auto model = load_model(ckpt_path, cfg);
  const auto test = generate_dataset(cfg.train.test_scenes, cfg.train.dataset_seed + 1, cfg.scene);
  for (int id : scene_ids) {
    if (id < 0 || id >= static_cast<int>(test.size())) {
      std::cerr << "warning: scene " << id << " not in test split (0.." << test.size() - 1
                << "), skipped\n";
      continue;
    }
    const auto files = export_scene_heatmaps(model, test[id], cfg.distill.grid_sizes,
                                             static_cast<Real>(cfg.distill.tau),
                                             join(out, "scene" + std::to_string(id)));
    for (const auto& p : files) std::cout << p << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"samkd - spatial-aware adaptive masking knowledge distillation (toy scale)"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string teacher_path, ckpt_path, seeds_text = "0,1,2", suite;
  std::vector<int> scene_ids;
  bool baseline = false;

  auto* tt = app.add_subcommand("train-teacher", "train the teacher detector");
  add_common(tt, flags);

  auto* ds = app.add_subcommand("distill", "train a student against a teacher checkpoint");
  add_common(ds, flags);
  ds->add_option("--teacher", teacher_path, "teacher checkpoint");
  ds->add_flag("--baseline", baseline, "train the student without distillation");

  auto* ab = app.add_subcommand("ablate", "run an ablation suite over several seeds");
  add_common(ab, flags);
  ab->add_option("suite", suite, "components|scales|logit|lambda-mu|thresholds|alpha-beta")
      ->required();
  ab->add_option("--teacher", teacher_path, "teacher checkpoint (trained if omitted)");
  ab->add_option("--seeds", seeds_text, "comma-separated seed list")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(ev, flags);
  ev->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")->required();

  auto* hm = app.add_subcommand("export-heatmaps", "write attention heatmaps for test scenes");
  add_common(hm, flags);
  hm->add_option("--checkpoint", ckpt_path, "checkpoint")->required();
  hm->add_option("--scenes", scene_ids, "test scene ids")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error=usage message=" << e.what() << "\n";
    return 2;
  }

  try {
    if (*tt) return cmd_train_teacher(flags);
    if (*ds) return cmd_distill(flags, teacher_path, baseline);
    if (*ab) return cmd_ablate(flags, suite, teacher_path, seeds_text);
    if (*ev) return cmd_eval(flags, ckpt_path);
    if (*hm) return cmd_export_heatmaps(flags, ckpt_path, scene_ids);
  } catch (const Error& e) {
    std::cerr << "error=" << to_string(e.kind()) << " message=" << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error=internal message=" << e.what() << "\n";
    return 1;
  }
  return 1;
}
