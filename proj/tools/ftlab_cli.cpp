// Experiment harness CLI: data generation, pretraining, fine-tuning under
// the eight strategies, forgetting probes, hyperparameter sweeps, reports.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ftlab/config_json.hpp"
#include "ftlab/experiment.hpp"
#include "ftlab/probe.hpp"
#include "ftlab/report.hpp"

namespace fs = std::filesystem;
using namespace ftlab;

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning fine-tuning lab for tiny SSL encoders"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed_override = 0;
  bool have_seed = false, overwrite = false;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--out", out_dir, "override output directory");
  auto* seed_opt = app.add_option("--seed", seed_override,
                                  "run only this fine-tuning seed");
  app.add_flag("--overwrite", overwrite, "regenerate cached data/checkpoints");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpora");
  auto* pre = app.add_subcommand("pretrain", "pretrain the encoder (or reuse cache)");
  auto* ft = app.add_subcommand(
      "finetune", "full experiment: data, pretrain, fine-tune, probe");
  auto* probe_cmd = app.add_subcommand(
      "probe", "recompute probe series for completed runs");
  auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sweep (sweep spec JSON)");
  auto* report_cmd = app.add_subcommand("report", "aggregate run directories");
  std::vector<std::string> report_dirs;
  report_cmd->add_option("dirs", report_dirs, "run directories");

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();
  CLI11_PARSE(app, argc, argv);
  have_seed = seed_opt->count() > 0;

  try {
    auto load_cfg = [&]() {
      check(!config_path.empty(), "--config is required for this subcommand");
      ExperimentConfig cfg = load_experiment_config(config_path);
      if (!out_dir.empty()) {
        cfg.out_dir = out_dir;
        cfg.data.dir = (fs::path(out_dir) / "data").string();
      }
      if (have_seed) cfg.seeds = {seed_override};
      cfg.overwrite = overwrite;
      return cfg;
    };

    if (gen->parsed()) {
      ExperimentConfig cfg = load_cfg();
      validate_experiment(cfg);
      ExperimentData d = prepare_data(cfg);
      std::cout << "corpora ready under " << cfg.data.dir << " ("
                << d.pretrain_train.size() << " pretrain utterances)\n";
    } else if (pre->parsed()) {
      ExperimentConfig cfg = load_cfg();
      validate_experiment(cfg);
      ExperimentData d = prepare_data(cfg);
      PretrainResult r = prepare_pretrained(cfg, d);
      std::cout << "pretrained encoder at " << cfg.out_dir << "/pretrain ("
                << r.encoder.params.total_values() << " parameters)\n";
    } else if (ft->parsed()) {
      ExperimentConfig cfg = load_cfg();
      auto runs = run_experiment(cfg);
      for (const auto& r : runs) std::cout << "completed " << r.run_dir << "\n";
    } else if (probe_cmd->parsed()) {
      ExperimentConfig cfg = load_cfg();
      validate_experiment(cfg);
      ExperimentData d = prepare_data(cfg);
      PretrainResult pr = prepare_pretrained(cfg, d);
      fs::path runs_dir = fs::path(cfg.out_dir) / "runs";
      check(fs::exists(runs_dir), "probe: no runs under " + cfg.out_dir);
      for (const auto& entry : fs::directory_iterator(runs_dir)) {
        if (!entry.is_directory()) continue;
        auto reports = probe_series(
            entry.path().string(), pr.teacher,
            {{"probe_id", &d.probe_id}, {"probe_ood", &d.probe_ood}}, cfg.mask,
            cfg.probe_seed);
        write_probe_csv((entry.path() / "probe.csv").string(), reports);
        write_probe_svg((entry.path() / "probe.svg").string(), reports);
        std::cout << "probed " << entry.path().string() << "\n";
      }
    } else if (sweep_cmd->parsed()) {
      check(!config_path.empty(), "--config is required for sweep");
      SweepSpec spec = load_sweep_spec(config_path);
      if (!out_dir.empty()) {
        spec.base.out_dir = out_dir;
        spec.base.data.dir = (fs::path(out_dir) / "data").string();
      }
      spec.base.overwrite = overwrite;
      run_sweep(spec);
      std::cout << "sweep outputs under " << spec.base.out_dir << "/sweep\n";
    } else if (report_cmd->parsed()) {
      check(!report_dirs.empty(), "report: give at least one run directory");
      std::string out = out_dir.empty() ? "report" : out_dir;
      make_report(report_dirs, out);
      std::cout << "report written to " << out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
