#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftlab/ssl.hpp"
#include "ftlab/strategies.hpp"

namespace ftlab {

// Corpus roles produced by the data-generation step. Pretraining draws from
// the in-domain generator with one half of the character inventory; the
// fine-tuning task uses the other half, so fine-tuning is a genuine task
// switch. OOD corpora share prototypes but shift noise and channel.
struct DataGenConfig {
  std::string dir;  // where the corpora live
  bool generate = true;
  std::size_t pretrain_n = 2000;
  std::size_t pretrain_valid_n = 100;
  std::size_t ft_train_n = 200;
  std::size_t ft_valid_n = 50;
  std::size_t test_n = 100;
  std::size_t probe_n = 50;
  std::size_t len_min = 5;
  std::size_t len_max = 15;
  std::uint64_t seed = 7;
};

struct ExperimentConfig {
  std::string out_dir;
  Vocabulary vocab = Vocabulary::defaults();
  EncoderConfig encoder;
  std::size_t head_hidden = 64;
  MaskSpec mask;
  DataGenConfig data;
  std::size_t pretrain_epochs = 30;
  std::size_t pretrain_batch = 8;
  double pretrain_lr = 1e-3;
  double teacher_decay = 0.999;
  std::uint64_t pretrain_seed = 1;
  std::size_t finetune_epochs = 20;
  std::size_t finetune_batch = 8;
  double finetune_lr = 1e-3;
  std::vector<StrategyConfig> strategies;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t fisher_samples = 200;
  std::uint64_t probe_seed = 97;
  bool overwrite = false;
};

ExperimentConfig load_experiment_config(const std::string& path);
// Rejects strategy/input inconsistencies before any training starts; error
// messages name the offending field.
void validate_experiment(const ExperimentConfig& cfg);

struct ExperimentData {
  Corpus pretrain_train, pretrain_valid;
  Corpus ft_train, ft_valid;
  Corpus test_id, test_ood;
  Corpus probe_id, probe_ood;
};

// Generates (or loads, when generate=false or data already on disk) the
// eight corpora of an experiment.
ExperimentData prepare_data(const ExperimentConfig& cfg);

// Pretrains theta* or loads a cached one from out_dir/pretrain.
PretrainResult prepare_pretrained(const ExperimentConfig& cfg,
                                  const ExperimentData& data);

std::string run_id_for(const StrategyConfig& st, std::uint64_t seed);

struct RunOutputs {
  std::string run_dir;
  FinetuneResult result;
};

// Full pipeline: data -> pretrain (or load) -> Fisher (if needed) ->
// fine-tune per (strategy, seed) -> probe series per run. Deterministic
// given the config; identical CSVs on rerun.
std::vector<RunOutputs> run_experiment(const ExperimentConfig& cfg);

struct SweepSpec {
  ExperimentConfig base;
  std::string hyperparameter;  // "r" | "lambda" | "p_R"
  std::vector<double> values;
};

SweepSpec load_sweep_spec(const std::string& path);
void run_sweep(const SweepSpec& spec);

}  // namespace ftlab
