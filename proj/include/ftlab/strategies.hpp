#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ftlab/ctc.hpp"
#include "ftlab/data.hpp"
#include "ftlab/encoder.hpp"
#include "ftlab/optim.hpp"
#include "ftlab/ssl.hpp"

namespace ftlab {

enum class StrategyKind {
  frozen,
  full_ft,
  fixed_cnn,
  two_phase,
  lora,
  adapters,
  ewc,
  replay
};

std::string strategy_name(StrategyKind k);
StrategyKind strategy_from_name(const std::string& name);

enum class ReplaySource { pretrain_corpus, finetune_corpus };

struct StrategyConfig {
  StrategyKind kind = StrategyKind::full_ft;
  double lambda = 50.0;        // EWC weight
  std::size_t rank = 16;       // LoRA
  std::size_t bottleneck = 8;  // adapters
  double p_replay = 0.25;
  std::size_t freeze_epochs = 3;  // two-phase
  ReplaySource replay_source = ReplaySource::pretrain_corpus;

  void validate() const {
    check(lambda >= 0.0, "strategy: lambda must be >= 0");
    check(p_replay >= 0.0 && p_replay <= 1.0, "strategy: p_R out of [0,1]");
  }
};

// Diagonal empirical Fisher of the SSL loss at theta*, over the pretrained
// encoder parameters.
struct FisherInfo {
  std::map<std::string, Tensor> values;
  std::string corpus_id;
  std::size_t sample_count = 0;
};

FisherInfo estimate_fisher(const Encoder& pretrained,
                           const TeacherState& teacher, const Corpus& corpus,
                           std::size_t n_samples, const MaskSpec& mask,
                           std::uint64_t seed);

// sum_i (lambda/2) * F_i * (theta_i - theta*_i)^2 over the names in F.
double ewc_penalty(const ParamStore& theta, const ParamStore& theta_star,
                   const FisherInfo& fisher, double lambda);

// Same penalty as a tape node. param_leaves maps name -> leaf id already on
// the tape; the backward is the closed form lambda * F * (theta - theta*).
int ewc_penalty_graph(Tape& tape, const std::map<std::string, int>& param_leaves,
                      const ParamStore& theta_star, const FisherInfo& fisher,
                      double lambda);

// Per-run mutable training state. theta_star stays frozen for the whole
// fine-tuning; the replay RNG is independent of the data-order RNG.
struct TrainState {
  std::size_t epoch = 1;  // 1-indexed
  Rng replay_rng{0};
  ParamStore theta_star;
  std::optional<FisherInfo> fisher;
  TeacherState teacher;
  OptimizerState opt;
};

// False on epoch 1 always; Bernoulli(p_R) afterwards.
bool replay_gate(TrainState& state, double p_replay);

// Names trainable under the strategy at the given (1-indexed) epoch. The
// model store holds encoder parameters plus head.* (and layer_weights for
// the frozen strategy).
std::vector<std::string> trainable_set(const Encoder& model,
                                       const StrategyConfig& strategy,
                                       std::size_t epoch);

struct LossBreakdown {
  double ds = 0.0;
  double ewc = 0.0;
  double ssl_replay = 0.0;
  double total = 0.0;
};

// One optimizer step: CTC loss on the downstream batch, plus the EWC term
// (ewc strategy) and the SSL loss on the replay batch (when the gate fired).
// Parameters outside the trainable set are untouched bit-for-bit.
LossBreakdown finetune_step(Encoder& model, const HeadConfig& head_cfg,
                            const Vocabulary& vocab,
                            const std::vector<const Utterance*>& ds_batch,
                            const std::vector<const Utterance*>& replay_batch,
                            const StrategyConfig& strategy, TrainState& state,
                            const MaskSpec& replay_mask, Rng& mask_rng);

struct FinetuneConfig {
  StrategyConfig strategy;
  HeadConfig head;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  AdamConfig adam;
  MaskSpec replay_mask;
  std::uint64_t seed = 1;
  std::string run_dir;  // empty: no checkpoints / CSV written
  std::string run_id = "run";
};

struct MetricRow {
  std::string run_id;
  std::string strategy;
  std::uint64_t seed;
  std::size_t epoch;
  std::string split;
  std::string metric;
  double value;
};

struct FinetuneResult {
  Encoder model;  // encoder + head (+ layer_weights) parameters
  HeadConfig head;
  StrategyConfig strategy;
  std::vector<MetricRow> metrics;
  std::vector<std::string> checkpoints;  // one per epoch
  std::size_t replay_fired = 0;
  std::size_t replay_steps = 0;  // gate evaluations on epochs >= 2
};

FinetuneResult finetune(const Encoder& pretrained, const TeacherState& teacher,
                        const std::optional<FisherInfo>& fisher,
                        const Corpus& train, const Corpus& valid,
                        const Corpus* replay_corpus, const Vocabulary& vocab,
                        const FinetuneConfig& fc);

struct EvalResult {
  double cer = 0.0;
  double wer = 0.0;
};

// Greedy decoding + error rates. use_layer_weights selects the weighted
// layer sum as head input (frozen strategy); otherwise the final block.
EvalResult evaluate(const Encoder& model, const HeadConfig& head_cfg,
                    const Vocabulary& vocab, const Corpus& corpus,
                    bool use_layer_weights);

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows);

}  // namespace ftlab
