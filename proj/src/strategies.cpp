#include "ftlab/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ftlab/config_json.hpp"

namespace ftlab {

namespace fs = std::filesystem;

std::string strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::frozen: return "frozen";
    case StrategyKind::full_ft: return "full_ft";
    case StrategyKind::fixed_cnn: return "fixed_cnn";
    case StrategyKind::two_phase: return "two_phase";
    case StrategyKind::lora: return "lora";
    case StrategyKind::adapters: return "adapters";
    case StrategyKind::ewc: return "ewc";
    case StrategyKind::replay: return "replay";
  }
  return "unknown";
}

StrategyKind strategy_from_name(const std::string& name) {
  for (StrategyKind k :
       {StrategyKind::frozen, StrategyKind::full_ft, StrategyKind::fixed_cnn,
        StrategyKind::two_phase, StrategyKind::lora, StrategyKind::adapters,
        StrategyKind::ewc, StrategyKind::replay})
    if (strategy_name(k) == name) return k;
  check(false, "unknown strategy '" + name + "'");
  return StrategyKind::full_ft;
}

FisherInfo estimate_fisher(const Encoder& pretrained,
                           const TeacherState& teacher, const Corpus& corpus,
                           std::size_t n_samples, const MaskSpec& mask_spec,
                           std::uint64_t seed) {
  check(!corpus.empty(), "estimate_fisher: empty corpus");
  check(n_samples >= 1, "estimate_fisher: n_samples must be >= 1");
  FisherInfo fisher;
  fisher.sample_count = n_samples;
  fisher.corpus_id = corpus.utts.front().domain;
  for (const auto& name : pretrained.params.names())
    fisher.values.emplace(name, Tensor(pretrained.params.get(name).shape));

  Rng rng(Rng::derive(seed, 0xF15E));
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Utterance& u = corpus.utts[rng.below(corpus.size())];
    std::size_t Tp = pretrained.out_frames(u.features.rows());
    auto mask = sample_mask(Tp, mask_spec, rng);
    Tape tape;
    int loss = ssl_loss_graph(tape, pretrained, teacher, u.features, mask);
    tape.backward(loss);
    for (auto& [name, g] : tape.param_grads()) {
      Tensor& f = fisher.values.at(name);
      for (std::size_t i = 0; i < g.values.size(); ++i)
        f.values[i] += g.values[i] * g.values[i];
    }
  }
  for (auto& [name, f] : fisher.values)
    for (double& v : f.values) v /= double(n_samples);
  return fisher;
}

double ewc_penalty(const ParamStore& theta, const ParamStore& theta_star,
                   const FisherInfo& fisher, double lambda) {
  check(lambda >= 0.0, "ewc_penalty: lambda must be >= 0");
  double acc = 0.0;
  for (const auto& [name, f] : fisher.values) {
    const Tensor& t = theta.get(name);
    const Tensor& t0 = theta_star.get(name);
    check(t.shape == t0.shape && t.shape == f.shape,
          "ewc_penalty: shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      double d = t.values[i] - t0.values[i];
      acc += 0.5 * lambda * f.values[i] * d * d;
    }
  }
  return acc;
}

int ewc_penalty_graph(Tape& tape, const std::map<std::string, int>& param_leaves,
                      const ParamStore& theta_star, const FisherInfo& fisher,
                      double lambda) {
  double acc = 0.0;
  std::vector<int> parents;
  std::vector<std::string> names;
  for (const auto& [name, leaf] : param_leaves) {
    check(fisher.values.count(name), "ewc_penalty: no Fisher entry for '" + name + "'");
    const Tensor& t = tape.val(leaf);
    const Tensor& t0 = theta_star.get(name);
    const Tensor& f = fisher.values.at(name);
    check(t.shape == t0.shape && t.shape == f.shape,
          "ewc_penalty: shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      double d = t.values[i] - t0.values[i];
      acc += 0.5 * lambda * f.values[i] * d * d;
    }
    parents.push_back(leaf);
    names.push_back(name);
  }
  return tape.custom(
      Tensor::scalar(acc), parents,
      [names, &theta_star, &fisher, lambda](Tape& t, int self) {
        auto& n = t.node(self);
        double up = n.grad.values[0];
        for (std::size_t p = 0; p < n.parents.size(); ++p) {
          const Tensor& th = t.val(n.parents[p]);
          const Tensor& t0 = theta_star.get(names[p]);
          const Tensor& f = fisher.values.at(names[p]);
          Tensor g(th.shape);
          for (std::size_t i = 0; i < g.values.size(); ++i)
            g.values[i] = up * lambda * f.values[i] * (th.values[i] - t0.values[i]);
          t.accum_grad(n.parents[p], g);
        }
      },
      "ewc_penalty");
}

bool replay_gate(TrainState& state, double p_replay) {
  check(state.epoch >= 1, "replay_gate: epochs are 1-indexed");
  if (state.epoch == 1) return false;
  return state.replay_rng.uniform() < p_replay;
}

std::vector<std::string> trainable_set(const Encoder& model,
                                       const StrategyConfig& strategy,
                                       std::size_t epoch) {
  std::vector<std::string> head, frontend, transformer, adaptation, mask_embed;
  bool has_layer_weights = false;
  for (const auto& name : model.params.names()) {
    switch (Encoder::partition(name)) {
      case ParamPartition::FrontEnd: frontend.push_back(name); break;
      case ParamPartition::Transformer: transformer.push_back(name); break;
      case ParamPartition::Adaptation: adaptation.push_back(name); break;
      case ParamPartition::MaskEmbed: mask_embed.push_back(name); break;
      case ParamPartition::Other:
        if (name == "layer_weights")
          has_layer_weights = true;
        else
          head.push_back(name);
        break;
    }
  }
  auto all_params = [&]() {
    std::vector<std::string> out = head;
    out.insert(out.end(), frontend.begin(), frontend.end());
    out.insert(out.end(), transformer.begin(), transformer.end());
    out.insert(out.end(), mask_embed.begin(), mask_embed.end());
    if (has_layer_weights) out.push_back("layer_weights");
    return out;
  };

  switch (strategy.kind) {
    case StrategyKind::frozen: {
      check(has_layer_weights, "frozen strategy: model has no layer weights");
      std::vector<std::string> out = head;
      out.push_back("layer_weights");
      return out;
    }
    case StrategyKind::full_ft:
      return all_params();
    case StrategyKind::fixed_cnn: {
      std::vector<std::string> out = head;
      out.insert(out.end(), transformer.begin(), transformer.end());
      out.insert(out.end(), mask_embed.begin(), mask_embed.end());
      return out;
    }
    case StrategyKind::two_phase:
      if (epoch <= strategy.freeze_epochs) return head;
      return all_params();
    case StrategyKind::lora: {
      check(model.adapt.kind == AdaptKind::lora,
            "lora strategy: encoder has no LoRA attachments");
      std::vector<std::string> out = head;
      out.insert(out.end(), adaptation.begin(), adaptation.end());
      return out;
    }
    case StrategyKind::adapters: {
      check(model.adapt.kind == AdaptKind::adapter,
            "adapters strategy: encoder has no adapter attachments");
      std::vector<std::string> out = head;
      out.insert(out.end(), adaptation.begin(), adaptation.end());
      return out;
    }
    case StrategyKind::ewc:
    case StrategyKind::replay:
      return all_params();
  }
  return {};
}

namespace {

// Mean CTC loss node over a downstream batch.
int downstream_loss_graph(Tape& tape, const Encoder& model,
                          const HeadConfig& head_cfg, const Vocabulary& vocab,
                          const std::vector<const Utterance*>& batch,
                          bool use_layer_weights) {
  check(!batch.empty(), "downstream batch is empty");
  int acc = -1;
  for (const Utterance* u : batch) {
    auto nodes = model.forward(tape, u->features);
    int latents;
    if (use_layer_weights) {
      int lw = tape.param(model.params.get("layer_weights"), "layer_weights");
      latents = weighted_layer_sum(tape, lw, nodes.layers());
    } else {
      latents = nodes.blocks.back();
    }
    int logp = head_forward(tape, model.params, head_cfg, latents);
    int loss = ctc_loss(tape, logp, vocab.encode(u->text));
    acc = acc < 0 ? loss : tape.add(acc, loss);
  }
  return tape.scale(acc, 1.0 / double(batch.size()));
}

}  // namespace

LossBreakdown finetune_step(Encoder& model, const HeadConfig& head_cfg,
                            const Vocabulary& vocab,
                            const std::vector<const Utterance*>& ds_batch,
                            const std::vector<const Utterance*>& replay_batch,
                            const StrategyConfig& strategy, TrainState& state,
                            const MaskSpec& replay_mask, Rng& mask_rng) {
  Tape tape;
  bool frozen = strategy.kind == StrategyKind::frozen;
  int l_ds = downstream_loss_graph(tape, model, head_cfg, vocab, ds_batch, frozen);
  int total = l_ds;

  LossBreakdown out;
  out.ds = tape.val(l_ds).values[0];

  if (strategy.kind == StrategyKind::ewc) {
    check(state.fisher.has_value(), "ewc strategy: FisherInfo missing");
    std::map<std::string, int> leaves;
    for (const auto& [name, f] : state.fisher->values)
      leaves.emplace(name, tape.param(model.params.get(name), name));
    int pen = ewc_penalty_graph(tape, leaves, state.theta_star, *state.fisher,
                                strategy.lambda);
    out.ewc = tape.val(pen).values[0];
    total = tape.add(total, pen);
  }

  if (!replay_batch.empty()) {
    check(strategy.kind == StrategyKind::replay,
          "replay batch given to a non-replay strategy");
    int acc = -1;
    for (const Utterance* u : replay_batch) {
      std::size_t Tp = model.out_frames(u->features.rows());
      auto mask = sample_mask(Tp, replay_mask, mask_rng);
      int l = ssl_loss_graph(tape, model, state.teacher, u->features, mask);
      acc = acc < 0 ? l : tape.add(acc, l);
    }
    acc = tape.scale(acc, 1.0 / double(replay_batch.size()));
    out.ssl_replay = tape.val(acc).values[0];
    total = tape.add(total, acc);
  }

  out.total = tape.val(total).values[0];
  check(std::isfinite(out.total), "finetune_step: non-finite loss");

  tape.backward(total);
  auto grads = tape.param_grads();
  model.params.set_trainable_only(trainable_set(model, strategy, state.epoch));
  for (const auto& name : model.params.trainable_names())
    grads.try_emplace(name, Tensor(model.params.get(name).shape));
  adam_step(model.params, grads, state.opt);
  return out;
}

EvalResult evaluate(const Encoder& model, const HeadConfig& head_cfg,
                    const Vocabulary& vocab, const Corpus& corpus,
                    bool use_layer_weights) {
  std::vector<std::string> hyps, refs;
  for (const Utterance& u : corpus.utts) {
    Tape tape;
    auto nodes = model.forward(tape, u.features, nullptr, /*as_constants=*/true);
    int latents;
    if (use_layer_weights) {
      int lw = tape.constant(model.params.get("layer_weights"));
      latents = weighted_layer_sum(tape, lw, nodes.layers());
    } else {
      latents = nodes.blocks.back();
    }
    int logp = head_forward(tape, model.params, head_cfg, latents,
                            /*as_constants=*/true);
    hyps.push_back(vocab.decode(greedy_decode(tape.val(logp))));
    refs.push_back(u.text);
  }
  EvalResult r;
  r.cer = error_rate(hyps, refs, ErrorUnit::character);
  r.wer = error_rate(hyps, refs, ErrorUnit::word);
  return r;
}

FinetuneResult finetune(const Encoder& pretrained, const TeacherState& teacher,
                        const std::optional<FisherInfo>& fisher,
                        const Corpus& train, const Corpus& valid,
                        const Corpus* replay_corpus, const Vocabulary& vocab,
                        const FinetuneConfig& fc) {
  fc.strategy.validate();
  check(!train.empty(), "finetune: empty training corpus");
  const StrategyConfig& st = fc.strategy;
  if (st.kind == StrategyKind::replay) {
    if (st.replay_source == ReplaySource::pretrain_corpus)
      check(replay_corpus != nullptr && !replay_corpus->empty(),
            "replay strategy: replay corpus required");
  }
  if (st.kind == StrategyKind::ewc)
    check(fisher.has_value(), "ewc strategy: FisherInfo required");

  FinetuneResult result;
  result.head = fc.head;
  result.strategy = st;

  Encoder model = pretrained;
  if (st.kind == StrategyKind::lora)
    model.inject_lora({AdaptKind::lora, st.rank, st.bottleneck},
                      Rng::derive(fc.seed, 0x10AA));
  if (st.kind == StrategyKind::adapters)
    model.inject_adapters({AdaptKind::adapter, st.rank, st.bottleneck},
                          Rng::derive(fc.seed, 0xADA9));
  init_head(model.params, fc.head, Rng::derive(fc.seed, 0x4EAD));
  if (st.kind == StrategyKind::frozen)
    model.params.add("layer_weights", Tensor({1, model.cfg.blocks + 1}));

  TrainState state;
  state.theta_star = pretrained.params;
  state.fisher = fisher;
  state.teacher = teacher;
  state.opt.cfg = fc.adam;
  state.replay_rng = Rng(Rng::derive(fc.seed, 0x9E91A7));

  const Corpus& replay_pool =
      (st.kind == StrategyKind::replay &&
       st.replay_source == ReplaySource::finetune_corpus)
          ? train
          : (replay_corpus ? *replay_corpus : train);

  Rng data_rng(Rng::derive(fc.seed, 0xDA7A));
  Rng mask_rng(Rng::derive(fc.seed, 0x3A5C));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  if (!fc.run_dir.empty()) {
    fs::create_directories(fc.run_dir);
    nlohmann::json meta = {{"run_id", fc.run_id},
                           {"strategy", st},
                           {"seed", fc.seed},
                           {"epochs", fc.epochs},
                           {"encoder", model.cfg},
                           {"head", fc.head},
                           {"replay_mask", fc.replay_mask}};
    std::ofstream os(fs::path(fc.run_dir) / "run_meta.json");
    os << meta.dump(2) << "\n";
  }

  for (std::size_t epoch = 1; epoch <= fc.epochs; ++epoch) {
    state.epoch = epoch;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[data_rng.below(i)]);

    double loss_acc = 0.0;
    std::size_t steps = 0, fired = 0, gate_evals = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += fc.batch_size) {
      std::size_t b1 = std::min(b0 + fc.batch_size, order.size());
      std::vector<const Utterance*> ds_batch;
      for (std::size_t i = b0; i < b1; ++i)
        ds_batch.push_back(&train.utts[order[i]]);

      std::vector<const Utterance*> replay_batch;
      if (st.kind == StrategyKind::replay) {
        if (epoch >= 2) ++gate_evals;
        if (replay_gate(state, st.p_replay)) {
          ++fired;
          for (std::size_t i = b0; i < b1; ++i)
            replay_batch.push_back(
                &replay_pool.utts[state.replay_rng.below(replay_pool.size())]);
        }
      }
      LossBreakdown lb = finetune_step(model, fc.head, vocab, ds_batch,
                                       replay_batch, st, state, fc.replay_mask,
                                       mask_rng);
      loss_acc += lb.total;
      ++steps;
    }
    result.replay_fired += fired;
    result.replay_steps += gate_evals;

    auto row = [&](const std::string& split, const std::string& metric,
                   double value) {
      result.metrics.push_back({fc.run_id, strategy_name(st.kind), fc.seed,
                                epoch, split, metric, value});
    };
    row("train", "loss", loss_acc / double(steps));
    if (st.kind == StrategyKind::replay)
      row("train", "replay_rate",
          gate_evals ? double(fired) / double(gate_evals) : 0.0);
    if (!valid.empty()) {
      EvalResult ev = evaluate(model, fc.head, vocab, valid,
                               st.kind == StrategyKind::frozen);
      row("valid", "cer", ev.cer);
      row("valid", "wer", ev.wer);
    }

    if (!fc.run_dir.empty()) {
      std::string ckpt =
          (fs::path(fc.run_dir) / ("epoch_" + std::to_string(epoch) + ".ckpt"))
              .string();
      model.params.save(ckpt);
      result.checkpoints.push_back(ckpt);
    }
  }

  if (!fc.run_dir.empty())
    write_metrics_csv((fs::path(fc.run_dir) / "metrics.csv").string(),
                      result.metrics);
  result.model = std::move(model);
  return result;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows) {
  std::ofstream os(path);
  check(bool(os), "cannot write metrics CSV '" + path + "'");
  os << "run_id,strategy,seed,epoch,split,metric,value\n";
  char buf[64];
  for (const MetricRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    os << r.run_id << "," << r.strategy << "," << r.seed << "," << r.epoch
       << "," << r.split << "," << r.metric << "," << buf << "\n";
  }
}

}  // namespace ftlab
