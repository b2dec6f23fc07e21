#pragma once

#include <json.hpp>

#include "ftlab/ctc.hpp"
#include "ftlab/encoder.hpp"
#include "ftlab/ssl.hpp"
#include "ftlab/strategies.hpp"

// JSON (de)serialization for the config structs shared by the run metadata
// files and the CLI. Missing fields keep their defaults.

namespace ftlab {

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"d_in", c.d_in},         {"conv_blocks", c.conv_blocks},
       {"conv_kernel", c.conv_kernel}, {"conv_stride", c.conv_stride},
       {"blocks", c.blocks},     {"d_model", c.d_model},
       {"heads", c.heads},       {"d_ff", c.d_ff},
       {"mask_embedding", c.mask_embedding}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.d_in = j.value("d_in", c.d_in);
  c.conv_blocks = j.value("conv_blocks", c.conv_blocks);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.conv_stride = j.value("conv_stride", c.conv_stride);
  c.blocks = j.value("blocks", c.blocks);
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.mask_embedding = j.value("mask_embedding", c.mask_embedding);
}

inline void to_json(nlohmann::json& j, const HeadConfig& c) {
  j = {{"d_in", c.d_in}, {"hidden", c.hidden}, {"n_out", c.n_out}};
}

inline void from_json(const nlohmann::json& j, HeadConfig& c) {
  c.d_in = j.value("d_in", c.d_in);
  c.hidden = j.value("hidden", c.hidden);
  c.n_out = j.value("n_out", c.n_out);
}

inline void to_json(nlohmann::json& j, const MaskSpec& c) {
  j = {{"p_start", c.p_start}, {"span", c.span}};
}

inline void from_json(const nlohmann::json& j, MaskSpec& c) {
  c.p_start = j.value("p_start", c.p_start);
  c.span = j.value("span", c.span);
}

inline void to_json(nlohmann::json& j, const StrategyConfig& c) {
  j = {{"kind", strategy_name(c.kind)},
       {"lambda", c.lambda},
       {"r", c.rank},
       {"m", c.bottleneck},
       {"p_R", c.p_replay},
       {"freeze_epochs", c.freeze_epochs},
       {"replay_source", c.replay_source == ReplaySource::pretrain_corpus
                             ? "pretrain_corpus"
                             : "finetune_corpus"}};
}

inline void from_json(const nlohmann::json& j, StrategyConfig& c) {
  check(j.contains("kind"), "strategy config: missing 'kind'");
  c.kind = strategy_from_name(j.at("kind").get<std::string>());
  c.lambda = j.value("lambda", c.lambda);
  c.rank = j.value("r", c.rank);
  c.bottleneck = j.value("m", c.bottleneck);
  c.p_replay = j.value("p_R", c.p_replay);
  c.freeze_epochs = j.value("freeze_epochs", c.freeze_epochs);
  std::string src = j.value("replay_source", std::string("pretrain_corpus"));
  if (src == "pretrain_corpus") {
    c.replay_source = ReplaySource::pretrain_corpus;
  } else if (src == "finetune_corpus") {
    c.replay_source = ReplaySource::finetune_corpus;
  } else {
    check(false, "strategy config: bad replay_source '" + src + "'");
  }
  c.validate();
}

}  // namespace ftlab
