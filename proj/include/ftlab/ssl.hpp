#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ftlab/data.hpp"
#include "ftlab/encoder.hpp"
#include "ftlab/optim.hpp"
#include "ftlab/rng.hpp"

namespace ftlab {

struct MaskSpec {
  double p_start = 0.15;  // per-frame span start probability
  std::size_t span = 3;   // frames per span
};

// EMA copy of the student encoder. Never trainable; produces the regression
// targets for masked positions.
struct TeacherState {
  EncoderConfig cfg;
  ParamStore shadow;
  double decay = 0.999;

  Encoder as_encoder() const {
    return Encoder::from_params(cfg, shadow, AdaptationSpec{});
  }
};

TeacherState make_teacher(const Encoder& student, double decay);

// shadow <- decay * shadow + (1 - decay) * student, per parameter.
void ema_update(TeacherState& teacher, const Encoder& student);

// Each frame starts a span with p_start; spans union; at least one frame is
// always masked (one span is forced when the draw comes up empty).
std::vector<char> sample_mask(std::size_t frames, const MaskSpec& spec, Rng& rng);

// Teacher runs unmasked, student sees masked front-end frames replaced by
// the learned mask embedding; MSE over masked positions only. Returns the
// loss node on the tape (student parameters enter as trainable leaves unless
// student_constant).
int ssl_loss_graph(Tape& tape, const Encoder& student,
                   const TeacherState& teacher, const Tensor& features,
                   const std::vector<char>& mask, bool student_constant = false);

double ssl_loss_value(const Encoder& student, const TeacherState& teacher,
                      const Tensor& features, const std::vector<char>& mask);

struct PretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  AdamConfig adam;
  MaskSpec mask;
  double teacher_decay = 0.999;
  std::uint64_t seed = 1;
};

struct SslLogRow {
  std::size_t epoch;
  std::string split;  // "train" | "valid"
  double ssl_loss;
};

struct PretrainResult {
  Encoder encoder;      // theta*
  TeacherState teacher; // frozen at pretraining end
  std::vector<SslLogRow> log;
};

PretrainResult pretrain(const EncoderConfig& cfg, const Corpus& train,
                        const Corpus& valid, const PretrainConfig& pc);

// Mean SSL loss over a corpus with fixed per-utterance masks derived from
// mask_seed and the utterance id.
double ssl_corpus_loss(const Encoder& student, const TeacherState& teacher,
                       const Corpus& corpus, const MaskSpec& spec,
                       std::uint64_t mask_seed);

}  // namespace ftlab
