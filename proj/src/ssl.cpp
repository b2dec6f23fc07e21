#include "ftlab/ssl.hpp"

#include <algorithm>
#include <cmath>

namespace ftlab {

TeacherState make_teacher(const Encoder& student, double decay) {
  check(decay >= 0.0 && decay <= 1.0, "teacher decay must be in [0,1]");
  TeacherState t;
  t.cfg = student.cfg;
  t.shadow = student.params;
  t.decay = decay;
  for (const auto& name : t.shadow.names()) t.shadow.set_trainable(name, false);
  return t;
}

void ema_update(TeacherState& teacher, const Encoder& student) {
  double tau = teacher.decay;
  for (const auto& name : teacher.shadow.names()) {
    Tensor& s = teacher.shadow.get(name);
    const Tensor& p = student.params.get(name);
    check(s.shape == p.shape, "ema_update: shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < s.values.size(); ++i)
      s.values[i] = tau * s.values[i] + (1.0 - tau) * p.values[i];
  }
}

std::vector<char> sample_mask(std::size_t frames, const MaskSpec& spec,
                              Rng& rng) {
  check(frames >= 1, "sample_mask: need at least one frame");
  check(spec.p_start >= 0.0 && spec.p_start <= 1.0,
        "sample_mask: p_start out of [0,1]");
  check(spec.span >= 1, "sample_mask: span must be >= 1");
  std::vector<char> mask(frames, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    if (rng.uniform() < spec.p_start)
      for (std::size_t k = 0; k < spec.span && t + k < frames; ++k)
        mask[t + k] = 1;
  }
  if (std::find(mask.begin(), mask.end(), char(1)) == mask.end()) {
    std::size_t max_start = frames > spec.span ? frames - spec.span : 0;
    std::size_t start = std::size_t(rng.below(max_start + 1));
    for (std::size_t k = 0; k < spec.span && start + k < frames; ++k)
      mask[start + k] = 1;
  }
  return mask;
}

int ssl_loss_graph(Tape& tape, const Encoder& student,
                   const TeacherState& teacher, const Tensor& features,
                   const std::vector<char>& mask, bool student_constant) {
  Encoder tenc = teacher.as_encoder();
  check(tenc.cfg.d_model == student.cfg.d_model &&
            tenc.cfg.d_in == student.cfg.d_in,
        "ssl_loss: student/teacher config mismatch");
  // teacher targets: final block output on the unmasked input
  Tensor target;
  {
    Tape ttape;
    auto tn = tenc.forward(ttape, features, nullptr, /*as_constants=*/true);
    target = ttape.val(tn.blocks.back());
  }
  check(target.rows() == mask.size(), "ssl_loss: mask/frame count mismatch");
  auto nodes = student.forward(tape, features, &mask, student_constant);
  return tape.masked_mse(nodes.blocks.back(), target, mask);
}

double ssl_loss_value(const Encoder& student, const TeacherState& teacher,
                      const Tensor& features, const std::vector<char>& mask) {
  Tape tape;
  int loss = ssl_loss_graph(tape, student, teacher, features, mask,
                            /*student_constant=*/true);
  return tape.val(loss).values[0];
}

double ssl_corpus_loss(const Encoder& student, const TeacherState& teacher,
                       const Corpus& corpus, const MaskSpec& spec,
                       std::uint64_t mask_seed) {
  check(!corpus.empty(), "ssl_corpus_loss: empty corpus");
  double acc = 0.0;
  for (const Utterance& u : corpus.utts) {
    Rng rng(Rng::derive(mask_seed, Rng::hash_str(u.id)));
    std::size_t Tp = student.out_frames(u.features.rows());
    auto mask = sample_mask(Tp, spec, rng);
    acc += ssl_loss_value(student, teacher, u.features, mask);
  }
  return acc / double(corpus.size());
}

PretrainResult pretrain(const EncoderConfig& cfg, const Corpus& train,
                        const Corpus& valid, const PretrainConfig& pc) {
  check(!train.empty(), "pretrain: empty corpus");
  Encoder enc = Encoder::init(cfg, pc.seed);
  TeacherState teacher = make_teacher(enc, pc.teacher_decay);
  OptimizerState opt;
  opt.cfg = pc.adam;

  PretrainResult result;
  Rng run_rng(Rng::derive(pc.seed, 0x55E7));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= pc.epochs; ++epoch) {
    // Fisher-Yates with the run RNG; deterministic given the seed
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[run_rng.below(i)]);

    double train_acc = 0.0;
    std::size_t seen = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += pc.batch_size) {
      std::size_t b1 = std::min(b0 + pc.batch_size, order.size());
      std::map<std::string, Tensor> grads;
      double batch_loss = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        const Utterance& u = train.utts[order[i]];
        std::size_t Tp = enc.out_frames(u.features.rows());
        auto mask = sample_mask(Tp, pc.mask, run_rng);
        Tape tape;
        int loss = ssl_loss_graph(tape, enc, teacher, u.features, mask);
        tape.backward(loss);
        batch_loss += tape.val(loss).values[0];
        for (auto& [name, g] : tape.param_grads()) {
          auto it = grads.find(name);
          if (it == grads.end())
            grads.emplace(name, g);
          else
            for (std::size_t k = 0; k < g.values.size(); ++k)
              it->second.values[k] += g.values[k];
        }
      }
      double inv = 1.0 / double(b1 - b0);
      for (auto& [name, g] : grads)
        for (double& v : g.values) v *= inv;
      // parameters untouched by this batch keep zero gradients
      for (const auto& name : enc.params.trainable_names())
        grads.try_emplace(name, Tensor(enc.params.get(name).shape));
      adam_step(enc.params, grads, opt);
      ema_update(teacher, enc);
      train_acc += batch_loss;
      seen += b1 - b0;
    }
    result.log.push_back({epoch, "train", train_acc / double(seen)});
    if (!valid.empty()) {
      double vl = ssl_corpus_loss(enc, teacher, valid, pc.mask,
                                  Rng::derive(pc.seed, 0x7A11D));
      result.log.push_back({epoch, "valid", vl});
    }
  }
  result.encoder = std::move(enc);
  result.teacher = std::move(teacher);
  return result;
}

}  // namespace ftlab
