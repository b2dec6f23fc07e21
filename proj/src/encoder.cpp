#include "ftlab/encoder.hpp"

#include <cmath>

#include "ftlab/rng.hpp"

namespace ftlab {

namespace {

Tensor gauss_init(const std::vector<std::size_t>& shape, double stddev,
                  std::uint64_t seed, const std::string& name) {
  Rng rng(Rng::derive(seed, Rng::hash_str(name)));
  Tensor t(shape);
  for (double& v : t.values) v = rng.normal(0.0, stddev);
  return t;
}

std::string block_prefix(std::size_t b) { return "block" + std::to_string(b); }

}  // namespace

void EncoderConfig::validate() const {
  check(d_model % heads == 0, "encoder config: d_model not divisible by heads");
  check(d_ff >= d_model, "encoder config: d_ff < d_model");
  check(conv_stride >= 1, "encoder config: conv stride < 1");
  check(conv_blocks >= 1 && blocks >= 1, "encoder config: empty stack");
}

Encoder Encoder::init(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Encoder e;
  e.cfg = cfg;
  for (std::size_t i = 0; i < cfg.conv_blocks; ++i) {
    std::size_t cin = (i == 0) ? cfg.d_in : cfg.d_model;
    std::string p = "frontend.conv" + std::to_string(i);
    e.params.add(p + ".w",
                 gauss_init({cfg.conv_kernel * cin, cfg.d_model},
                            1.0 / std::sqrt(double(cfg.conv_kernel * cin)),
                            seed, p + ".w"));
    e.params.add(p + ".b", Tensor({cfg.d_model}));
  }
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    std::string p = block_prefix(b);
    Tensor ones({cfg.d_model});
    for (double& v : ones.values) v = 1.0;
    e.params.add(p + ".ln1.g", ones);
    e.params.add(p + ".ln1.b", Tensor({cfg.d_model}));
    e.params.add(p + ".ln2.g", ones);
    e.params.add(p + ".ln2.b", Tensor({cfg.d_model}));
    double s = 1.0 / std::sqrt(double(cfg.d_model));
    for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
      e.params.add(p + w,
                   gauss_init({cfg.d_model, cfg.d_model}, s, seed, p + w));
    e.params.add(p + ".ffn.w1",
                 gauss_init({cfg.d_model, cfg.d_ff}, s, seed, p + ".ffn.w1"));
    e.params.add(p + ".ffn.b1", Tensor({cfg.d_ff}));
    e.params.add(p + ".ffn.w2",
                 gauss_init({cfg.d_ff, cfg.d_model},
                            1.0 / std::sqrt(double(cfg.d_ff)), seed,
                            p + ".ffn.w2"));
    e.params.add(p + ".ffn.b2", Tensor({cfg.d_model}));
  }
  if (cfg.mask_embedding)
    e.params.add("mask_embed",
                 gauss_init({cfg.d_model}, 0.1, seed, "mask_embed"));
  return e;
}

Encoder Encoder::from_params(const EncoderConfig& cfg, ParamStore params,
                             const AdaptationSpec& adapt) {
  cfg.validate();
  Encoder e;
  e.cfg = cfg;
  e.params = std::move(params);
  e.adapt = adapt;
  return e;
}

std::size_t Encoder::out_frames(std::size_t T) const {
  std::size_t t = T;
  for (std::size_t i = 0; i < cfg.conv_blocks; ++i)
    t = (t + cfg.conv_stride - 1) / cfg.conv_stride;
  return t;
}

Tensor sinusoidal_positions(std::size_t T, std::size_t d) {
  Tensor p({T, d});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < d; ++c) {
      double freq = std::pow(10000.0, -double(c - (c % 2)) / double(d));
      p.at(t, c) = (c % 2 == 0) ? std::sin(double(t) * freq)
                                : std::cos(double(t) * freq);
    }
  return p;
}

Encoder::ForwardNodes Encoder::forward(Tape& tape, const Tensor& features,
                                       const std::vector<char>* mask,
                                       bool as_constants) const {
  check(features.shape.size() == 2, "encode: features must be [T x d_in]");
  check(features.rows() >= 1, "encode: zero-length input");
  check(features.cols() == cfg.d_in,
        "encode: d_in mismatch, got " + std::to_string(features.cols()) +
            " expected " + std::to_string(cfg.d_in));

  auto leaf = [&](const std::string& name) {
    const Tensor& t = params.get(name);
    return as_constants ? tape.constant(t) : tape.param(t, name);
  };

  int x = tape.constant(features);
  for (std::size_t i = 0; i < cfg.conv_blocks; ++i) {
    std::string p = "frontend.conv" + std::to_string(i);
    x = tape.gelu(tape.conv1d(x, leaf(p + ".w"), leaf(p + ".b"),
                              cfg.conv_kernel, cfg.conv_stride));
  }
  ForwardNodes out;
  out.frontend = x;

  std::size_t Tp = tape.val(x).rows();
  if (mask) {
    check(cfg.mask_embedding, "encode: mask given but no mask embedding");
    x = tape.mask_rows(x, *mask, leaf("mask_embed"));
  }
  x = tape.add(x, tape.constant(sinusoidal_positions(Tp, cfg.d_model)));

  std::size_t dh = cfg.d_model / cfg.heads;
  bool lora = adapt.kind == AdaptKind::lora;
  bool adapters = adapt.kind == AdaptKind::adapter;

  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    std::string p = block_prefix(b);
    // attention sublayer, pre-norm
    int a = tape.layer_norm(x, leaf(p + ".ln1.g"), leaf(p + ".ln1.b"));
    int q = tape.matmul(a, leaf(p + ".attn.wq"));
    int k = tape.matmul(a, leaf(p + ".attn.wk"));
    int v = tape.matmul(a, leaf(p + ".attn.wv"));
    std::vector<int> heads_out;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      int qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
      int kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
      int vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
      int scores = tape.scale(tape.matmul(qh, tape.transpose(kh)),
                              1.0 / std::sqrt(double(dh)));
      heads_out.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    int attn = tape.matmul(tape.concat_cols(heads_out), leaf(p + ".attn.wo"));
    x = tape.add(x, attn);

    // feed-forward sublayer, pre-norm; LoRA replaces both projections with
    // W0 + B*A (W0 frozen).
    int f = tape.layer_norm(x, leaf(p + ".ln2.g"), leaf(p + ".ln2.b"));
    int w1 = leaf(p + ".ffn.w1");
    int w2 = leaf(p + ".ffn.w2");
    if (lora) {
      w1 = tape.add(w1, tape.matmul(leaf(p + ".ffn.w1.lora_b"),
                                    leaf(p + ".ffn.w1.lora_a")));
      w2 = tape.add(w2, tape.matmul(leaf(p + ".ffn.w2.lora_b"),
                                    leaf(p + ".ffn.w2.lora_a")));
    }
    int h1 = tape.gelu(tape.add_row(tape.matmul(f, w1), leaf(p + ".ffn.b1")));
    int h2 = tape.add_row(tape.matmul(h1, w2), leaf(p + ".ffn.b2"));
    x = tape.add(x, h2);

    if (adapters) {
      int down = tape.relu(tape.add_row(tape.matmul(x, leaf(p + ".adapter.down.w")),
                                        leaf(p + ".adapter.down.b")));
      int up = tape.add_row(tape.matmul(down, leaf(p + ".adapter.up.w")),
                            leaf(p + ".adapter.up.b"));
      x = tape.add(x, up);
    }
    out.blocks.push_back(x);
  }
  return out;
}

std::vector<Tensor> Encoder::encode(const Tensor& features) const {
  Tape tape;
  ForwardNodes n = forward(tape, features, nullptr, /*as_constants=*/true);
  std::vector<Tensor> out;
  out.push_back(tape.val(n.frontend));
  for (int b : n.blocks) out.push_back(tape.val(b));
  return out;
}

void Encoder::inject_lora(const AdaptationSpec& spec, std::uint64_t seed) {
  check(spec.kind == AdaptKind::lora, "inject_lora: spec kind is not lora");
  check(adapt.kind == AdaptKind::none, "inject_lora: encoder already adapted");
  std::size_t r = spec.rank;
  check(r >= 1 && r <= std::min(cfg.d_model, cfg.d_ff),
        "inject_lora: rank " + std::to_string(r) + " exceeds matrix dims");
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    std::string p = block_prefix(b);
    // W1: d x d_ff -> B [d x r], A [r x d_ff]; W2: d_ff x d.
    params.add(p + ".ffn.w1.lora_b", Tensor({cfg.d_model, r}));
    params.add(p + ".ffn.w1.lora_a",
               gauss_init({r, cfg.d_ff}, 0.01, seed, p + ".ffn.w1.lora_a"));
    params.add(p + ".ffn.w2.lora_b", Tensor({cfg.d_ff, r}));
    params.add(p + ".ffn.w2.lora_a",
               gauss_init({r, cfg.d_model}, 0.01, seed, p + ".ffn.w2.lora_a"));
    params.set_trainable(p + ".ffn.w1", false);
    params.set_trainable(p + ".ffn.w2", false);
  }
  adapt = spec;
}

void Encoder::inject_adapters(const AdaptationSpec& spec, std::uint64_t seed) {
  check(spec.kind == AdaptKind::adapter,
        "inject_adapters: spec kind is not adapter");
  check(adapt.kind == AdaptKind::none,
        "inject_adapters: encoder already adapted");
  std::size_t m = spec.bottleneck;
  check(m >= 1, "inject_adapters: bottleneck must be >= 1");
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    std::string p = block_prefix(b);
    params.add(p + ".adapter.down.w",
               gauss_init({cfg.d_model, m},
                          1.0 / std::sqrt(double(cfg.d_model)), seed,
                          p + ".adapter.down.w"));
    params.add(p + ".adapter.down.b", Tensor({m}));
    // zero-init up projection: exact identity at injection
    params.add(p + ".adapter.up.w", Tensor({m, cfg.d_model}));
    params.add(p + ".adapter.up.b", Tensor({cfg.d_model}));
  }
  adapt = spec;
}

ParamPartition Encoder::partition(const std::string& name) {
  if (name.rfind("frontend.", 0) == 0) return ParamPartition::FrontEnd;
  if (name == "mask_embed") return ParamPartition::MaskEmbed;
  if (name.find(".lora_") != std::string::npos ||
      name.find(".adapter.") != std::string::npos)
    return ParamPartition::Adaptation;
  if (name.rfind("block", 0) == 0) return ParamPartition::Transformer;
  return ParamPartition::Other;
}

std::vector<std::string> Encoder::partition_names(ParamPartition p) const {
  std::vector<std::string> out;
  for (const auto& name : params.names())
    if (partition(name) == p) out.push_back(name);
  return out;
}

int weighted_layer_sum(Tape& tape, int weights, const std::vector<int>& layers) {
  check(tape.val(weights).numel() == layers.size(),
        "weighted_layer_sum: weight count != layer count");
  return tape.convex_combine(tape.softmax_rows(weights), layers);
}

}  // namespace ftlab
