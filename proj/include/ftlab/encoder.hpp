#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftlab/graph.hpp"
#include "ftlab/param_store.hpp"

namespace ftlab {

struct EncoderConfig {
  std::size_t d_in = 16;
  std::size_t conv_blocks = 2;
  std::size_t conv_kernel = 3;
  std::size_t conv_stride = 2;
  std::size_t blocks = 3;  // transformer blocks
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  bool mask_embedding = true;

  std::size_t stride_product() const {
    std::size_t p = 1;
    for (std::size_t i = 0; i < conv_blocks; ++i) p *= conv_stride;
    return p;
  }
  void validate() const;
};

enum class AdaptKind { none, lora, adapter };

struct AdaptationSpec {
  AdaptKind kind = AdaptKind::none;
  std::size_t rank = 16;        // LoRA
  std::size_t bottleneck = 8;   // adapters
};

enum class ParamPartition { FrontEnd, Transformer, Adaptation, MaskEmbed, Other };

// Miniature self-supervised backbone. Parameters live in a ParamStore whose
// names encode the partition (frontend.* / blockN.* / mask_embed / *lora* /
// *adapter*). The forward pass exposes the front-end output and every
// transformer block output.
class Encoder {
 public:
  EncoderConfig cfg;
  ParamStore params;
  AdaptationSpec adapt;

  static Encoder init(const EncoderConfig& cfg, std::uint64_t seed);
  static Encoder from_params(const EncoderConfig& cfg, ParamStore params,
                             const AdaptationSpec& adapt = {});

  std::size_t out_frames(std::size_t T) const;

  struct ForwardNodes {
    int frontend = -1;
    std::vector<int> blocks;
    std::vector<int> layers() const {
      std::vector<int> out = {frontend};
      out.insert(out.end(), blocks.begin(), blocks.end());
      return out;
    }
  };

  // Records the forward pass on the tape. When mask is given, masked
  // front-end frames are replaced by the learned mask embedding before the
  // transformer stack. With as_constants the parameters enter the tape as
  // constant leaves (no gradients flow), which is how teacher passes run.
  ForwardNodes forward(Tape& tape, const Tensor& features,
                       const std::vector<char>* mask = nullptr,
                       bool as_constants = false) const;

  // Plain evaluation: front-end output followed by each block output.
  std::vector<Tensor> encode(const Tensor& features) const;

  void inject_lora(const AdaptationSpec& spec, std::uint64_t seed);
  void inject_adapters(const AdaptationSpec& spec, std::uint64_t seed);

  static ParamPartition partition(const std::string& name);
  std::vector<std::string> partition_names(ParamPartition p) const;
};

// softmax(weights) combination of exposed layer outputs; weights is a raw
// (pre-softmax) [1 x L] node.
int weighted_layer_sum(Tape& tape, int weights, const std::vector<int>& layers);

// Fixed sinusoidal positional table, [T x d].
Tensor sinusoidal_positions(std::size_t T, std::size_t d);

}  // namespace ftlab
