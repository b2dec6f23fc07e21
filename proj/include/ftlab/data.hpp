#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftlab/tensor.hpp"
#include "ftlab/vocab.hpp"

namespace ftlab {

struct Utterance {
  std::string id;
  Tensor features;  // [T x d_in]
  std::string text;
  std::string domain;
};

struct Corpus {
  std::vector<Utterance> utts;
  bool empty() const { return utts.empty(); }
  std::size_t size() const { return utts.size(); }
};

// Controls the synthetic "speech-like" generator. A domain is a per-character
// prototype dictionary plus corruption settings (noise, channel scaling,
// speaker offsets, tempo). Shifting those settings yields the OOD analog.
struct DomainSpec {
  std::uint64_t seed = 1;            // prototype dictionary seed
  std::string name = "indomain";
  std::size_t d_in = 16;
  std::size_t proto_min = 3;         // prototype frames per character
  std::size_t proto_max = 6;
  double proto_margin = 2.0;         // min pairwise L2 between mean frames
  double noise_sigma = 0.05;
  std::vector<double> channel;       // per-dim scale; empty = identity
  double speaker_sigma = 0.1;
  double tempo_min = 1.4;
  double tempo_max = 2.0;
  std::vector<double> char_weights;  // sampling weights; empty = uniform

  static DomainSpec indomain();
  static DomainSpec ood();
};

// Prototype sequences per character, derived deterministically from the spec
// seed. Exposed so tests can compare against the noise-free path.
std::vector<Tensor> build_prototypes(const DomainSpec& spec,
                                     const Vocabulary& vocab);

Corpus generate_corpus(const DomainSpec& spec, const Vocabulary& vocab,
                       std::size_t n_utterances, std::size_t len_min,
                       std::size_t len_max, std::uint64_t rng_seed);

// Manifest (JSON lines) + per-utterance raw little-endian float32 payloads.
void save_corpus(const Corpus& corpus, const std::string& directory,
                 bool overwrite = false);
Corpus load_corpus(const std::string& manifest_path, const Vocabulary& vocab);

}  // namespace ftlab
