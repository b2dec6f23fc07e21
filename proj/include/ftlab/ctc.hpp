#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftlab/graph.hpp"
#include "ftlab/param_store.hpp"
#include "ftlab/vocab.hpp"

namespace ftlab {

// Downstream head: two dense layers d -> H -> |V|+1 with ReLU between,
// log-softmax per frame. Parameters live under "head.*" in the store.
struct HeadConfig {
  std::size_t d_in = 32;
  std::size_t hidden = 64;  // paper-scale value 1024 also accepted
  std::size_t n_out = 9;    // |V| + blank
};

void init_head(ParamStore& params, const HeadConfig& cfg, std::uint64_t seed);

// latents: [T' x d] node; returns [T' x n_out] log-probabilities.
int head_forward(Tape& tape, const ParamStore& params, const HeadConfig& cfg,
                 int latents, bool as_constants = false);

// CTC negative log-likelihood over log-probs [T' x (|V|+1)]. Targets are
// class indices in 1..|V| (0 is the blank). Differentiable w.r.t. log-probs.
int ctc_loss(Tape& tape, int log_probs, const std::vector<std::size_t>& target,
             std::size_t blank = 0);

// Number of frames needed for any valid alignment: |y| + adjacent repeats.
std::size_t ctc_min_frames(const std::vector<std::size_t>& target);

// Per-frame argmax (ties toward the lowest index), collapse adjacent
// repeats, drop blanks.
std::vector<std::size_t> greedy_decode(const Tensor& log_probs,
                                       std::size_t blank = 0);

enum class ErrorUnit { word, character };

// Total unit-level Levenshtein distance / total reference length.
double error_rate(const std::vector<std::string>& hypotheses,
                  const std::vector<std::string>& references, ErrorUnit unit);

std::size_t levenshtein(const std::vector<std::string>& a,
                        const std::vector<std::string>& b);

}  // namespace ftlab
