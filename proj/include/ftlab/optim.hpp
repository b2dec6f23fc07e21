#pragma once

#include <map>
#include <string>

#include "ftlab/param_store.hpp"

namespace ftlab {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter first/second moment accumulators plus the step counter.
struct OptimizerState {
  AdamConfig cfg;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t step = 0;
};

// Standard Adam with bias correction. Updates trainable parameters only;
// non-trainable entries are left bit-identical (their moments are not even
// allocated). Grads must cover every trainable parameter.
void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
               OptimizerState& state);

}  // namespace ftlab
