#include "ftlab/optim.hpp"

#include <cmath>

namespace ftlab {

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
               OptimizerState& state) {
  state.step += 1;
  const AdamConfig& c = state.cfg;
  double bc1 = 1.0 - std::pow(c.beta1, double(state.step));
  double bc2 = 1.0 - std::pow(c.beta2, double(state.step));
  for (const std::string& name : params.trainable_names()) {
    auto git = grads.find(name);
    check(git != grads.end(), "adam_step: missing gradient for '" + name + "'");
    Tensor& p = params.get(name);
    const Tensor& g = git->second;
    check(g.shape == p.shape, "adam_step: grad shape mismatch for '" + name +
                                  "' " + shape_str(g) + " vs " + shape_str(p));
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape)).first->second;
    check(m.shape == p.shape && v.shape == p.shape,
          "adam_step: moment shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      m.values[i] = c.beta1 * m.values[i] + (1.0 - c.beta1) * g.values[i];
      v.values[i] = c.beta2 * v.values[i] + (1.0 - c.beta2) * g.values[i] * g.values[i];
      double mhat = m.values[i] / bc1;
      double vhat = v.values[i] / bc2;
      p.values[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
    check(p.all_finite(), "adam_step: non-finite parameter '" + name + "'");
  }
}

}  // namespace ftlab
