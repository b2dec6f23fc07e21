#include "ftlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ftlab/rng.hpp"

namespace ftlab {

namespace {

double eval_value(const LossFn& f, const ParamStore& params) {
  Tape tape;
  int loss = f(tape, params);
  check(tape.val(loss).numel() == 1, "finite_diff_check: loss not scalar");
  return tape.val(loss).values[0];
}

}  // namespace

double finite_diff_check(const LossFn& f, const ParamStore& params,
                         const std::vector<std::string>& names, double h,
                         std::size_t coords_per_param, std::uint64_t seed) {
  check(h > 0.0, "finite_diff_check: h must be positive");
  // Determinism guard: two evaluations at identical inputs must agree.
  double v0 = eval_value(f, params);
  double v1 = eval_value(f, params);
  check(v0 == v1, "finite_diff_check: f is not deterministic");

  Tape tape;
  int loss = f(tape, params);
  tape.backward(loss);
  auto grads = tape.param_grads();

  Rng rng(seed);
  ParamStore work = params;
  double max_err = 0.0;
  for (const std::string& name : names) {
    const Tensor& p = params.get(name);
    std::size_t n = p.numel();
    std::size_t count = std::min(coords_per_param, n);
    for (std::size_t s = 0; s < count; ++s) {
      std::size_t i = (n == count) ? s : std::size_t(rng.below(n));
      double orig = work.get(name).values[i];
      work.get(name).values[i] = orig + h;
      double fp = eval_value(f, work);
      work.get(name).values[i] = orig - h;
      double fm = eval_value(f, work);
      work.get(name).values[i] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      double analytic = 0.0;
      auto git = grads.find(name);
      if (git != grads.end()) analytic = git->second.values[i];
      double diff = std::abs(analytic - numeric);
      double err = diff <= 1e-9 ? 0.0 : diff / std::max(std::abs(analytic), 1e-8);
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace ftlab
