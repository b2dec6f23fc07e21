#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ftlab/graph.hpp"
#include "ftlab/param_store.hpp"

namespace ftlab {

// Records a loss over the given parameters and returns the loss node id.
// Must be deterministic: two recordings at identical parameters produce the
// same value.
using LossFn = std::function<int(Tape&, const ParamStore&)>;

// Central-difference gradient check. Samples up to coords_per_param
// coordinates of each named parameter and returns the max relative error
// |analytic - numeric| / max(|analytic|, 1e-8). Differences below 1e-9 in
// absolute value count as exact agreement (both sides numerically zero).
double finite_diff_check(const LossFn& f, const ParamStore& params,
                         const std::vector<std::string>& names, double h,
                         std::size_t coords_per_param, std::uint64_t seed);

}  // namespace ftlab
