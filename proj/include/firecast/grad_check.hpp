#pragma once
// Finite-difference verification of reverse-mode gradients.

#include <functional>

#include "firecast/param_store.hpp"
#include "firecast/tensor.hpp"

namespace firecast::nn {

// The loss function must rebuild its forward pass on the supplied tape from
// the current parameter values and return a scalar tensor. It is invoked
// repeatedly with perturbed parameters, so any internal randomness must be
// re-seeded identically on every call.
using LossFn = std::function<Tensor(Tape&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  long long probes = 0;
};

// Compares reverse-mode gradients against central differences on up to
// `probes_per_tensor` coordinates of every parameter tensor. Relative error
// is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, double eps = 1e-5,
                           int probes_per_tensor = 5, uint64_t seed = 0);

}  // namespace firecast::nn
