#include "firecast/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace firecast::nn {

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params, double eps,
                           int probes_per_tensor, uint64_t seed) {
  params.zero_grads();
  Tape tape;
  Tensor loss = loss_fn(tape);
  tape.backward(loss, 1.0);

  // Snapshot the reverse-mode gradients before perturbing anything.
  std::vector<std::vector<double>> g_ad;
  g_ad.reserve(params.size());
  for (const auto& name : params.names()) g_ad.push_back(*params.get(name).grad);

  auto eval = [&] {
    Tape t;
    return loss_fn(t).value();
  };

  GradCheckReport report;
  Rng rng = Rng::stream(seed, 0x6fd0u);
  size_t tensor_idx = 0;
  for (const auto& name : params.names()) {
    Tensor& t = params.get(name);
    const auto n = static_cast<size_t>(t.numel());
    std::vector<size_t> coords;
    if (static_cast<long long>(n) <= probes_per_tensor) {
      for (size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < probes_per_tensor; ++i) coords.push_back(static_cast<size_t>(rng.below(n)));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (size_t c : coords) {
      const double saved = (*t.data)[c];
      (*t.data)[c] = saved + eps;
      const double f_plus = eval();
      (*t.data)[c] = saved - eps;
      const double f_minus = eval();
      (*t.data)[c] = saved;
      const double g_fd = (f_plus - f_minus) / (2.0 * eps);
      const double g = g_ad[tensor_idx][c];
      const double rel = std::abs(g - g_fd) / std::max({1.0, std::abs(g), std::abs(g_fd)});
      ++report.probes;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name + "[" + std::to_string(c) + "]";
      }
    }
    ++tensor_idx;
  }
  return report;
}

}  // namespace firecast::nn
