#include "plotforge/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "plotforge/errors.hpp"

namespace plotforge::ad {

GradCheckResult grad_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& options) {
  auto& tape = Tape<double>::active();
  tape.clear();
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  {
    auto loss = f();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) analytic.emplace_back(x.grad().begin(), x.grad().end());
  tape.clear();

  GradCheckResult result;
  NoGradGuard<double> no_grad;
  for (std::size_t xi = 0; xi < inputs.size(); ++xi) {
    auto values = inputs[xi].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (options.skip && options.skip(xi, i)) continue;
      const double saved = values[i];
      values[i] = saved + options.step;
      const double plus = f().item();
      values[i] = saved - options.step;
      const double minus = f().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[xi][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = err;
        result.worst_input = xi;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace plotforge::ad
