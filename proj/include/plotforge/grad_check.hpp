#pragma once

#include <functional>
#include <vector>

#include "plotforge/tensor.hpp"

namespace plotforge::ad {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates for which skip(input_index, flat_index) is true are left out
  // of the sweep (nondifferentiable points such as ReLU at 0).
  std::function<bool(std::size_t, std::size_t)> skip;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares reverse-mode gradients of the scalar f() with central differences
// (f(x+h) - f(x-h)) / 2h over every coordinate of every input. Each
// coordinate's error is |a - n| / max(|a|, |n|, 1e-8). f must rebuild its
// graph from the inputs on every call. Clears the calling thread's tape.
GradCheckResult grad_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& options = {});

}  // namespace plotforge::ad
