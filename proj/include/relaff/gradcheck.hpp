#pragma once

#include <functional>

#include "relaff/tensor.hpp"

namespace relaff {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;   // at worst_index
};

// Compares the reverse-mode gradient of `f` with respect to `theta` against
// central differences (f(θ+εe) − f(θ−εe)) / 2ε. The error per coordinate is
// |analytic − numeric| / max(1, |numeric|); the maximum is returned.
//
// `f` must rebuild its graph on every call and return a one-element Value.
// `theta` must require gradients; its data is perturbed in place and restored.
GradCheckResult grad_check(const std::function<Value()>& f, Value theta, double eps = 1e-5);

}  // namespace relaff
