#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace relaff {

struct ComponentCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

struct GradCheckSuiteOptions {
  double tolerance = 1e-5;
  double eps = 1e-5;
  std::uint64_t seed = 11;
  // Adds an operation whose backward rule is deliberately wrong, as a
  // negative control for the harness itself.
  bool inject_fault = false;
};

// Finite-difference checks of every differentiable operation, every loss and
// the full training loss of a tiny model (D = 16, T = 4, B = 2, dropout off).
std::vector<ComponentCheck> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

}  // namespace relaff
