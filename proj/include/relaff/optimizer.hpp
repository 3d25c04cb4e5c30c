#pragma once

#include <map>
#include <string>
#include <vector>

#include "relaff/parameters.hpp"

namespace relaff {

struct AdamConfig {
  double lr = 1e-4;
  double weight_decay = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with weight decay decoupled from the moment estimates:
//   θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ
// Frozen parameters are never touched.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig cfg);

  // Reads each trainable parameter's accumulated gradient. A non-finite
  // gradient throws NumericError naming the parameter, before any update.
  void step();

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  std::size_t step_count() const { return steps_; }
  const std::vector<double>& first_moment(const std::string& name) const { return m_.at(name); }
  const std::vector<double>& second_moment(const std::string& name) const { return v_.at(name); }

 private:
  ParameterStore& store_;
  AdamConfig cfg_;
  std::size_t steps_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// base · factor^⌊epoch / every⌋
double lr_schedule(std::size_t epoch, double base = 1e-4, double factor = 0.1, std::size_t every = 5);

}  // namespace relaff
