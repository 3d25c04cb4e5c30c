#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "relaff/tensor.hpp"

namespace relaff {

// Named trainable tensors plus the subset excluded from optimization.
//
// Names are unique dotted paths ("encoder.layer0.attn.wq"). Iteration order is
// lexicographic so that serialization and optimizer sweeps are deterministic.
// Frozen entries stop tracking gradients, which is how the fixed backbone and
// the pretrained-then-frozen encoder of the contrastive baseline are modeled.
class ParameterStore {
 public:
  // Registers a parameter. Throws ContractError on a duplicate name.
  Value add(const std::string& name, Shape shape, std::vector<double> data);
  // Registers a parameter initialized uniformly in ±1/sqrt(fan_in).
  Value add_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::mt19937_64& rng);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Value& get(const std::string& name) const;
  Value& get(const std::string& name);

  void freeze(const std::string& name);
  // Freezes every parameter whose name starts with `prefix`.
  void freeze_prefix(const std::string& prefix);
  bool is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }
  const std::set<std::string>& frozen() const { return frozen_; }

  const std::map<std::string, Value>& entries() const { return params_; }
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  // Total scalar count, frozen entries included.
  std::size_t parameter_count() const;
  std::size_t trainable_count() const;

  void zero_grad();

  // Deep copy of every parameter's data, keyed by name.
  std::map<std::string, std::vector<double>> snapshot() const;
  // Copies data from another store with identical names and shapes.
  void load(const std::map<std::string, std::vector<double>>& values);

 private:
  std::map<std::string, Value> params_;
  std::set<std::string> frozen_;
};

}  // namespace relaff
