#include "relaff/parameters.hpp"

#include <cmath>

#include <fmt/format.h>

#include "relaff/error.hpp"

namespace relaff {

Value ParameterStore::add(const std::string& name, Shape shape, std::vector<double> data) {
  if (contains(name)) throw ContractError(fmt::format("parameter '{}' registered twice", name));
  Value v = Value::parameter(std::move(shape), std::move(data));
  params_.emplace(name, v);
  return v;
}

Value ParameterStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in,
                                  std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = dist(rng);
  return add(name, std::move(shape), std::move(data));
}

const Value& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

Value& ParameterStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

void ParameterStore::freeze(const std::string& name) {
  get(name).set_requires_grad(false);
  frozen_.insert(name);
}

void ParameterStore::freeze_prefix(const std::string& prefix) {
  for (auto& [name, v] : params_) {
    if (name.rfind(prefix, 0) == 0) {
      v.set_requires_grad(false);
      frozen_.insert(name);
    }
  }
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, v] : params_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += v.size();
  return n;
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) {
    if (!is_frozen(name)) n += v.size();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, v] : params_) v.zero_grad();
}

std::map<std::string, std::vector<double>> ParameterStore::snapshot() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, v] : params_) out.emplace(name, std::vector<double>(v.data().begin(), v.data().end()));
  return out;
}

void ParameterStore::load(const std::map<std::string, std::vector<double>>& values) {
  if (values.size() != params_.size()) {
    throw ContractError(fmt::format("load: expected {} parameters, got {}", params_.size(), values.size()));
  }
  for (auto& [name, v] : params_) {
    auto it = values.find(name);
    if (it == values.end()) throw ContractError(fmt::format("load: missing parameter '{}'", name));
    if (it->second.size() != v.size()) {
      throw DimensionError(fmt::format("load: parameter '{}' has {} elements, file has {}", name,
                                       v.size(), it->second.size()));
    }
    std::copy(it->second.begin(), it->second.end(), v.mutable_data().begin());
  }
}

}  // namespace relaff
