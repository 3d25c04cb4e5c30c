#include "relaff/optimizer.hpp"

#include <cmath>

#include <fmt/format.h>

#include "relaff/error.hpp"

namespace relaff {

Adam::Adam(ParameterStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {
  for (const auto& [name, v] : store_.entries()) {
    m_[name].assign(v.size(), 0.0);
    v_[name].assign(v.size(), 0.0);
  }
}

void Adam::step() {
  for (const auto& [name, p] : store_.entries()) {
    if (store_.is_frozen(name) || !p.requires_grad()) continue;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(p.grad()[i])) {
        throw NumericError(fmt::format("adam: non-finite gradient in parameter '{}' at index {}", name, i));
      }
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& [name, p] : store_.entries()) {
    if (store_.is_frozen(name) || !p.requires_grad()) continue;
    Value param = p;
    auto theta = param.mutable_data();
    auto g = p.grad();
    auto& m = m_.at(name);
    auto& v = v_.at(name);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.lr * cfg_.weight_decay * theta[i];
    }
  }
}

double lr_schedule(std::size_t epoch, double base, double factor, std::size_t every) {
  if (every == 0) return base;
  return base * std::pow(factor, static_cast<double>(epoch / every));
}

}  // namespace relaff
