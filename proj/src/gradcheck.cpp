#include "relaff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "relaff/error.hpp"

namespace relaff {

GradCheckResult grad_check(const std::function<Value()>& f, Value theta, double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  if (!theta.requires_grad()) throw ContractError("grad_check: theta must require gradients");

  theta.zero_grad();
  Value loss = f();
  if (loss.size() != 1) throw ContractError("grad_check: f must return a scalar");
  backward(loss);
  std::vector<double> analytic(theta.grad().begin(), theta.grad().end());

  GradCheckResult result;
  auto data = theta.mutable_data();
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = f().item();
    data[i] = saved - eps;
    const double down = f().item();
    data[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (i == 0 || err > result.max_relative_error) {
      result = {err, i, analytic[i], numeric};
    }
  }
  return result;
}

}  // namespace relaff
