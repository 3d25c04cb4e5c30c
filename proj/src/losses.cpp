#include "relaff/losses.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "relaff/error.hpp"

namespace relaff {

namespace {

void require_matrix_pair(const char* op, const Value& a, const Value& b) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw ContractError(fmt::format("{}: expected two equal-shape matrices, got {} and {}", op,
                                    shape_string(a.shape()), shape_string(b.shape())));
  }
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

}  // namespace

Value cosine_similarity_matrix(const Value& rows, double eps_norm) {
  if (rows.rank() != 2) {
    throw DimensionError(fmt::format("cosine_similarity_matrix: expected [B x n], got {}", shape_string(rows.shape())));
  }
  const std::size_t B = rows.dim(0);
  const Value n = l2_normalize_rows(rows, eps_norm);
  const Value gram = matmul(n, transpose(n));
  std::vector<double> off(B * B, 1.0), diag(B * B, 0.0);
  for (std::size_t i = 0; i < B; ++i) {
    off[i * B + i] = 0.0;
    diag[i * B + i] = 1.0;
  }
  return add(mul(gram, Value::constant({B, B}, std::move(off))), Value::constant({B, B}, std::move(diag)));
}

Value relational_loss(const Value& predicted, const Value& target) {
  if (predicted.rank() != 2 || predicted.dim(0) != predicted.dim(1) || predicted.shape() != target.shape()) {
    throw ContractError(fmt::format("relational_loss: need two BxB matrices, got {} and {}",
                                    shape_string(predicted.shape()), shape_string(target.shape())));
  }
  return sqrt(mean(square(sub(predicted, target))));
}

Value rmse_loss(const Value& prediction, const Value& target) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError(fmt::format("rmse_loss: shape mismatch {} vs {}", shape_string(prediction.shape()),
                                     shape_string(target.shape())));
  }
  return sqrt(mean(square(sub(prediction, target))));
}

Value ccc(const Value& prediction, const Value& target) {
  if (prediction.rank() != 1 || prediction.shape() != target.shape()) {
    throw DimensionError(fmt::format("ccc: expected two equal-length vectors, got {} and {}",
                                     shape_string(prediction.shape()), shape_string(target.shape())));
  }
  const std::size_t N = prediction.size();
  if (N < 2) throw ContractError("ccc: needs at least two samples");
  if (is_constant(prediction.data()) && is_constant(target.data()) && prediction.at(0) == target.at(0)) {
    throw UndefinedMetricError("ccc: both vectors constant with equal means (0/0)");
  }
  const Value mx = mean(prediction);
  const Value my = mean(target);
  const Value dx = sub(prediction, broadcast(mx, {N}));
  const Value dy = sub(target, broadcast(my, {N}));
  const Value cov = mean(mul(dx, dy));
  const Value denom = add(add(mean(square(dx)), mean(square(dy))), square(sub(mx, my)));
  if (!(denom.item() > 0.0)) throw UndefinedMetricError("ccc: zero denominator");
  return scale(div(cov, denom), 2.0);
}

Value ccc_loss(const Value& prediction, const Value& target) {
  require_matrix_pair("ccc_loss", prediction, target);
  const std::size_t B = prediction.dim(0), C = prediction.dim(1);
  Value acc = Value::scalar(0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const Value r = ccc(reshape(slice_cols(prediction, c, c + 1), {B}), reshape(slice_cols(target, c, c + 1), {B}));
    acc = c == 0 ? add_scalar(scale(r, -1.0), 1.0) : add(acc, add_scalar(scale(r, -1.0), 1.0));
  }
  return scale(acc, 1.0 / static_cast<double>(C));
}

Value regression_loss(LossKind kind, const Value& prediction, const Value& target) {
  return kind == LossKind::rmse ? rmse_loss(prediction, target) : ccc_loss(prediction, target);
}

Value total_loss(const Value& reg, const Value& rel, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError(fmt::format("total_loss: lambda must be >= 0, got {}", lambda));
  if (lambda == 0.0) return reg;
  return add(reg, scale(rel, lambda));
}

Value contrastive_loss(const Value& anchors, const Value& positives, double temperature) {
  require_matrix_pair("contrastive_loss", anchors, positives);
  if (!(temperature > 0.0)) throw ContractError("contrastive_loss: temperature must be positive");
  const std::size_t B = anchors.dim(0);
  if (B < 2) throw ContractError("contrastive_loss: B = 1 leaves no negatives");
  const std::size_t N = 2 * B;
  const Value all = transpose(concat_cols({transpose(anchors), transpose(positives)}));  // [2B × n]
  const Value e = l2_normalize_rows(all, kNormEps);
  const Value logits = scale(matmul(e, transpose(e)), 1.0 / temperature);
  // Self-similarity is excluded by pushing it to an effectively infinite
  // negative logit.
  std::vector<double> mask(N * N, 0.0);
  for (std::size_t i = 0; i < N; ++i) mask[i * N + i] = -1e30;
  const Value logp = log_softmax(add(logits, Value::constant({N, N}, std::move(mask))));
  std::vector<double> pick(N * N, 0.0);
  for (std::size_t i = 0; i < B; ++i) pick[i * N + (i + B)] = 1.0;
  return scale(sum(mul(logp, Value::constant({N, N}, std::move(pick)))), -1.0 / static_cast<double>(B));
}

}  // namespace relaff
