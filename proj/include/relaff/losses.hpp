#pragma once

#include <span>

#include "relaff/tensor.hpp"

namespace relaff {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kDefaultTemperature = 0.1;

enum class LossKind { rmse, one_minus_ccc };

// Cosine similarity of every pair of rows of `rows` [B×n]. The diagonal is
// exactly 1 with zero gradient (the true derivative of cos(v, v)).
// Throws DegenerateVectorError for a row with norm <= eps_norm.
Value cosine_similarity_matrix(const Value& rows, double eps_norm = kNormEps);

// sqrt(mean((M̂ − M)²)) over all B² entries.
Value relational_loss(const Value& predicted, const Value& target);

Value rmse_loss(const Value& prediction, const Value& target);

// Concordance correlation of two vectors with population moments. Throws
// UndefinedMetricError when both are constant with equal means.
Value ccc(const Value& prediction, const Value& target);

// Mean over columns of 1 − ccc(column).
Value ccc_loss(const Value& prediction, const Value& target);

Value regression_loss(LossKind kind, const Value& prediction, const Value& target);

// L_reg + λ·L_rel. λ = 0 returns L_reg itself.
Value total_loss(const Value& reg, const Value& rel, double lambda);

// NT-Xent: row i of `anchors` and row i of `positives` form a positive pair;
// every other row of either matrix is a negative. Averaged over anchors.
Value contrastive_loss(const Value& anchors, const Value& positives, double temperature = kDefaultTemperature);

}  // namespace relaff
