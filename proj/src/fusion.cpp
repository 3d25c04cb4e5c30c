#include "relaff/fusion.hpp"

#include <cmath>

#include <fmt/format.h>

#include "relaff/error.hpp"

namespace relaff {

void HeadConfig::validate() const {
  if (C < 1) throw ConfigError("head.C", "must be >= 1");
  if (penultimate_width < 1 || penultimate_width % C != 0) {
    throw ConfigError("head.penultimate_width", fmt::format("{} is not a positive multiple of C = {}", penultimate_width, C));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("head.dropout_rate", "must be in [0, 1)");
  if (!supervised_mask.empty()) {
    if (supervised_mask.size() != C) {
      throw ConfigError("head.supervised_mask", fmt::format("has {} entries, C = {}", supervised_mask.size(), C));
    }
    bool any = false;
    for (bool b : supervised_mask) any = any || b;
    if (!any) throw ConfigError("head.supervised_mask", "at least one label must be supervised");
  }
}

std::vector<std::size_t> HeadConfig::supervised_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < C; ++c) {
    if (supervised(c)) out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------

ContextFusion::ContextFusion(std::size_t D, ParameterStore& store, std::mt19937_64& init_rng) : D_(D) {
  theta_ = store.add_uniform("fusion.theta", {D, D}, D, init_rng);
  phi_ = store.add_uniform("fusion.phi", {D, D}, D, init_rng);
  g_ = store.add_uniform("fusion.g", {D, D}, D, init_rng);
}

ContextFusion::Attended ContextFusion::nonlocal_attend(const Value& z, const Value& Z) const {
  if (z.rank() != 1 || z.dim(0) != D_) {
    throw ContractError(fmt::format("nonlocal_attend: clip feature must be [{}], got {}", D_, shape_string(z.shape())));
  }
  if (Z.rank() != 2 || Z.dim(1) != D_ || Z.dim(0) % 2 != 1) {
    throw ContractError(fmt::format("nonlocal_attend: context must be [(2K+1) x {}], got {}", D_, shape_string(Z.shape())));
  }
  const Value query = matmul(reshape(z, {1, D_}), theta_);  // [1 × D]
  const Value keys = matmul(Z, phi_);                      // [S × D]
  const Value values = matmul(Z, g_);                      // [S × D]
  const double inv = 1.0 / std::sqrt(static_cast<double>(D_));
  const Value weights = softmax(scale(matmul(query, transpose(keys)), inv), 1);  // [1 × S]
  const Value out = matmul(weights, values);
  return {reshape(out, {D_}), reshape(weights, {Z.dim(0)})};
}

Value ContextFusion::fuse(const Value& z, const Value& Z) const { return concat(z, nonlocal_attend(z, Z).out); }

// ---------------------------------------------------------------------------

RegressionHead::RegressionHead(std::size_t fused_width, const HeadConfig& cfg, ParameterStore& store,
                               std::mt19937_64& init_rng)
    : cfg_(cfg), fused_width_(fused_width) {
  cfg_.validate();
  const std::size_t P = cfg_.penultimate_width;
  const std::size_t sub = P / cfg_.C;
  fc_w_ = store.add_uniform("head.fc.weight", {fused_width, P}, fused_width, init_rng);
  fc_b_ = store.add_uniform("head.fc.bias", {P}, fused_width, init_rng);
  for (std::size_t c = 0; c < cfg_.C; ++c) {
    label_w_.push_back(store.add_uniform(fmt::format("head.label{}.weight", c), {sub, 1}, sub, init_rng));
    label_b_.push_back(store.add_uniform(fmt::format("head.label{}.bias", c), {1}, sub, init_rng));
  }
  if (cfg_.total_score_enabled) {
    total_w_ = store.add_uniform("head.total.weight", {P, 1}, P, init_rng);
    total_b_ = store.add_uniform("head.total.bias", {1}, P, init_rng);
  }
}

RegressionOutput RegressionHead::forward(const Value& fused, bool train_mode, std::mt19937_64* dropout_rng) const {
  if (fused.rank() != 1 || fused.dim(0) != fused_width_) {
    throw ContractError(fmt::format("regression_head: expected [{}], got {}", fused_width_, shape_string(fused.shape())));
  }
  const std::size_t P = cfg_.penultimate_width;
  const std::size_t sub = P / cfg_.C;
  Value p = relu(add_row(matmul(reshape(fused, {1, fused_width_}), fc_w_), fc_b_));  // [1 × P]
  if (train_mode && cfg_.dropout_rate > 0.0) {
    if (dropout_rng == nullptr) throw ContractError("regression_head: train mode needs a dropout stream");
    std::bernoulli_distribution keep(1.0 - cfg_.dropout_rate);
    const double inv = 1.0 / (1.0 - cfg_.dropout_rate);
    std::vector<double> mask(P);
    for (double& m : mask) m = keep(*dropout_rng) ? inv : 0.0;
    p = mul(p, Value::constant({1, P}, std::move(mask)));
  }
  std::vector<Value> preds;
  preds.reserve(cfg_.C);
  for (std::size_t c = 0; c < cfg_.C; ++c) {
    const Value part = slice_cols(p, c * sub, (c + 1) * sub);
    preds.push_back(add_row(matmul(part, label_w_[c]), label_b_[c]));  // [1 × 1]
  }
  RegressionOutput out;
  out.per_label = reshape(concat_cols(preds), {cfg_.C});
  if (total_w_) out.total = reshape(add_row(matmul(p, *total_w_), *total_b_), {1});
  out.penultimate = reshape(p, {P});
  return out;
}

// ---------------------------------------------------------------------------

Model::Model(const EncoderConfig& encoder, const HeadConfig& head, std::uint64_t init_seed)
    : init_seed_(init_seed),
      init_rng_(init_seed),
      encoder_(encoder, params_, init_rng_),
      fusion_(encoder.D, params_, init_rng_),
      head_(2 * encoder.D, head, params_, init_rng_) {}

PipelineResult Model::forward_pipeline(const Clip& clip, std::span<const Clip> context,
                                       const ForwardOptions& options) const {
  if (context.size() % 2 != 1) {
    throw ContractError(fmt::format("forward_pipeline: context must hold 2K+1 clips, got {}", context.size()));
  }
  PipelineResult r;
  r.z = encoder_.encode_clip(clip);
  const bool reuse = options.reuse_center || context.size() == 1;
  if (options.audit_context) {
    std::vector<Value> rows;
    const std::size_t mid = context.size() / 2;
    for (std::size_t j = 0; j < context.size(); ++j) {
      rows.push_back(j == mid && reuse ? detach(r.z) : encoder_.encode_clip(context[j]));
    }
    Value tracked = stack_rows(rows);
    r.context = detach(tracked);
    r.context_audit = tracked;
  } else {
    r.context = encoder_.encode_context(context, reuse ? &r.z : nullptr);
  }
  return attend(std::move(r), options);
}

PipelineResult Model::forward_with_context(const Clip& clip, const Value& context_features,
                                           const ForwardOptions& options) const {
  PipelineResult r;
  r.z = encoder_.encode_clip(clip);
  r.context = detach(context_features);
  return attend(std::move(r), options);
}

PipelineResult Model::attend(PipelineResult r, const ForwardOptions& options) const {
  auto attended = fusion_.nonlocal_attend(r.z, r.context);
  r.attention_weights = attended.weights;
  r.output = head_.forward(concat(r.z, attended.out), options.train, options.dropout_rng);
  return r;
}

}  // namespace relaff
