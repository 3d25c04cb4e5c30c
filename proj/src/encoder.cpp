#include "relaff/encoder.hpp"

#include <cmath>

#include <fmt/format.h>

#include "relaff/error.hpp"

namespace relaff {

namespace {
// The trunk's random projection is scaled up so that the small pixel
// deviations of the synthetic frames land in tanh's sensitive range.
constexpr double kFrozenGain = 8.0;
}  // namespace

void EncoderConfig::validate() const {
  if (T < 1) throw ConfigError("encoder.T", "must be >= 1");
  if (H < 1 || W < 1) throw ConfigError("encoder.H", "frame size must be positive");
  if (D < 1) throw ConfigError("encoder.D", "must be >= 1");
  if (D_f != D) throw ConfigError("encoder.D_f", fmt::format("must equal encoder.D ({} != {})", D_f, D));
  if (attention_heads < 1) throw ConfigError("encoder.attention_heads", "must be >= 1");
  if (D % attention_heads != 0) {
    throw ConfigError("encoder.attention_heads", fmt::format("D = {} is not divisible by {} heads", D, attention_heads));
  }
  if (feedforward_width < 1) throw ConfigError("encoder.feedforward_width", "must be >= 1");
  if (patch_grid < 1 || patch_grid > H || patch_grid > W) {
    throw ConfigError("encoder.patch_grid", "must be in [1, min(H, W)]");
  }
  if (backbone_width < 1) throw ConfigError("encoder.backbone_width", "must be >= 1");
}

std::vector<double> positional_encoding(std::size_t T, std::size_t D) {
  std::vector<double> pe(T * D);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < D; ++c) {
      const std::size_t i = c / 2;
      const double angle = static_cast<double>(t) / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(D));
      pe[t * D + c] = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

VideoEncoder::VideoEncoder(const EncoderConfig& cfg, ParameterStore& store, std::mt19937_64& init_rng)
    : cfg_(cfg) {
  cfg_.validate();
  const std::size_t in = 3 * cfg_.patch_grid * cfg_.patch_grid;
  const std::size_t F = cfg_.backbone_width, D = cfg_.D;

  {
    std::mt19937_64 trunk_rng(cfg_.backbone_seed);
    const double bound = kFrozenGain / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(in * F), b(F);
    for (double& v : w) v = dist(trunk_rng);
    std::uniform_real_distribution<double> bias(-0.5, 0.5);
    for (double& v : b) v = bias(trunk_rng);
    frozen_w_ = store.add("backbone.frozen.weight", {in, F}, std::move(w));
    frozen_b_ = store.add("backbone.frozen.bias", {F}, std::move(b));
    store.freeze("backbone.frozen.weight");
    store.freeze("backbone.frozen.bias");
  }
  fc_w_ = store.add_uniform("backbone.fc.weight", {F, D}, F, init_rng);
  fc_b_ = store.add_uniform("backbone.fc.bias", {D}, F, init_rng);

  const std::size_t ff = cfg_.feedforward_width;
  for (std::size_t l = 0; l < cfg_.transformer_layers; ++l) {
    const std::string p = fmt::format("neck.layer{}.", l);
    Layer layer;
    layer.ln1_gain = store.add(p + "ln1.gain", {D}, std::vector<double>(D, 1.0));
    layer.ln1_bias = store.add(p + "ln1.bias", {D}, std::vector<double>(D, 0.0));
    layer.wq = store.add_uniform(p + "attn.wq", {D, D}, D, init_rng);
    layer.bq = store.add_uniform(p + "attn.bq", {D}, D, init_rng);
    layer.wk = store.add_uniform(p + "attn.wk", {D, D}, D, init_rng);
    layer.bk = store.add_uniform(p + "attn.bk", {D}, D, init_rng);
    layer.wv = store.add_uniform(p + "attn.wv", {D, D}, D, init_rng);
    layer.bv = store.add_uniform(p + "attn.bv", {D}, D, init_rng);
    layer.wo = store.add_uniform(p + "attn.wo", {D, D}, D, init_rng);
    layer.bo = store.add_uniform(p + "attn.bo", {D}, D, init_rng);
    layer.ln2_gain = store.add(p + "ln2.gain", {D}, std::vector<double>(D, 1.0));
    layer.ln2_bias = store.add(p + "ln2.bias", {D}, std::vector<double>(D, 0.0));
    layer.w1 = store.add_uniform(p + "ffn.w1", {D, ff}, D, init_rng);
    layer.b1 = store.add_uniform(p + "ffn.b1", {ff}, D, init_rng);
    layer.w2 = store.add_uniform(p + "ffn.w2", {ff, D}, ff, init_rng);
    layer.b2 = store.add_uniform(p + "ffn.b2", {D}, ff, init_rng);
    layers_.push_back(std::move(layer));
  }
  pe_ = positional_encoding(cfg_.T, D);
}

Value VideoEncoder::frozen_features(const Clip& clip) const {
  if (clip.T != cfg_.T || clip.H != cfg_.H || clip.W != cfg_.W) {
    throw DimensionError(fmt::format("clip is {}x{}x{}, encoder expects {}x{}x{}", clip.T, clip.H, clip.W,
                                     cfg_.T, cfg_.H, cfg_.W));
  }
  const std::size_t G = cfg_.patch_grid, H = cfg_.H, W = cfg_.W;
  const std::size_t in = 3 * G * G, F = cfg_.backbone_width;
  std::vector<double> pooled(in);
  std::vector<double> counts(G * G, 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) counts[(y * G / H) * G + (x * G / W)] += 1.0;

  std::vector<double> out(cfg_.T * F);
  auto w = frozen_w_.data();
  auto b = frozen_b_.data();
  for (std::size_t t = 0; t < cfg_.T; ++t) {
    std::fill(pooled.begin(), pooled.end(), 0.0);
    auto frame = clip.frame(t);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t cell = (y * G / H) * G + (x * G / W);
        for (std::size_t ch = 0; ch < 3; ++ch) pooled[cell * 3 + ch] += frame[(y * W + x) * 3 + ch] - 0.5;
      }
    }
    for (std::size_t cell = 0; cell < G * G; ++cell)
      for (std::size_t ch = 0; ch < 3; ++ch) pooled[cell * 3 + ch] /= counts[cell];
    double* o = out.data() + t * F;
    for (std::size_t j = 0; j < F; ++j) o[j] = b[j];
    for (std::size_t i = 0; i < in; ++i) {
      const double pv = pooled[i];
      const double* wr = w.data() + i * F;
      for (std::size_t j = 0; j < F; ++j) o[j] += pv * wr[j];
    }
    for (std::size_t j = 0; j < F; ++j) o[j] = std::tanh(o[j]);
  }
  return Value::constant({cfg_.T, F}, std::move(out));
}

Value VideoEncoder::backbone_forward(const Clip& clip) const {
  return relu(add_row(matmul(frozen_features(clip), fc_w_), fc_b_));
}

Value VideoEncoder::positional_encode(const Value& f) const {
  if (f.rank() != 2 || f.dim(1) != cfg_.D) {
    throw DimensionError(fmt::format("positional_encode: expected [T x {}], got {}", cfg_.D, shape_string(f.shape())));
  }
  const std::size_t T = f.dim(0);
  std::vector<double> pe = T == cfg_.T ? pe_ : positional_encoding(T, cfg_.D);
  return add(f, Value::constant(f.shape(), std::move(pe)));
}

Value VideoEncoder::self_attention(const Layer& layer, const Value& h) const {
  const std::size_t heads = cfg_.attention_heads;
  const std::size_t dh = cfg_.D / heads;
  const Value q = add_row(matmul(h, layer.wq), layer.bq);
  const Value k = add_row(matmul(h, layer.wk), layer.bk);
  const Value v = add_row(matmul(h, layer.wv), layer.bv);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Value> outs;
  outs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const Value qi = slice_cols(q, i * dh, (i + 1) * dh);
    const Value ki = slice_cols(k, i * dh, (i + 1) * dh);
    const Value vi = slice_cols(v, i * dh, (i + 1) * dh);
    const Value weights = softmax(scale(matmul(qi, transpose(ki)), inv), 1);
    outs.push_back(matmul(weights, vi));
  }
  const Value merged = heads == 1 ? outs[0] : concat_cols(outs);
  return add_row(matmul(merged, layer.wo), layer.bo);
}

Value VideoEncoder::transformer_encoder(const Value& input) const {
  if (input.rank() != 2 || input.dim(1) != cfg_.D) {
    throw DimensionError(fmt::format("transformer_encoder: expected [T x {}], got {}", cfg_.D, shape_string(input.shape())));
  }
  Value x = input;
  for (const auto& layer : layers_) {
    x = add(x, self_attention(layer, layer_norm(x, layer.ln1_gain, layer.ln1_bias)));
    const Value h = layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    const Value ff = add_row(matmul(relu(add_row(matmul(h, layer.w1), layer.b1)), layer.w2), layer.b2);
    x = add(x, ff);
  }
  return x;
}

Value VideoEncoder::encode_clip(const Clip& clip) const {
  const Value f = backbone_forward(clip);
  return mean_pool(add(transformer_encoder(positional_encode(f)), f));
}

Value VideoEncoder::encode_context(std::span<const Clip> clips, const Value* center) const {
  if (clips.size() % 2 != 1) {
    throw ContractError(fmt::format("encode_context: expected 2K+1 clips, got {}", clips.size()));
  }
  const std::size_t mid = clips.size() / 2;
  NoGradGuard no_grad;
  std::vector<Value> rows;
  rows.reserve(clips.size());
  for (std::size_t j = 0; j < clips.size(); ++j) {
    if (j == mid && center != nullptr) {
      rows.push_back(detach(*center));
    } else {
      rows.push_back(encode_clip(clips[j]));
    }
  }
  return stack_rows(rows);
}

}  // namespace relaff
