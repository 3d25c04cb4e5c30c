#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relaff/data.hpp"
#include "relaff/parameters.hpp"
#include "relaff/tensor.hpp"

namespace relaff {

struct EncoderConfig {
  std::size_t T = 16;
  std::size_t H = 16;
  std::size_t W = 16;
  std::size_t D_f = 32;  // backbone output width; must equal D
  std::size_t D = 32;
  std::size_t transformer_layers = 2;
  std::size_t attention_heads = 4;
  std::size_t feedforward_width = 64;
  std::uint64_t backbone_seed = 7;
  // Frozen stand-in for the pretrained convolutional trunk: each frame is
  // mean-pooled on a patch_grid × patch_grid × 3 grid and sent through a
  // fixed random tanh layer of width backbone_width.
  std::size_t patch_grid = 4;
  std::size_t backbone_width = 64;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Sinusoidal position signal: row t, channel 2i gets sin(t / 10000^(2i/D)),
// channel 2i+1 gets cos of the same angle.
std::vector<double> positional_encoding(std::size_t T, std::size_t D);

// Shared-weight clip encoder. Parameters live in the caller's store under
// "backbone." and "neck."; the frozen trunk is registered frozen.
class VideoEncoder {
 public:
  VideoEncoder(const EncoderConfig& cfg, ParameterStore& store, std::mt19937_64& init_rng);

  const EncoderConfig& config() const { return cfg_; }

  // Per-frame features [T × D_f]: frozen trunk, trainable FC, ReLU.
  Value backbone_forward(const Clip& clip) const;
  // Frozen trunk only [T × backbone_width]; a constant.
  Value frozen_features(const Clip& clip) const;
  Value positional_encode(const Value& frame_features) const;
  Value transformer_encoder(const Value& x) const;
  // z = mean_pool(transformer(pe(f)) + f), f = backbone_forward(clip).
  Value encode_clip(const Clip& clip) const;
  // Stacked encodings of 2K+1 clips [(2K+1) × D], computed without recording
  // a graph. When `center` is given it fills the middle row instead of
  // re-encoding the middle clip.
  Value encode_context(std::span<const Clip> clips, const Value* center = nullptr) const;

 private:
  struct Layer {
    Value ln1_gain, ln1_bias;
    Value wq, bq, wk, bk, wv, bv, wo, bo;
    Value ln2_gain, ln2_bias;
    Value w1, b1, w2, b2;
  };

  Value self_attention(const Layer& layer, const Value& h) const;

  EncoderConfig cfg_;
  Value frozen_w_, frozen_b_;
  Value fc_w_, fc_b_;
  std::vector<Layer> layers_;
  std::vector<double> pe_;
};

}  // namespace relaff
