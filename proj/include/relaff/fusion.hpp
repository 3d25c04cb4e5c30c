#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "relaff/encoder.hpp"
#include "relaff/parameters.hpp"
#include "relaff/tensor.hpp"

namespace relaff {

struct HeadConfig {
  std::size_t C = 2;
  std::size_t penultimate_width = 256;  // split into C equal subsets
  double dropout_rate = 0.1;
  bool total_score_enabled = false;
  std::vector<bool> supervised_mask;  // empty means all labels supervised

  // Throws ConfigError naming the offending field.
  void validate() const;
  bool supervised(std::size_t c) const { return supervised_mask.empty() || supervised_mask[c]; }
  std::vector<std::size_t> supervised_indices() const;
};

struct RegressionOutput {
  Value per_label;             // [C]
  std::optional<Value> total;  // [1], when total-score mode is on
  Value penultimate;           // [P]
};

// Non-local attention of the clip feature over its context window. The
// clip feature is the query; the context rows are keys and values:
//   out = softmax(θ(z)·φ(Z)ᵀ / √D) · g(Z)
// with θ, φ, g trainable D×D maps. There is no internal residual; the caller
// concatenates the result with z.
class ContextFusion {
 public:
  ContextFusion(std::size_t D, ParameterStore& store, std::mt19937_64& init_rng);

  struct Attended {
    Value out;      // [D]
    Value weights;  // [2K+1], sums to 1
  };

  Attended nonlocal_attend(const Value& z, const Value& Z) const;
  // concat(z, nonlocal_attend(z, Z)) -> [2D].
  Value fuse(const Value& z, const Value& Z) const;

 private:
  std::size_t D_;
  Value theta_, phi_, g_;
};

// FC -> ReLU -> dropout gives the penultimate vector p of width P. p is cut
// into C equal subsets, each feeding its own 1-output linear layer; the
// optional total score reads the whole of p.
class RegressionHead {
 public:
  RegressionHead(std::size_t fused_width, const HeadConfig& cfg, ParameterStore& store, std::mt19937_64& init_rng);

  const HeadConfig& config() const { return cfg_; }

  // Dropout is active only when train_mode is true; it then draws its mask
  // from `dropout_rng`, which must be non-null.
  RegressionOutput forward(const Value& fused, bool train_mode, std::mt19937_64* dropout_rng) const;

 private:
  HeadConfig cfg_;
  std::size_t fused_width_;
  Value fc_w_, fc_b_;
  std::vector<Value> label_w_, label_b_;
  std::optional<Value> total_w_, total_b_;
};

struct ForwardOptions {
  bool train = false;
  std::mt19937_64* dropout_rng = nullptr;
  // Fill the middle context row with the detached clip feature instead of
  // encoding the middle clip a second time.
  bool reuse_center = true;
  // Record the context branch's graph (and detach afterwards) so that tests
  // can confirm no gradient reaches it.
  bool audit_context = false;
};

struct PipelineResult {
  RegressionOutput output;
  Value z;                  // gradient-carrying clip feature [D]
  Value context;            // detached context features [(2K+1) × D]
  Value attention_weights;  // [2K+1]
  std::optional<Value> context_audit;  // undetached context stack when audited
};

// The full network: shared-weight clip encoder for both branches, context
// fusion and the multi-label regression head, all in one parameter store.
class Model {
 public:
  Model(const EncoderConfig& encoder, const HeadConfig& head, std::uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const VideoEncoder& encoder() const { return encoder_; }
  const ContextFusion& fusion() const { return fusion_; }
  const RegressionHead& head() const { return head_; }
  const EncoderConfig& encoder_config() const { return encoder_.config(); }
  const HeadConfig& head_config() const { return head_.config(); }

  // `context` holds the 2K+1 clips around `clip`, ordered by start frame,
  // with `clip` in the middle.
  PipelineResult forward_pipeline(const Clip& clip, std::span<const Clip> context,
                                  const ForwardOptions& options = {}) const;
  // Same, with the context features already computed. Finite-difference
  // checks use this to hold the forward-only branch fixed.
  PipelineResult forward_with_context(const Clip& clip, const Value& context_features,
                                      const ForwardOptions& options = {}) const;

  // Prefix of encoder parameters ("backbone.", "neck.") for freezing.
  static std::vector<std::string> encoder_prefixes() { return {"backbone.", "neck."}; }

 private:
  PipelineResult attend(PipelineResult r, const ForwardOptions& options) const;

  std::uint64_t init_seed_;
  ParameterStore params_;
  std::mt19937_64 init_rng_;
  VideoEncoder encoder_;
  ContextFusion fusion_;
  RegressionHead head_;
};

}  // namespace relaff
