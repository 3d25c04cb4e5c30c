#pragma once

// Synthetic long-video corpus, temporal clip sampling and spatial
// augmentation.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relaff/labels.hpp"

namespace relaff {

// L×H×W×3 float frames in [0, 1], row-major (frame, row, column, channel).
struct Video {
  std::string video_id;
  std::string subject_id;
  std::size_t L = 0, H = 0, W = 0;
  std::vector<float> frames;
  LabelVector labels;  // native range, one vector for the whole video
  double fps = 3.0;

  std::size_t frame_size() const { return H * W * 3; }
  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(frames).subspan(t * frame_size(), frame_size());
  }
};

struct Clip {
  std::size_t T = 0, H = 0, W = 0;
  std::vector<float> frames;
  std::string video_id;
  std::size_t start_frame = 0;
  LabelVector label;  // native range, inherited from the video

  std::size_t frame_size() const { return H * W * 3; }
  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(frames).subspan(t * frame_size(), frame_size());
  }
  // Throws ContractError if the frame count or pixel values are invalid.
  void validate(std::size_t expected_T) const;
};

struct SamplingConfig {
  std::size_t T = 16;
  std::size_t K = 1;
  std::uint64_t seed = 0;
};

struct SynthConfig {
  std::size_t subjects = 8;
  std::size_t videos_per_subject = 4;
  std::size_t L = 96;
  std::size_t H = 16;
  std::size_t W = 16;
  std::size_t C = 2;
  std::string scale = "affect";
  // Amplitude of the slow label-independent oscillation laid over the label
  // channels. 0: every clip shows the label plainly; 1: a single clip is
  // dominated by the oscillation and only a window spanning a full period
  // averages it away.
  double context_dependence = 0.3;
  double noise = 0.1;
  // Oscillation period in frames.
  std::size_t context_period = 24;
  // Amplitude of the per-subject appearance pattern.
  double subject_variation = 0.1;
  double fps = 3.0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Fixed procedural renderer. Label c is painted as a low-frequency cosine
// pattern; subject appearance lives in a disjoint, orthogonal set of
// patterns. Both are exposed so that decoders can be written against them.
inline constexpr std::size_t kMaxLabels = 8;
inline constexpr double kLabelAmplitude = 0.04;
inline constexpr double kOscillationGain = 3.0;

// H×W×3 pattern for label c (c < kMaxLabels).
std::vector<double> label_pattern(std::size_t c, std::size_t H, std::size_t W);
// Normalized label signal in [-1, 1] that the renderer paints for a native value.
double label_signal(double native_value, const LabelScale& scale);

// Deterministic in (cfg, seed). Video ids are "s<subject>_v<index>".
std::vector<Video> generate_corpus(const SynthConfig& cfg, std::uint64_t seed);

// (start + t) mod L for t in [0, T).
std::vector<std::size_t> clip_frame_indices(std::size_t L, std::size_t T, std::size_t start);

// Copies T consecutive frames starting at `start`, looping the video.
Clip extract_clip(const Video& video, std::size_t T, std::size_t start);
// Uniform start in [0, L).
Clip sample_clip(const Video& video, const SamplingConfig& cfg, std::mt19937_64& rng);

// Start frames start + j·T (mod L) for j = -K..K.
std::vector<std::size_t> context_starts(std::size_t L, std::size_t T, std::size_t start, std::size_t K);
// The 2K+1 clips around `clip`, ordered by offset; the center is `clip` itself.
std::vector<Clip> context_window(const Video& video, const Clip& clip, const SamplingConfig& cfg);

// One draw of the clip-level spatial transform.
struct AugmentParams {
  double contrast = 1.0;    // factor in [0.8, 1.2]
  double saturation = 1.0;  // factor in [0.8, 1.2]
  double hue = 0.0;         // shift in turns, [-0.2, 0.2]
  bool flip = false;
  double rotation_deg = 0.0;  // [-30, 30]

  static AugmentParams identity() { return {}; }
  static AugmentParams sample(std::uint64_t seed);
};

// Applies the same transform to every frame; pixels are clipped to [0, 1]
// and the label is untouched.
Clip apply_augment(const Clip& clip, const AugmentParams& params);
Clip augment(const Clip& clip, std::uint64_t seed);

// One element of a training batch. Labels are in the training range; the
// total target is present when the scale defines one.
struct BatchItem {
  Clip clip;
  std::vector<Clip> context;
  std::vector<double> target;  // per-label, training range
  std::optional<double> total_target;
  std::vector<double> similarity_label;
  std::size_t video_index = 0;
};

struct BatchOptions {
  bool augment = false;
  bool total_score = false;
};

// B clips from distinct videos when the pool allows it; otherwise videos are
// drawn with replacement and a warning is logged. Throws ContractError when
// B < 1 or the pool is empty.
std::vector<BatchItem> make_batch(std::span<const Video* const> videos, std::size_t B,
                                  const SamplingConfig& cfg, const BatchOptions& options,
                                  std::mt19937_64& rng);

// Total-score target for a native label vector: the sum of all items,
// mapped onto the item training range.
double total_target(const LabelVector& native);

}  // namespace relaff
