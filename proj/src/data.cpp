#include "relaff/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "relaff/error.hpp"
#include "relaff/random.hpp"

namespace relaff {

namespace {

struct Mode {
  int fx, fy;
};

// DCT-II modes; distinct modes are exactly orthogonal on the pixel grid.
constexpr std::array<Mode, kMaxLabels> kLabelModes{
    {{1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {2, 1}, {1, 2}, {2, 2}}};
constexpr std::array<Mode, 8> kAppearanceModes{
    {{0, 0}, {3, 0}, {0, 3}, {3, 1}, {1, 3}, {3, 2}, {2, 3}, {3, 3}}};
constexpr std::array<std::array<double, 3>, kMaxLabels> kLabelColours{{{1.0, 0.6, 0.3},
                                                                       {0.3, 0.7, 1.0},
                                                                       {0.8, 1.0, 0.4},
                                                                       {1.0, 0.3, 0.8},
                                                                       {0.5, 0.5, 1.0},
                                                                       {1.0, 1.0, 0.3},
                                                                       {0.4, 1.0, 0.8},
                                                                       {0.9, 0.5, 0.6}}};
constexpr double kPixelNoiseScale = 0.05;
constexpr double kVideoVariation = 0.3;  // relative to subject variation

std::vector<double> mode_field(Mode m, std::size_t H, std::size_t W) {
  std::vector<double> field(H * W);
  for (std::size_t y = 0; y < H; ++y) {
    const double cy = std::cos(std::numbers::pi * m.fy * (static_cast<double>(y) + 0.5) / static_cast<double>(H));
    for (std::size_t x = 0; x < W; ++x) {
      const double cx = std::cos(std::numbers::pi * m.fx * (static_cast<double>(x) + 0.5) / static_cast<double>(W));
      field[y * W + x] = cx * cy;
    }
  }
  return field;
}

std::size_t wrap(long long v, std::size_t L) {
  const long long m = static_cast<long long>(L);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

}  // namespace

void SynthConfig::validate() const {
  const SynthConfig& cfg = *this;
  if (cfg.subjects < 1) throw ConfigError("synth.subjects", "must be >= 1");
  if (cfg.videos_per_subject < 1) throw ConfigError("synth.videos_per_subject", "must be >= 1");
  if (cfg.L < 1) throw ConfigError("synth.L", "must be >= 1");
  if (cfg.H < 4 || cfg.W < 4) throw ConfigError("synth.H", "frames must be at least 4x4");
  if (cfg.C < 1 || cfg.C > kMaxLabels) throw ConfigError("synth.C", fmt::format("must be in [1, {}]", kMaxLabels));
  if (!(cfg.context_dependence >= 0.0 && cfg.context_dependence <= 1.0)) {
    throw ConfigError("synth.context_dependence", "must be in [0, 1]");
  }
  if (!(cfg.noise >= 0.0)) throw ConfigError("synth.noise", "must be >= 0");
  if (cfg.context_period < 1) throw ConfigError("synth.context_period", "must be >= 1");
  try {
    (void)label_scale(cfg.scale);
  } catch (const RangeError& e) {
    throw ConfigError("synth.scale", e.what());
  }
}


void Clip::validate(std::size_t expected_T) const {
  if (T != expected_T) {
    throw DimensionError(fmt::format("clip has {} frames, configuration expects {}", T, expected_T));
  }
  if (frames.size() != T * H * W * 3) {
    throw DimensionError(fmt::format("clip buffer holds {} values, expected {}", frames.size(), T * H * W * 3));
  }
  for (float v : frames) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("clip pixel outside [0, 1] or not finite");
  }
}

std::vector<double> label_pattern(std::size_t c, std::size_t H, std::size_t W) {
  if (c >= kMaxLabels) throw RangeError(fmt::format("label index {} exceeds {}", c, kMaxLabels));
  auto field = mode_field(kLabelModes[c], H, W);
  std::vector<double> out(H * W * 3);
  for (std::size_t p = 0; p < H * W; ++p)
    for (std::size_t ch = 0; ch < 3; ++ch) out[p * 3 + ch] = field[p] * kLabelColours[c][ch];
  return out;
}

double label_signal(double native_value, const LabelScale& scale) {
  return 2.0 * (native_value - scale.native_lo) / (scale.native_hi - scale.native_lo) - 1.0;
}

std::vector<Video> generate_corpus(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const LabelScale scale = label_scale(cfg.scale);
  const std::size_t H = cfg.H, W = cfg.W, C = cfg.C, L = cfg.L;
  const std::size_t npix = H * W;

  std::vector<std::vector<double>> patterns;
  for (std::size_t c = 0; c < C; ++c) patterns.push_back(label_pattern(c, H, W));
  std::vector<std::vector<double>> appearance_fields;
  for (const auto& m : kAppearanceModes) appearance_fields.push_back(mode_field(m, H, W));

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto appearance = [&](std::mt19937_64& rng, double amplitude) {
    std::vector<double> img(npix * 3, 0.0);
    for (const auto& field : appearance_fields) {
      std::array<double, 3> coef{};
      for (double& k : coef) k = gauss(rng) * amplitude * 0.5;
      for (std::size_t p = 0; p < npix; ++p)
        for (std::size_t ch = 0; ch < 3; ++ch) img[p * 3 + ch] += coef[ch] * field[p];
    }
    return img;
  };

  std::vector<Video> corpus;
  corpus.reserve(cfg.subjects * cfg.videos_per_subject);
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    std::mt19937_64 subject_rng(derive_seed(seed, {0x5b, s}));
    const auto subject_look = appearance(subject_rng, cfg.subject_variation);
    for (std::size_t v = 0; v < cfg.videos_per_subject; ++v) {
      std::mt19937_64 rng(derive_seed(seed, {0x71, s, v}));
      Video video;
      video.subject_id = fmt::format("s{:02}", s);
      video.video_id = fmt::format("s{:02}_v{:02}", s, v);
      video.L = L;
      video.H = H;
      video.W = W;
      video.fps = cfg.fps;
      video.labels.scale = scale;
      std::vector<double> signal(C), phase(C);
      for (std::size_t c = 0; c < C; ++c) {
        const double y = scale.native_lo + unit(rng) * (scale.native_hi - scale.native_lo);
        video.labels.values.push_back(y);
        signal[c] = label_signal(y, scale);
        phase[c] = 2.0 * std::numbers::pi * unit(rng);
      }
      auto look = appearance(rng, cfg.subject_variation * kVideoVariation);
      for (std::size_t i = 0; i < look.size(); ++i) look[i] += subject_look[i];

      video.frames.resize(L * npix * 3);
      std::vector<double> display(C);
      for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t c = 0; c < C; ++c) {
          const double osc = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                          static_cast<double>(cfg.context_period) +
                                      phase[c]);
          display[c] = signal[c] + cfg.context_dependence * kOscillationGain * osc + cfg.noise * gauss(rng);
        }
        float* out = video.frames.data() + t * npix * 3;
        for (std::size_t i = 0; i < npix * 3; ++i) {
          double px = 0.5 + look[i];
          for (std::size_t c = 0; c < C; ++c) px += kLabelAmplitude * display[c] * patterns[c][i];
          if (cfg.noise > 0.0) px += cfg.noise * kPixelNoiseScale * gauss(rng);
          out[i] = static_cast<float>(std::clamp(px, 0.0, 1.0));
        }
      }
      corpus.push_back(std::move(video));
    }
  }
  return corpus;
}

std::vector<std::size_t> clip_frame_indices(std::size_t L, std::size_t T, std::size_t start) {
  if (L == 0) throw ContractError("clip_frame_indices: empty video");
  std::vector<std::size_t> idx(T);
  for (std::size_t t = 0; t < T; ++t) idx[t] = (start + t) % L;
  return idx;
}

Clip extract_clip(const Video& video, std::size_t T, std::size_t start) {
  Clip clip;
  clip.T = T;
  clip.H = video.H;
  clip.W = video.W;
  clip.video_id = video.video_id;
  clip.start_frame = start % video.L;
  clip.label = video.labels;
  clip.frames.reserve(T * video.frame_size());
  for (std::size_t t : clip_frame_indices(video.L, T, clip.start_frame)) {
    auto f = video.frame(t);
    clip.frames.insert(clip.frames.end(), f.begin(), f.end());
  }
  return clip;
}

Clip sample_clip(const Video& video, const SamplingConfig& cfg, std::mt19937_64& rng) {
  if (video.L < 1) throw ContractError("sample_clip: empty video");
  std::uniform_int_distribution<std::size_t> dist(0, video.L - 1);
  return extract_clip(video, cfg.T, dist(rng));
}

std::vector<std::size_t> context_starts(std::size_t L, std::size_t T, std::size_t start, std::size_t K) {
  std::vector<std::size_t> out;
  out.reserve(2 * K + 1);
  const long long k = static_cast<long long>(K);
  for (long long j = -k; j <= k; ++j) {
    out.push_back(wrap(static_cast<long long>(start) + j * static_cast<long long>(T), L));
  }
  return out;
}

std::vector<Clip> context_window(const Video& video, const Clip& clip, const SamplingConfig& cfg) {
  std::vector<Clip> out;
  out.reserve(2 * cfg.K + 1);
  const auto starts = context_starts(video.L, cfg.T, clip.start_frame, cfg.K);
  for (std::size_t j = 0; j < starts.size(); ++j) {
    if (j == cfg.K) {
      out.push_back(clip);
    } else {
      out.push_back(extract_clip(video, cfg.T, starts[j]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentParams AugmentParams::sample(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> factor(0.8, 1.2);
  std::uniform_real_distribution<double> hue(-0.2, 0.2);
  std::uniform_real_distribution<double> angle(-30.0, 30.0);
  std::bernoulli_distribution flip(0.5);
  AugmentParams p;
  p.contrast = factor(rng);
  p.saturation = factor(rng);
  p.hue = hue(rng);
  p.flip = flip(rng);
  p.rotation_deg = angle(rng);
  return p;
}

namespace {

double gray(const float* px) { return 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]; }

void shift_hue(float* px, double turns) {
  const double r = px[0], g = px[1], b = px[2];
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  if (delta <= 0.0) return;
  double h;
  if (mx == r) {
    h = std::fmod((g - b) / delta, 6.0);
  } else if (mx == g) {
    h = (b - r) / delta + 2.0;
  } else {
    h = (r - g) / delta + 4.0;
  }
  h = h / 6.0 + turns;
  h -= std::floor(h);
  const double s = delta / mx, v = mx;
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  double rr, gg, bb;
  switch (sector) {
    case 0: rr = v, gg = t, bb = p; break;
    case 1: rr = q, gg = v, bb = p; break;
    case 2: rr = p, gg = v, bb = t; break;
    case 3: rr = p, gg = q, bb = v; break;
    case 4: rr = t, gg = p, bb = v; break;
    default: rr = v, gg = p, bb = q; break;
  }
  px[0] = static_cast<float>(rr);
  px[1] = static_cast<float>(gg);
  px[2] = static_cast<float>(bb);
}

void transform_frame(std::span<float> frame, std::size_t H, std::size_t W, const AugmentParams& p) {
  const std::size_t npix = H * W;
  if (p.contrast != 1.0) {
    double m = 0.0;
    for (std::size_t i = 0; i < npix; ++i) m += gray(&frame[i * 3]);
    m /= static_cast<double>(npix);
    for (float& v : frame) v = static_cast<float>(p.contrast * v + (1.0 - p.contrast) * m);
  }
  if (p.saturation != 1.0) {
    for (std::size_t i = 0; i < npix; ++i) {
      float* px = &frame[i * 3];
      const double g = gray(px);
      for (int ch = 0; ch < 3; ++ch) px[ch] = static_cast<float>(p.saturation * px[ch] + (1.0 - p.saturation) * g);
    }
  }
  for (float& v : frame) v = std::clamp(v, 0.0f, 1.0f);
  if (p.hue != 0.0) {
    for (std::size_t i = 0; i < npix; ++i) shift_hue(&frame[i * 3], p.hue);
  }
  if (p.flip) {
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W / 2; ++x)
        for (int ch = 0; ch < 3; ++ch) std::swap(frame[(y * W + x) * 3 + ch], frame[(y * W + (W - 1 - x)) * 3 + ch]);
  }
  if (p.rotation_deg != 0.0) {
    const std::vector<float> src(frame.begin(), frame.end());
    const double a = p.rotation_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cy = (static_cast<double>(H) - 1.0) / 2.0, cx = (static_cast<double>(W) - 1.0) / 2.0;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        // Inverse rotation: where does output pixel (y, x) come from.
        const long sx = std::lround(ca * dx + sa * dy + cx);
        const long sy = std::lround(-sa * dx + ca * dy + cy);
        const bool inside = sx >= 0 && sy >= 0 && sx < static_cast<long>(W) && sy < static_cast<long>(H);
        for (int ch = 0; ch < 3; ++ch) {
          frame[(y * W + x) * 3 + ch] = inside ? src[(static_cast<std::size_t>(sy) * W + static_cast<std::size_t>(sx)) * 3 + ch] : 0.0f;
        }
      }
    }
  }
  for (float& v : frame) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

Clip apply_augment(const Clip& clip, const AugmentParams& params) {
  Clip out = clip;
  const std::size_t fs = clip.frame_size();
  for (std::size_t t = 0; t < clip.T; ++t) {
    transform_frame(std::span<float>(out.frames).subspan(t * fs, fs), clip.H, clip.W, params);
  }
  return out;
}

Clip augment(const Clip& clip, std::uint64_t seed) { return apply_augment(clip, AugmentParams::sample(seed)); }

// ---------------------------------------------------------------------------
// Batching

double total_target(const LabelVector& native) {
  const LabelScale ts = total_scale(native.scale, native.values.size());
  double s = 0.0;
  for (double v : native.values) s += v;
  return scale_label_value(s, ts, ScaleDirection::to_train_range);
}

std::vector<BatchItem> make_batch(std::span<const Video* const> videos, std::size_t B,
                                  const SamplingConfig& cfg, const BatchOptions& options,
                                  std::mt19937_64& rng) {
  if (B < 1) throw ContractError("make_batch: batch size must be >= 1");
  if (videos.empty()) throw ContractError("make_batch: no videos to sample from");

  std::vector<std::size_t> picks;
  if (videos.size() >= B) {
    std::vector<std::size_t> order(videos.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < B; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, order.size() - 1);
      std::swap(order[i], order[d(rng)]);
    }
    picks.assign(order.begin(), order.begin() + static_cast<long>(B));
  } else {
    spdlog::warn("make_batch: only {} videos for a batch of {}; sampling with replacement", videos.size(), B);
    std::uniform_int_distribution<std::size_t> d(0, videos.size() - 1);
    for (std::size_t i = 0; i < B; ++i) picks.push_back(d(rng));
  }

  std::vector<BatchItem> batch;
  batch.reserve(B);
  for (std::size_t idx : picks) {
    const Video& video = *videos[idx];
    BatchItem item;
    item.video_index = idx;
    item.clip = sample_clip(video, cfg, rng);
    item.context = context_window(video, item.clip, cfg);
    if (options.augment) {
      const auto params = AugmentParams::sample(rng());
      item.clip = apply_augment(item.clip, params);
      for (auto& c : item.context) c = apply_augment(c, params);
    }
    item.target = scale_labels(video.labels, ScaleDirection::to_train_range).values;
    if (options.total_score) item.total_target = total_target(video.labels);
    item.similarity_label = similarity_labels(item.target, video.labels.scale);
    batch.push_back(std::move(item));
  }
  return batch;
}

}  // namespace relaff
