#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relaff/data.hpp"
#include "relaff/encoder.hpp"
#include "relaff/fusion.hpp"
#include "relaff/losses.hpp"

namespace relaff {

enum class Protocol { loso, split };

struct TrainingConfig {
  LossKind loss_kind = LossKind::rmse;
  double lambda = 1.0;
  std::size_t B = 8;
  std::size_t epochs = 15;
  double lr = 1e-4;
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 5;
  double weight_decay = 5e-3;
  std::size_t K = 1;
  double subsample_fraction = 1.0;
  std::size_t batches_per_epoch = 0;  // 0: ceil(training videos / B)
  bool augment = true;
  bool reuse_center = true;
  Protocol protocol = Protocol::loso;
  std::size_t holdout_subjects = 1;  // split protocol: last n subjects are held out
  std::size_t contrastive_epochs = 10;
  double contrastive_temperature = kDefaultTemperature;
  std::size_t alignment_batches = 50;
};

struct Seeds {
  std::uint64_t corpus = 1;
  std::uint64_t init = 2;
  std::uint64_t train = 3;
};

struct ExperimentConfig {
  EncoderConfig encoder;
  HeadConfig head;
  SamplingConfig sampling;
  SynthConfig synth;
  TrainingConfig training;
  Seeds seeds;

  // Section and cross-field checks; throws ConfigError naming the field.
  void validate() const;
  SamplingConfig sampling_for(std::size_t K) const;
};

// Parses a JSON document. Missing keys take their defaults; unknown keys,
// wrong types and invalid values raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every field, defaults included.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Throws ConfigError when a stored corpus cannot feed this config (label
// count, frame size, scale, or videos shorter than a clip).
void check_corpus_compatible(const ExperimentConfig& cfg, const std::vector<Video>& videos);

// Applies "name=value" to the seeds section ("train=7" or "seeds.train=7").
void apply_seed_override(ExperimentConfig& cfg, const std::string& assignment);

std::string to_string(LossKind kind);
std::string to_string(Protocol protocol);

}  // namespace relaff
