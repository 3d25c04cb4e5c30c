#pragma once

#include "relaff/config.hpp"

namespace relaff::fixtures {

// Small enough that a forward pass takes microseconds.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.encoder.T = 4;
  cfg.encoder.H = cfg.encoder.W = 8;
  cfg.encoder.D = cfg.encoder.D_f = 16;
  cfg.encoder.transformer_layers = 1;
  cfg.encoder.attention_heads = 2;
  cfg.encoder.feedforward_width = 16;
  cfg.encoder.patch_grid = 2;
  cfg.encoder.backbone_width = 16;
  cfg.head.C = 2;
  cfg.head.penultimate_width = 8;
  cfg.head.dropout_rate = 0.0;
  cfg.sampling.T = 4;
  cfg.sampling.K = 1;
  cfg.synth.subjects = 3;
  cfg.synth.videos_per_subject = 3;
  cfg.synth.L = 16;
  cfg.synth.H = cfg.synth.W = 8;
  cfg.training.B = 3;
  cfg.training.K = 1;
  cfg.training.epochs = 2;
  cfg.training.lr = 1e-3;
  cfg.training.batches_per_epoch = 2;
  cfg.training.augment = false;
  cfg.training.contrastive_epochs = 1;
  cfg.training.alignment_batches = 3;
  return cfg;
}

}  // namespace relaff::fixtures
