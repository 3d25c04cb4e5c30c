#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relaff/config.hpp"
#include "relaff/data.hpp"
#include "relaff/fusion.hpp"
#include "relaff/metrics.hpp"
#include "relaff/optimizer.hpp"

namespace relaff {

using VideoRefs = std::vector<const Video*>;

VideoRefs video_refs(const std::vector<Video>& videos);
// Sorted, de-duplicated subject ids.
std::vector<std::string> subject_ids(const std::vector<Video>& videos);

// Column names for metric tables: "label0".. plus "total" in total-score mode.
std::vector<std::string> label_names(const HeadConfig& head);

struct BatchLosses {
  Value reg;
  Value rel;
  Value total;
  std::vector<PipelineResult> results;
};

// Forward pass of a batch and the three losses. M̂ is built from the
// gradient-carrying clip features, M from the batch's similarity labels. With
// λ = 0 the relational loss is still evaluated, but off the graph, and
// total is reg itself. `contexts`, when given, supplies precomputed context
// features per batch element.
BatchLosses batch_losses(const Model& model, const std::vector<BatchItem>& batch, const ExperimentConfig& cfg,
                         const ForwardOptions& options, std::span<const Value> contexts = {});

struct EpochLosses {
  std::size_t epoch = 0;
  double lr = 0.0;
  double reg = 0.0;  // means over the batches that ran
  double rel = 0.0;
  double total = 0.0;
  std::size_t batches = 0;
  std::size_t skipped = 0;
};

std::size_t batches_per_epoch(std::size_t videos, const TrainingConfig& t);

// One pass of optimizer steps. Batches whose similarity rows or CCC
// denominators degenerate are logged and skipped.
EpochLosses train_epoch(Model& model, Adam& opt, std::span<const Video* const> videos, const ExperimentConfig& cfg,
                        std::size_t epoch, std::uint64_t seed);

// Unsupervised pretraining epoch: two clips of the same video are a positive
// pair, clips of the other videos in the batch are negatives.
EpochLosses contrastive_epoch(Model& model, Adam& opt, std::span<const Video* const> videos,
                              const ExperimentConfig& cfg, std::size_t epoch, std::uint64_t seed);

struct VideoPrediction {
  std::vector<double> per_label;  // native range
  std::optional<double> total;    // native range
  std::size_t clips = 0;
};

// Non-overlapping clips at stride T from frame 0, dropping a final partial
// window; each clip attends over its own context window. Clip predictions
// are averaged in the training range, clamped to it and mapped back to the
// native range. A video shorter than T yields one looped clip.
VideoPrediction infer_video(const Model& model, const Video& video, const SamplingConfig& sampling);

// Off-diagonal (i < j) pairs of (M̂, M) entries from `n_batches` batches.
struct SimilarityPairs {
  std::vector<double> features;
  std::vector<double> labels;
};
SimilarityPairs similarity_pairs(const Model& model, std::span<const Video* const> videos, const ExperimentConfig& cfg,
                                 std::size_t n_batches, std::uint64_t seed);
// Pearson correlation of the pairs; nullopt when either side is constant.
std::optional<double> alignment_score(const SimilarityPairs& pairs);
std::optional<double> alignment_score(const Model& model, std::span<const Video* const> videos,
                                      const ExperimentConfig& cfg, std::size_t n_batches, std::uint64_t seed);

struct Fold {
  std::vector<std::string> test_subjects;
  std::vector<std::string> train_subjects;
};

struct FoldPlan {
  std::vector<Fold> folds;
  double subsample_fraction = 1.0;
};

// One fold per subject. Throws ContractError for fewer than two subjects.
FoldPlan make_loso_plan(const std::vector<Video>& videos, double subsample_fraction);
// A single fold holding out the last `holdout` subjects in id order.
FoldPlan make_split_plan(const std::vector<Video>& videos, std::size_t holdout, double subsample_fraction);
FoldPlan make_plan(const std::vector<Video>& videos, const TrainingConfig& training);

// A training recipe compared in the ablation.
struct Variant {
  std::string name;
  double lambda = 1.0;
  std::size_t K = 1;
  bool contrastive = false;  // pretrain the encoder contrastively, then freeze it
};

Variant proposed_variant(const ExperimentConfig& cfg);
// Proposed, w/o L_rel, w/o L_rel w/o K, contrastive.
std::vector<Variant> ablation_variants(const ExperimentConfig& cfg);
ExperimentConfig apply_variant(const ExperimentConfig& cfg, const Variant& variant);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::string> test_subjects;
  std::size_t train_videos = 0;
  std::vector<EpochLosses> pretrain;
  std::vector<EpochLosses> epochs;
  std::vector<std::string> video_ids;
  Table prediction;  // native range, one row per held-out video
  Table truth;
  SimilarityPairs pairs;
  std::unique_ptr<Model> model;  // kept only on request
};

FoldResult run_fold(const std::vector<Video>& videos, const Fold& fold, std::size_t fold_index, double subsample_fraction,
                    const ExperimentConfig& cfg, const Variant& variant, bool keep_model = false);

struct CrossValidationResult {
  Variant variant;
  std::vector<FoldResult> folds;
  MetricsReport pooled;         // all held-out videos together
  MetricsReport mean_of_folds;  // per-fold metrics averaged
  std::optional<double> alignment;
  double seconds = 0.0;
};

// Folds run on up to `jobs` threads; results do not depend on `jobs`.
CrossValidationResult run_cross_validation(const std::vector<Video>& videos, const FoldPlan& plan,
                                           const ExperimentConfig& cfg, const Variant& variant, std::size_t jobs = 1,
                                           bool keep_models = false);

std::vector<CrossValidationResult> run_ablation(const std::vector<Video>& videos, const ExperimentConfig& cfg,
                                                std::size_t jobs = 1);

// One row per variant: MAE, RMSE, PCC, CCC per label, the label means and
// the alignment score.
std::string format_ablation_csv(const std::vector<CrossValidationResult>& rows, const HeadConfig& head);

// Everything needed to replay and audit a run. `wall_clock_seconds` is the
// only field that differs between identical runs.
nlohmann::json run_record(const ExperimentConfig& cfg, const CrossValidationResult& result);

}  // namespace relaff
