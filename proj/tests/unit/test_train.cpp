#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "relaff/error.hpp"
#include "relaff/train.hpp"

using namespace relaff;

namespace {

struct Env {
  ExperimentConfig cfg = fixtures::tiny_config();
  std::vector<Video> corpus = generate_corpus(cfg.synth, 1);
  VideoRefs refs = video_refs(corpus);
};

std::vector<BatchItem> batch_of(const Env& s, std::size_t B, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return make_batch(s.refs, B, s.cfg.sampling, {}, rng);
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(BatchLosses, LambdaZeroTotalIsRegression) {
  Env s;
  s.cfg.training.lambda = 0.0;
  Model m(s.cfg.encoder, s.cfg.head, 3);
  const auto out = batch_losses(m, batch_of(s, 3, 1), s.cfg, {});
  EXPECT_TRUE(out.total.same_node(out.reg));
  EXPECT_FALSE(out.rel.requires_grad());
  EXPECT_GT(out.rel.item(), 0.0);
}

TEST(BatchLosses, TotalCombinesBoth) {
  Env s;
  s.cfg.training.lambda = 2.0;
  Model m(s.cfg.encoder, s.cfg.head, 3);
  const auto out = batch_losses(m, batch_of(s, 3, 1), s.cfg, {});
  EXPECT_NEAR(out.total.item(), out.reg.item() + 2.0 * out.rel.item(), 1e-14);
}

TEST(GradientFlow, ContextBranchReceivesNothing) {
  Env s;
  s.cfg.training.lambda = 1.0;
  s.cfg.sampling.K = s.cfg.training.K = 2;
  s.cfg.synth.L = 24;
  s.corpus = generate_corpus(s.cfg.synth, 2);
  s.refs = video_refs(s.corpus);
  Model m(s.cfg.encoder, s.cfg.head, 3);
  const auto batch = batch_of(s, 3, 4);

  ForwardOptions audit;
  audit.audit_context = true;
  audit.reuse_center = false;
  const auto a = batch_losses(m, batch, s.cfg, audit);
  backward(a.total);
  double leaked = 0;
  for (const auto& r : a.results) {
    ASSERT_TRUE(r.context_audit.has_value());
    ASSERT_TRUE(r.context_audit->requires_grad());
    for (double g : r.context_audit->grad()) leaked += std::fabs(g);
  }
  EXPECT_EQ(leaked, 0.0);
  const auto with_audit = m.params().entries();
  std::map<std::string, std::vector<double>> grads;
  for (const auto& [name, v] : with_audit)
    if (v.has_grad()) grads[name] = std::vector<double>(v.grad().begin(), v.grad().end());

  // Same step with the branch evaluated off the graph: identical gradients.
  m.params().zero_grad();
  ForwardOptions plain;
  plain.reuse_center = false;
  backward(batch_losses(m, batch, s.cfg, plain).total);
  for (const auto& [name, v] : m.params().entries()) {
    if (!v.has_grad()) continue;
    EXPECT_TRUE(bit_equal(v.grad(), grads.at(name))) << name;
  }
}

TEST(GradientFlow, FrozenTrunkBitIdenticalAfterHundredSteps) {
  Env s;
  s.cfg.training.batches_per_epoch = 100;
  s.cfg.training.lambda = 1.0;
  Model m(s.cfg.encoder, s.cfg.head, 3);
  const auto before = m.params().snapshot();
  Adam opt(m.params(), AdamConfig{1e-2, 5e-3});
  const auto rec = train_epoch(m, opt, s.refs, s.cfg, 0, 9);
  EXPECT_EQ(rec.batches + rec.skipped, 100u);
  EXPECT_EQ(opt.step_count(), rec.batches);
  const auto after = m.params().snapshot();
  for (const auto& name : m.params().frozen()) EXPECT_TRUE(bit_equal(before.at(name), after.at(name))) << name;
  EXPECT_FALSE(bit_equal(before.at("backbone.fc.weight"), after.at("backbone.fc.weight")));
}

TEST(Training, LossDecreasesOnCleanCorpus) {
  Env s;
  s.cfg.synth.noise = 0.0;
  s.cfg.synth.context_dependence = 0.0;
  s.cfg.synth.videos_per_subject = 4;
  s.cfg.synth.subjects = 4;
  s.cfg.encoder.patch_grid = 4;
  s.cfg.encoder.backbone_width = 32;
  s.cfg.training.lambda = 0.0;
  s.cfg.training.B = 8;
  s.cfg.training.batches_per_epoch = 10;
  s.corpus = generate_corpus(s.cfg.synth, 5);
  s.refs = video_refs(s.corpus);
  Model m(s.cfg.encoder, s.cfg.head, 3);
  Adam opt(m.params(), AdamConfig{1e-3, 0.0});
  std::vector<EpochLosses> epochs;
  for (std::size_t e = 0; e < 20; ++e) epochs.push_back(train_epoch(m, opt, s.refs, s.cfg, e, 1));
  EXPECT_LT(epochs.back().reg, 0.5 * epochs.front().reg);
  for (const auto& e : epochs) EXPECT_EQ(e.total, e.reg);
}

TEST(Inference, StrideClipsAndRange) {
  Env s;
  s.cfg.synth.L = 8;
  s.corpus = generate_corpus(s.cfg.synth, 2);
  Model m(s.cfg.encoder, s.cfg.head, 3);
  const auto p = infer_video(m, s.corpus[0], s.cfg.sampling);
  EXPECT_EQ(p.clips, 2u);
  ASSERT_EQ(p.per_label.size(), 2u);
  for (double y : p.per_label) {
    EXPECT_GE(y, -1.0);
    EXPECT_LE(y, 1.0);
  }
  Video short_video = s.corpus[0];
  short_video.L = 3;
  short_video.frames.resize(3 * short_video.frame_size());
  EXPECT_EQ(infer_video(m, short_video, s.cfg.sampling).clips, 1u);
}

TEST(Inference, AverageOfClipPredictions) {
  Env s;
  s.cfg.synth.L = 12;
  s.corpus = generate_corpus(s.cfg.synth, 2);
  Model m(s.cfg.encoder, s.cfg.head, 3);
  const Video& v = s.corpus[0];
  const auto p = infer_video(m, v, s.cfg.sampling);
  ASSERT_EQ(p.clips, 3u);
  std::vector<double> acc(2, 0.0);
  for (std::size_t start : {0, 4, 8}) {
    const Clip c = extract_clip(v, 4, start);
    const auto r = m.forward_pipeline(c, context_window(v, c, s.cfg.sampling));
    for (std::size_t k = 0; k < 2; ++k) acc[k] += r.output.per_label.at(k) / 3.0;
  }
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(p.per_label[k], std::clamp(acc[k], -1.0, 1.0), 1e-12);
}

TEST(Plans, LosoHoldsEachSubjectOutOnce) {
  Env s;
  const auto plan = make_loso_plan(s.corpus, 1.0);
  ASSERT_EQ(plan.folds.size(), 3u);
  std::set<std::string> held;
  for (const auto& f : plan.folds) {
    ASSERT_EQ(f.test_subjects.size(), 1u);
    EXPECT_EQ(f.train_subjects.size(), 2u);
    EXPECT_EQ(std::count(f.train_subjects.begin(), f.train_subjects.end(), f.test_subjects[0]), 0);
    held.insert(f.test_subjects[0]);
  }
  EXPECT_EQ(held.size(), 3u);
  std::vector<Video> one(s.corpus.begin(), s.corpus.begin() + 3);
  EXPECT_THROW(make_loso_plan(one, 1.0), ContractError);
}

TEST(Plans, SplitHoldsOutLastSubjects) {
  Env s;
  const auto plan = make_split_plan(s.corpus, 1, 0.2);
  ASSERT_EQ(plan.folds.size(), 1u);
  EXPECT_EQ(plan.folds[0].test_subjects, (std::vector<std::string>{"s02"}));
  EXPECT_DOUBLE_EQ(plan.subsample_fraction, 0.2);
}

TEST(Ablation, FourVariants) {
  Env s;
  s.cfg.training.lambda = 2.0;
  const auto v = ablation_variants(s.cfg);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v[0].name, "Proposed");
  EXPECT_DOUBLE_EQ(v[0].lambda, 2.0);
  EXPECT_EQ(v[1].name, "w/o L_rel");
  EXPECT_EQ(v[1].lambda, 0.0);
  EXPECT_EQ(v[2].name, "w/o L_rel w/o K");
  EXPECT_EQ(v[2].K, 0u);
  EXPECT_EQ(apply_variant(s.cfg, v[2]).sampling.K, 0u);
  EXPECT_TRUE(v[3].contrastive);
}

TEST(Ablation, ContrastiveFreezesEncoder) {
  Env s;
  const auto plan = make_loso_plan(s.corpus, 1.0);
  const auto r = run_fold(s.corpus, plan.folds[0], 0, 1.0, s.cfg, ablation_variants(s.cfg)[3], true);
  ASSERT_TRUE(r.model);
  EXPECT_EQ(r.pretrain.size(), s.cfg.training.contrastive_epochs);
  EXPECT_TRUE(r.model->params().is_frozen("backbone.fc.weight"));
  EXPECT_TRUE(r.model->params().is_frozen("neck.layer0.attn.wq"));
  EXPECT_FALSE(r.model->params().is_frozen("fusion.theta"));
  EXPECT_FALSE(r.model->params().is_frozen("head.fc.weight"));
}

TEST(Alignment, UntrainedFeaturesNearZero) {
  ExperimentConfig cfg = fixtures::tiny_config();
  cfg.synth.subjects = 8;
  cfg.synth.videos_per_subject = 4;
  cfg.training.B = 8;
  cfg.sampling.K = cfg.training.K = 0;
  const auto corpus = generate_corpus(cfg.synth, 3);
  Model m(cfg.encoder, cfg.head, 4);
  const auto score = alignment_score(m, video_refs(corpus), cfg, 50, 5);
  ASSERT_TRUE(score.has_value());
  EXPECT_LT(std::fabs(*score), 0.2);
}

TEST(Alignment, PerfectPairsScoreOne) {
  SimilarityPairs p;
  p.labels = {0.1, 0.5, 0.9, 0.3};
  p.features = p.labels;
  EXPECT_NEAR(*alignment_score(p), 1.0, 1e-15);
  p.features = {0.2, 0.2, 0.2, 0.2};
  EXPECT_FALSE(alignment_score(p).has_value());
}

TEST(CrossValidation, JobsDoNotChangeResults) {
  Env s;
  const auto plan = make_loso_plan(s.corpus, 1.0);
  const auto a = run_cross_validation(s.corpus, plan, s.cfg, proposed_variant(s.cfg), 1);
  const auto b = run_cross_validation(s.corpus, plan, s.cfg, proposed_variant(s.cfg), 3);
  EXPECT_EQ(format_metrics_csv(a.pooled), format_metrics_csv(b.pooled));
  auto ra = run_record(s.cfg, a), rb = run_record(s.cfg, b);
  ra.erase("wall_clock_seconds");
  rb.erase("wall_clock_seconds");
  EXPECT_EQ(ra, rb);
  EXPECT_EQ(a.pooled.n, s.corpus.size());
  EXPECT_EQ(a.folds.size(), 3u);
}

TEST(CrossValidation, AblationTable) {
  Env s;
  s.cfg.training.epochs = 1;
  const auto rows = run_ablation(s.corpus, s.cfg);
  ASSERT_EQ(rows.size(), 4u);
  const std::string csv = format_ablation_csv(rows, s.cfg.head);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.substr(0, csv.find('\n')).find("alignment_score"), std::string::npos);
}
