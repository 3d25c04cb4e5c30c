#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "relaff/data.hpp"
#include "relaff/error.hpp"
#include "relaff/fusion.hpp"
#include "relaff/gradcheck.hpp"

using namespace relaff;

namespace {

struct Env {
  ExperimentConfig cfg = fixtures::tiny_config();
  std::vector<Video> corpus = generate_corpus(cfg.synth, 1);
  Model model{cfg.encoder, cfg.head, 5};
};

void set_identity(Value& w) {
  auto d = w.mutable_data();
  const std::size_t n = w.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i * n + j] = i == j ? 1.0 : 0.0;
}

}  // namespace

TEST(PositionalEncoding, BruteForceFormula) {
  const auto pe = positional_encoding(4, 8);
  ASSERT_EQ(pe.size(), 32u);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 4; ++i) {
      const double angle = static_cast<double>(t) / std::pow(10000.0, 2.0 * static_cast<double>(i) / 8.0);
      EXPECT_NEAR(pe[t * 8 + 2 * i], std::sin(angle), 1e-15);
      EXPECT_NEAR(pe[t * 8 + 2 * i + 1], std::cos(angle), 1e-15);
    }
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(pe[j], j % 2 == 0 ? 0.0 : 1.0);
}

TEST(PositionalEncoding, AdditiveAndContentIndependent) {
  Env s;
  const auto& enc = s.model.encoder();
  const Value a = Value::constant({4, 16}, std::vector<double>(64, 0.0));
  const Value b = Value::constant({4, 16}, std::vector<double>(64, 2.5));
  const Value pa = enc.positional_encode(a), pb = enc.positional_encode(b);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(pb.data()[i] - pa.data()[i], 2.5, 1e-15);
}

TEST(Encoder, Shapes) {
  Env s;
  const Clip c = extract_clip(s.corpus[0], 4, 0);
  const auto& enc = s.model.encoder();
  EXPECT_EQ(enc.backbone_forward(c).shape(), (Shape{4, 16}));
  EXPECT_EQ(enc.transformer_encoder(enc.backbone_forward(c)).shape(), (Shape{4, 16}));
  EXPECT_EQ(enc.encode_clip(c).shape(), (Shape{16}));
}

TEST(Encoder, IdenticalFramesGiveIdenticalFeatures) {
  Env s;
  Clip c = extract_clip(s.corpus[0], 4, 0);
  for (std::size_t t = 1; t < 4; ++t) std::copy(c.frame(0).begin(), c.frame(0).end(), c.frames.begin() + t * c.frame_size());
  const Value f = s.model.encoder().backbone_forward(c);
  for (std::size_t t = 1; t < 4; ++t)
    for (std::size_t d = 0; d < 16; ++d) EXPECT_EQ(f.at(t, d), f.at(0, d));
  const Clip copy = c;
  const Value z1 = s.model.encoder().encode_clip(c), z2 = s.model.encoder().encode_clip(copy);
  EXPECT_TRUE(std::equal(z1.data().begin(), z1.data().end(), z2.data().begin()));
}

TEST(Encoder, ZeroedTransformerIsResidualIdentity) {
  Env s;
  for (auto& [name, v] : s.model.params().entries()) {
    if (name.rfind("neck.", 0) != 0) continue;
    Value p = v;
    for (double& x : p.mutable_data()) x = 0.0;
  }
  std::mt19937_64 rng(2);
  std::vector<double> d(64);
  for (double& x : d) x = std::normal_distribution<double>()(rng);
  const Value x = Value::constant({4, 16}, d);
  const Value y = s.model.encoder().transformer_encoder(x);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(y.data()[i], d[i]);
}

TEST(Encoder, FrameOrderMatters) {
  Env s;
  const Clip c = extract_clip(s.corpus[0], 4, 0);
  const auto& enc = s.model.encoder();
  const Value f = enc.backbone_forward(c);
  std::vector<double> rev(f.size());
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < 16; ++j) rev[t * 16 + j] = f.at(3 - t, j);
  const Value a = enc.transformer_encoder(enc.positional_encode(f));
  const Value b = enc.transformer_encoder(enc.positional_encode(Value::constant({4, 16}, rev)));
  double diff = 0;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < 16; ++j) diff += std::fabs(a.at(t, j) - b.at(3 - t, j));
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoder, ContextCenterRowIsDetachedClipFeature) {
  Env s;
  const Video& v = s.corpus[1];
  const Clip c = extract_clip(v, 4, 5);
  const auto ctx = context_window(v, c, SamplingConfig{4, 2, 0});
  const Value z = s.model.encoder().encode_clip(c);
  const Value Z = s.model.encoder().encode_context(ctx);
  ASSERT_EQ(Z.shape(), (Shape{5, 16}));
  EXPECT_FALSE(Z.requires_grad());
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(Z.at(2, j), z.at(j));
  const Value Zr = s.model.encoder().encode_context(ctx, &z);
  EXPECT_TRUE(std::equal(Z.data().begin(), Z.data().end(), Zr.data().begin()));
}

TEST(Encoder, ProjectionGradientCheck) {
  Env s;
  const Clip c = extract_clip(s.corpus[0], 4, 0);
  Value w = s.model.params().get("backbone.fc.weight");
  auto f = [&] { return sum(square(s.model.encoder().encode_clip(c))); };
  EXPECT_LT(grad_check(f, w).max_relative_error, 1e-5);
}

TEST(Encoder, TrunkIsFrozen) {
  Env s;
  EXPECT_TRUE(s.model.params().is_frozen("backbone.frozen.weight"));
  EXPECT_FALSE(s.model.params().get("backbone.frozen.weight").requires_grad());
  EXPECT_FALSE(s.model.params().is_frozen("backbone.fc.weight"));
}

TEST(Fusion, SingleSlotIdentityReturnsZ) {
  Env s;
  for (const char* n : {"fusion.theta", "fusion.phi", "fusion.g"}) set_identity(s.model.params().get(n));
  const Value z = Value::constant({16}, std::vector<double>(16, 0.3));
  const auto a = s.model.fusion().nonlocal_attend(z, Value::constant({1, 16}, std::vector<double>(16, 0.3)));
  EXPECT_EQ(a.weights.at(0), 1.0);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(a.out.at(j), 0.3, 1e-15);
}

TEST(Fusion, WeightsSumToOneAndEqualRowsIgnoreThem) {
  Env s;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::vector<double> zd(16), Zd(5 * 16), row(16);
  for (double& x : zd) x = n(rng);
  for (double& x : Zd) x = n(rng);
  for (double& x : row) x = n(rng);
  const Value z = Value::constant({16}, zd);
  const auto a = s.model.fusion().nonlocal_attend(z, Value::constant({5, 16}, Zd));
  double total = 0;
  for (double w : a.weights.data()) total += w;
  EXPECT_NEAR(total, 1.0, 1e-14);

  std::vector<double> same;
  for (int k = 0; k < 5; ++k) same.insert(same.end(), row.begin(), row.end());
  const auto b = s.model.fusion().nonlocal_attend(z, Value::constant({5, 16}, same));
  const auto b1 = s.model.fusion().nonlocal_attend(z, Value::constant({1, 16}, row));
  for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(b.out.at(j), b1.out.at(j), 1e-14);
}

TEST(Fusion, FuseKeepsZFirst) {
  Env s;
  const Clip c = extract_clip(s.corpus[0], 4, 0);
  const Value z = s.model.encoder().encode_clip(c);
  const Value f = s.model.fusion().fuse(z, Value::constant({3, 16}, std::vector<double>(48, 0.1)));
  ASSERT_EQ(f.size(), 32u);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(f.at(j), z.at(j));
}

TEST(Head, LabelCountsAndMask) {
  ExperimentConfig cfg = fixtures::tiny_config();
  cfg.head.C = 4;
  cfg.head.penultimate_width = 8;
  cfg.head.supervised_mask = {true, true, true, false};
  cfg.head.total_score_enabled = true;
  Model m(cfg.encoder, cfg.head, 1);
  EXPECT_EQ(cfg.head.supervised_indices(), (std::vector<std::size_t>{0, 1, 2}));
  const auto out = m.head().forward(Value::constant({32}, std::vector<double>(32, 0.2)), false, nullptr);
  EXPECT_EQ(out.per_label.size(), 4u);
  ASSERT_TRUE(out.total.has_value());
  EXPECT_EQ(out.penultimate.size(), 8u);
}

TEST(Head, EvalModeDeterministicTrainModeDrops) {
  ExperimentConfig cfg = fixtures::tiny_config();
  cfg.head.dropout_rate = 0.5;
  cfg.head.penultimate_width = 64;
  Model m(cfg.encoder, cfg.head, 1);
  const Value x = Value::constant({32}, std::vector<double>(32, 0.5));
  const auto a = m.head().forward(x, false, nullptr), b = m.head().forward(x, false, nullptr);
  EXPECT_EQ(a.per_label.at(0), b.per_label.at(0));
  std::mt19937_64 rng(1);
  const auto t = m.head().forward(x, true, &rng);
  std::size_t zeros = 0;
  for (double v : t.penultimate.data()) zeros += v == 0.0;
  EXPECT_GT(zeros, a.penultimate.size() / 8);
  EXPECT_THROW(m.head().forward(x, true, nullptr), ContractError);
}

TEST(Head, InvalidConfig) {
  HeadConfig h;
  h.C = 3;
  h.penultimate_width = 8;
  try {
    h.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "head.penultimate_width");
  }
}

TEST(Pipeline, ShapesAndFiniteness) {
  Env s;
  const Video& v = s.corpus[2];
  const Clip c = extract_clip(v, 4, 3);
  const auto ctx = context_window(v, c, s.cfg.sampling);
  const auto r = s.model.forward_pipeline(c, ctx);
  EXPECT_EQ(r.z.size(), 16u);
  EXPECT_EQ(r.context.shape(), (Shape{3, 16}));
  EXPECT_EQ(r.attention_weights.size(), 3u);
  for (double y : r.output.per_label.data()) EXPECT_TRUE(std::isfinite(y));
  EXPECT_THROW(s.model.forward_pipeline(c, std::span<const Clip>(ctx.data(), 2)), ContractError);
}
