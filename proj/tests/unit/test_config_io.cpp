#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "relaff/config.hpp"
#include "relaff/error.hpp"
#include "relaff/io.hpp"
#include "relaff/fusion.hpp"

using namespace relaff;
namespace fs = std::filesystem;

namespace {

std::string field_of(const nlohmann::json& doc) {
  try {
    config_from_json(doc).validate();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("relaff_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(ExperimentConfig{}.validate()); }

TEST(Config, JsonRoundTrip) {
  ExperimentConfig cfg = fixtures::tiny_config();
  cfg.training.lambda = 2.0;
  cfg.training.loss_kind = LossKind::one_minus_ccc;
  cfg.training.protocol = Protocol::split;
  cfg.seeds.train = 99;
  const auto doc = config_to_json(cfg);
  EXPECT_EQ(config_to_json(config_from_json(doc)), doc);
  EXPECT_EQ(doc["training"]["loss_kind"], "one_minus_ccc");
}

TEST(Config, InvalidFieldsAreNamed) {
  EXPECT_EQ(field_of({{"head", {{"C", 0}}}}), "head.C");
  EXPECT_EQ(field_of({{"training", {{"lambda", -1.0}}}}), "training.lambda");
  EXPECT_EQ(field_of({{"training", {{"loss_kind", "mae"}}}}), "training.loss_kind");
  EXPECT_EQ(field_of({{"training", {{"bogus", 1}}}}), "training.bogus");
  EXPECT_EQ(field_of({{"nonsense", {}}}), "nonsense");
  EXPECT_EQ(field_of({{"sampling", {{"T", 8}}}}), "sampling.T");
  EXPECT_EQ(field_of({{"sampling", {{"K", 2}}}}), "training.K");
  EXPECT_EQ(field_of({{"encoder", {{"D", 30}, {"D_f", 30}}}}), "encoder.attention_heads");
  EXPECT_EQ(field_of({{"training", {{"B", "eight"}}}}), "training.B");
  EXPECT_EQ(field_of({{"synth", {{"subjects", 1}}}}), "synth.subjects");
}

TEST(Config, NessStyleAccepted) {
  const nlohmann::json doc = {
      {"encoder", {{"T", 32}}},
      {"sampling", {{"T", 32}, {"K", 2}}},
      {"synth", {{"L", 128}}},
      {"training", {{"K", 2}, {"B", 4}, {"lambda", 2.0}, {"loss_kind", "rmse"}}},
  };
  EXPECT_NO_THROW(config_from_json(doc).validate());
}

TEST(Config, SeedOverride) {
  ExperimentConfig cfg;
  apply_seed_override(cfg, "train=7");
  EXPECT_EQ(cfg.seeds.train, 7u);
  apply_seed_override(cfg, "seeds.init=8");
  EXPECT_EQ(cfg.seeds.init, 8u);
  EXPECT_THROW(apply_seed_override(cfg, "train"), ConfigError);
  EXPECT_THROW(apply_seed_override(cfg, "color=1"), ConfigError);
  EXPECT_THROW(apply_seed_override(cfg, "train=-1"), ConfigError);
}

TEST(Config, LoadFileErrors) {
  const fs::path dir = scratch("cfg");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "ok.json") << R"({"training": {"lambda": 2}})";
  EXPECT_DOUBLE_EQ(load_config(dir / "ok.json").training.lambda, 2.0);
}

TEST(Config, CorpusCompatibility) {
  ExperimentConfig cfg = fixtures::tiny_config();
  const auto corpus = generate_corpus(cfg.synth, 1);
  EXPECT_NO_THROW(check_corpus_compatible(cfg, corpus));
  ExperimentConfig other = cfg;
  other.head.C = 3;
  other.synth.C = 3;
  EXPECT_THROW(check_corpus_compatible(other, corpus), ConfigError);
}

TEST(Io, CorpusRoundTrip) {
  const fs::path dir = scratch("corpus");
  SynthConfig sc = fixtures::tiny_config().synth;
  sc.scale = "panss";
  const auto corpus = generate_corpus(sc, 3);
  write_corpus(dir, corpus);
  const auto back = read_corpus(dir);
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(back[i].video_id, corpus[i].video_id);
    EXPECT_EQ(back[i].subject_id, corpus[i].subject_id);
    EXPECT_EQ(back[i].frames, corpus[i].frames);
    EXPECT_EQ(back[i].labels.values, corpus[i].labels.values);
    EXPECT_EQ(back[i].labels.scale, corpus[i].labels.scale);
  }
}

TEST(Io, MissingOrCorruptCorpus) {
  EXPECT_THROW(read_corpus(scratch("empty")), IoError);
  const fs::path dir = scratch("corrupt");
  write_corpus(dir, generate_corpus(fixtures::tiny_config().synth, 1));
  fs::resize_file(dir / "s00_v00.rafv", 20);
  EXPECT_THROW(read_corpus(dir), IoError);
}

TEST(Io, WeightsRoundTripBitExact) {
  const auto cfg = fixtures::tiny_config();
  Model a(cfg.encoder, cfg.head, 1), b(cfg.encoder, cfg.head, 2);
  const fs::path dir = scratch("weights");
  write_weights(dir / "w.rafw", a.params());
  load_weights(dir / "w.rafw", b.params());
  EXPECT_EQ(a.params().snapshot(), b.params().snapshot());
  const auto stored = read_weights(dir / "w.rafw");
  EXPECT_EQ(stored.size(), a.params().size());
  EXPECT_EQ(stored.at("fusion.g").shape, (Shape{16, 16}));
}

TEST(Io, WeightsShapeMismatchRejected) {
  auto cfg = fixtures::tiny_config();
  Model a(cfg.encoder, cfg.head, 1);
  cfg.head.penultimate_width = 16;
  Model b(cfg.encoder, cfg.head, 1);
  const fs::path dir = scratch("weights_bad");
  write_weights(dir / "w.rafw", a.params());
  EXPECT_THROW(load_weights(dir / "w.rafw", b.params()), IoError);
}
