#include "relaff/config.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "relaff/error.hpp"

namespace relaff {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, remembering which ones were consumed
// so that leftovers can be reported.
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.contains(name_)) {
      obj_ = doc.at(name_);
      if (!obj_.is_object()) throw ConfigError(name_, "must be an object");
    } else {
      obj_ = json::object();
    }
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    const json& v = obj_.at(key);
    const std::string field = name_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field, "expected a boolean");
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
      if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
        throw ConfigError(field, "must be >= 0");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(field, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(field, "expected a string");
    }
    try {
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field, e.what());
    }
  }

  void finish() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(name_ + "." + key, "unknown key");
    }
  }

 private:
  std::string name_;
  json obj_;
  std::set<std::string> seen_;
};

LossKind parse_loss(const std::string& s) {
  if (s == "rmse") return LossKind::rmse;
  if (s == "one_minus_ccc") return LossKind::one_minus_ccc;
  throw ConfigError("training.loss_kind", fmt::format("'{}' is not one of rmse, one_minus_ccc", s));
}

Protocol parse_protocol(const std::string& s) {
  if (s == "loso") return Protocol::loso;
  if (s == "split") return Protocol::split;
  throw ConfigError("training.protocol", fmt::format("'{}' is not one of loso, split", s));
}

const std::set<std::string> kSections = {"encoder", "head", "sampling", "synth", "training", "seeds"};

}  // namespace

std::string to_string(LossKind kind) { return kind == LossKind::rmse ? "rmse" : "one_minus_ccc"; }
std::string to_string(Protocol protocol) { return protocol == Protocol::loso ? "loso" : "split"; }

SamplingConfig ExperimentConfig::sampling_for(std::size_t K) const {
  SamplingConfig s = sampling;
  s.K = K;
  return s;
}

void ExperimentConfig::validate() const {
  encoder.validate();
  head.validate();
  synth.validate();
  if (sampling.T < 1) throw ConfigError("sampling.T", "must be >= 1");
  if (sampling.T != encoder.T) {
    throw ConfigError("sampling.T", fmt::format("{} differs from encoder.T = {}", sampling.T, encoder.T));
  }
  if (training.K != sampling.K) {
    throw ConfigError("training.K", fmt::format("{} differs from sampling.K = {}", training.K, sampling.K));
  }
  if (head.C != synth.C) throw ConfigError("head.C", fmt::format("{} differs from synth.C = {}", head.C, synth.C));
  if (synth.H != encoder.H || synth.W != encoder.W) {
    throw ConfigError("encoder.H", fmt::format("frame size {}x{} differs from synth {}x{}", encoder.H, encoder.W,
                                               synth.H, synth.W));
  }
  const TrainingConfig& t = training;
  if (t.B < 1) throw ConfigError("training.B", "must be >= 1");
  if (t.loss_kind == LossKind::one_minus_ccc && t.B < 2) {
    throw ConfigError("training.B", "one_minus_ccc needs at least two clips per batch");
  }
  if (!(t.lambda >= 0.0)) throw ConfigError("training.lambda", "must be >= 0");
  if (t.epochs < 1) throw ConfigError("training.epochs", "must be >= 1");
  if (!(t.lr > 0.0)) throw ConfigError("training.lr", "must be > 0");
  if (!(t.lr_decay > 0.0 && t.lr_decay <= 1.0)) throw ConfigError("training.lr_decay", "must be in (0, 1]");
  if (!(t.weight_decay >= 0.0)) throw ConfigError("training.weight_decay", "must be >= 0");
  if (!(t.subsample_fraction > 0.0 && t.subsample_fraction <= 1.0)) {
    throw ConfigError("training.subsample_fraction", "must be in (0, 1]");
  }
  if (!(t.contrastive_temperature > 0.0)) throw ConfigError("training.contrastive_temperature", "must be > 0");
  if (t.alignment_batches < 1) throw ConfigError("training.alignment_batches", "must be >= 1");
  if (t.protocol == Protocol::loso && synth.subjects < 2) {
    throw ConfigError("synth.subjects", "leave-one-subject-out needs at least two subjects");
  }
  if (t.protocol == Protocol::split && (t.holdout_subjects < 1 || t.holdout_subjects >= synth.subjects)) {
    throw ConfigError("training.holdout_subjects", "must be in [1, synth.subjects)");
  }
}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!kSections.count(key)) throw ConfigError(key, "unknown section");
  }
  ExperimentConfig cfg;

  Section enc(doc, "encoder");
  EncoderConfig& e = cfg.encoder;
  enc.read("T", e.T);
  enc.read("H", e.H);
  enc.read("W", e.W);
  enc.read("D_f", e.D_f);
  enc.read("D", e.D);
  enc.read("transformer_layers", e.transformer_layers);
  enc.read("attention_heads", e.attention_heads);
  enc.read("feedforward_width", e.feedforward_width);
  enc.read("backbone_seed", e.backbone_seed);
  enc.read("patch_grid", e.patch_grid);
  enc.read("backbone_width", e.backbone_width);
  enc.finish();

  Section head(doc, "head");
  HeadConfig& h = cfg.head;
  head.read("C", h.C);
  head.read("penultimate_width", h.penultimate_width);
  head.read("dropout_rate", h.dropout_rate);
  head.read("total_score_enabled", h.total_score_enabled);
  head.read("supervised_mask", h.supervised_mask);
  head.finish();

  Section samp(doc, "sampling");
  samp.read("T", cfg.sampling.T);
  samp.read("K", cfg.sampling.K);
  samp.finish();

  Section syn(doc, "synth");
  SynthConfig& s = cfg.synth;
  syn.read("subjects", s.subjects);
  syn.read("videos_per_subject", s.videos_per_subject);
  syn.read("L", s.L);
  syn.read("H", s.H);
  syn.read("W", s.W);
  syn.read("C", s.C);
  syn.read("scale", s.scale);
  syn.read("context_dependence", s.context_dependence);
  syn.read("noise", s.noise);
  syn.read("context_period", s.context_period);
  syn.read("subject_variation", s.subject_variation);
  syn.read("fps", s.fps);
  syn.finish();

  Section tr(doc, "training");
  TrainingConfig& t = cfg.training;
  std::string loss = to_string(t.loss_kind), protocol = to_string(t.protocol);
  tr.read("loss_kind", loss);
  tr.read("lambda", t.lambda);
  tr.read("B", t.B);
  tr.read("epochs", t.epochs);
  tr.read("lr", t.lr);
  tr.read("lr_decay", t.lr_decay);
  tr.read("lr_decay_every", t.lr_decay_every);
  tr.read("weight_decay", t.weight_decay);
  tr.read("K", t.K);
  tr.read("subsample_fraction", t.subsample_fraction);
  tr.read("batches_per_epoch", t.batches_per_epoch);
  tr.read("augment", t.augment);
  tr.read("reuse_center", t.reuse_center);
  tr.read("protocol", protocol);
  tr.read("holdout_subjects", t.holdout_subjects);
  tr.read("contrastive_epochs", t.contrastive_epochs);
  tr.read("contrastive_temperature", t.contrastive_temperature);
  tr.read("alignment_batches", t.alignment_batches);
  tr.finish();
  t.loss_kind = parse_loss(loss);
  t.protocol = parse_protocol(protocol);

  Section seeds(doc, "seeds");
  seeds.read("corpus", cfg.seeds.corpus);
  seeds.read("init", cfg.seeds.init);
  seeds.read("train", cfg.seeds.train);
  seeds.finish();
  cfg.sampling.seed = cfg.seeds.train;

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(fmt::format("cannot open config {}", path.string()));
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", fmt::format("{} is not valid JSON: {}", path.string(), e.what()));
  }
  return config_from_json(doc);
}

json config_to_json(const ExperimentConfig& cfg) {
  const EncoderConfig& e = cfg.encoder;
  const HeadConfig& h = cfg.head;
  const SynthConfig& s = cfg.synth;
  const TrainingConfig& t = cfg.training;
  json doc;
  doc["encoder"] = {{"T", e.T},
                    {"H", e.H},
                    {"W", e.W},
                    {"D_f", e.D_f},
                    {"D", e.D},
                    {"transformer_layers", e.transformer_layers},
                    {"attention_heads", e.attention_heads},
                    {"feedforward_width", e.feedforward_width},
                    {"backbone_seed", e.backbone_seed},
                    {"patch_grid", e.patch_grid},
                    {"backbone_width", e.backbone_width}};
  doc["head"] = {{"C", h.C},
                 {"penultimate_width", h.penultimate_width},
                 {"dropout_rate", h.dropout_rate},
                 {"total_score_enabled", h.total_score_enabled},
                 {"supervised_mask", h.supervised_mask}};
  doc["sampling"] = {{"T", cfg.sampling.T}, {"K", cfg.sampling.K}};
  doc["synth"] = {{"subjects", s.subjects},
                  {"videos_per_subject", s.videos_per_subject},
                  {"L", s.L},
                  {"H", s.H},
                  {"W", s.W},
                  {"C", s.C},
                  {"scale", s.scale},
                  {"context_dependence", s.context_dependence},
                  {"noise", s.noise},
                  {"context_period", s.context_period},
                  {"subject_variation", s.subject_variation},
                  {"fps", s.fps}};
  doc["training"] = {{"loss_kind", to_string(t.loss_kind)},
                     {"lambda", t.lambda},
                     {"B", t.B},
                     {"epochs", t.epochs},
                     {"lr", t.lr},
                     {"lr_decay", t.lr_decay},
                     {"lr_decay_every", t.lr_decay_every},
                     {"weight_decay", t.weight_decay},
                     {"K", t.K},
                     {"subsample_fraction", t.subsample_fraction},
                     {"batches_per_epoch", t.batches_per_epoch},
                     {"augment", t.augment},
                     {"reuse_center", t.reuse_center},
                     {"protocol", to_string(t.protocol)},
                     {"holdout_subjects", t.holdout_subjects},
                     {"contrastive_epochs", t.contrastive_epochs},
                     {"contrastive_temperature", t.contrastive_temperature},
                     {"alignment_batches", t.alignment_batches}};
  doc["seeds"] = {{"corpus", cfg.seeds.corpus}, {"init", cfg.seeds.init}, {"train", cfg.seeds.train}};
  return doc;
}

void check_corpus_compatible(const ExperimentConfig& cfg, const std::vector<Video>& videos) {
  if (videos.empty()) throw ConfigError("corpus", "no videos");
  for (const auto& v : videos) {
    if (v.labels.values.size() != cfg.head.C) {
      throw ConfigError("head.C", fmt::format("is {}, corpus video {} has {} labels", cfg.head.C, v.video_id,
                                              v.labels.values.size()));
    }
    if (v.H != cfg.encoder.H || v.W != cfg.encoder.W) {
      throw ConfigError("encoder.H", fmt::format("encoder expects {}x{} frames, corpus video {} is {}x{}", cfg.encoder.H,
                                                 cfg.encoder.W, v.video_id, v.H, v.W));
    }
    if (v.labels.scale.id != cfg.synth.scale) {
      throw ConfigError("synth.scale", fmt::format("is '{}', corpus uses '{}'", cfg.synth.scale, v.labels.scale.id));
    }
    if (v.L < cfg.sampling.T) {
      throw ConfigError("sampling.T", fmt::format("T = {} exceeds the length of corpus video {} (L = {})",
                                                  cfg.sampling.T, v.video_id, v.L));
    }
  }
}

void apply_seed_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("seeds", fmt::format("override '{}' is not NAME=VALUE", assignment));
  std::string name = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  if (name.rfind("seeds.", 0) == 0) name = name.substr(6);
  std::uint64_t v = 0;
  try {
    std::size_t used = 0;
    v = std::stoull(value, &used);
    if (used != value.size() || value.empty() || value[0] == '-') throw std::invalid_argument(value);
  } catch (const std::exception&) {
    throw ConfigError("seeds." + name, fmt::format("'{}' is not an unsigned integer", value));
  }
  if (name == "corpus") {
    cfg.seeds.corpus = v;
  } else if (name == "init") {
    cfg.seeds.init = v;
  } else if (name == "train") {
    cfg.seeds.train = v;
    cfg.sampling.seed = v;
  } else {
    throw ConfigError("seeds." + name, "unknown seed");
  }
}

}  // namespace relaff
