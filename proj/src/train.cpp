#include "relaff/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "relaff/error.hpp"
#include "relaff/losses.hpp"
#include "relaff/random.hpp"

namespace relaff {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t { kStreamTrain = 1, kStreamPretrain = 2, kStreamSubsample = 3, kStreamAlign = 4 };

// Regression columns for one clip: the supervised labels, then the total.
Value regression_row(const RegressionOutput& out, const HeadConfig& head) {
  Value row = out.per_label;
  if (!head.supervised_mask.empty()) {
    const auto idx = head.supervised_indices();
    row = slice(out.per_label, idx[0], idx[0] + 1);
    for (std::size_t k = 1; k < idx.size(); ++k) row = concat(row, slice(out.per_label, idx[k], idx[k] + 1));
  }
  if (out.total) row = concat(row, *out.total);
  return row;
}

std::vector<double> target_row(const BatchItem& item, const HeadConfig& head) {
  std::vector<double> row;
  for (std::size_t c : head.supervised_indices()) row.push_back(item.target[c]);
  if (head.total_score_enabled) row.push_back(*item.total_target);
  return row;
}

Value label_similarity(const std::vector<BatchItem>& batch) {
  const std::size_t B = batch.size(), C = batch[0].similarity_label.size();
  std::vector<double> m;
  m.reserve(B * C);
  for (const auto& item : batch) m.insert(m.end(), item.similarity_label.begin(), item.similarity_label.end());
  return cosine_similarity_matrix(Value::constant({B, C}, std::move(m)));
}

BatchOptions batch_options(const ExperimentConfig& cfg, bool augment) {
  BatchOptions o;
  o.augment = augment;
  o.total_score = cfg.head.total_score_enabled;
  return o;
}

double clamp_train(double v, const LabelScale& s) { return std::clamp(v, s.train_lo, s.train_hi); }

json epoch_json(const EpochLosses& e) {
  return {{"epoch", e.epoch}, {"lr", e.lr},           {"L_reg", e.reg},         {"L_rel", e.rel},
          {"L_total", e.total}, {"batches", e.batches}, {"skipped", e.skipped}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const MetricsReport& r) {
  json out = json::object();
  auto put = [&](const LabelMetrics& m) {
    out[m.label] = {{"MAE", m.mae}, {"RMSE", m.rmse}, {"PCC", optional_json(m.pcc)}, {"CCC", optional_json(m.ccc)}};
  };
  for (const auto& m : r.per_label) put(m);
  put(r.aggregate);
  return out;
}

}  // namespace

VideoRefs video_refs(const std::vector<Video>& videos) {
  VideoRefs refs;
  refs.reserve(videos.size());
  for (const auto& v : videos) refs.push_back(&v);
  return refs;
}

std::vector<std::string> subject_ids(const std::vector<Video>& videos) {
  std::set<std::string> ids;
  for (const auto& v : videos) ids.insert(v.subject_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> label_names(const HeadConfig& head) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < head.C; ++c) names.push_back(fmt::format("label{}", c));
  if (head.total_score_enabled) names.push_back("total");
  return names;
}

BatchLosses batch_losses(const Model& model, const std::vector<BatchItem>& batch, const ExperimentConfig& cfg,
                         const ForwardOptions& options, std::span<const Value> contexts) {
  if (batch.empty()) throw ContractError("batch_losses: empty batch");
  if (!contexts.empty() && contexts.size() != batch.size()) {
    throw ContractError("batch_losses: one context per batch element required");
  }
  const HeadConfig& head = model.head_config();
  BatchLosses out;
  std::vector<Value> preds, zs;
  std::vector<double> targets;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BatchItem& item = batch[i];
    out.results.push_back(contexts.empty() ? model.forward_pipeline(item.clip, item.context, options)
                                           : model.forward_with_context(item.clip, contexts[i], options));
    preds.push_back(regression_row(out.results.back().output, head));
    zs.push_back(out.results.back().z);
    const auto t = target_row(item, head);
    targets.insert(targets.end(), t.begin(), t.end());
  }
  const Value pred = stack_rows(preds);
  out.reg = regression_loss(cfg.training.loss_kind, pred, Value::constant(pred.shape(), std::move(targets)));
  const Value M = label_similarity(batch);
  const double lambda = cfg.training.lambda;
  if (lambda == 0.0) {
    NoGradGuard no_grad;
    out.rel = relational_loss(cosine_similarity_matrix(detach(stack_rows(zs))), M);
  } else {
    out.rel = relational_loss(cosine_similarity_matrix(stack_rows(zs)), M);
  }
  out.total = total_loss(out.reg, out.rel, lambda);
  return out;
}

std::size_t batches_per_epoch(std::size_t videos, const TrainingConfig& t) {
  if (t.batches_per_epoch > 0) return t.batches_per_epoch;
  return std::max<std::size_t>(1, (videos + t.B - 1) / t.B);
}

EpochLosses train_epoch(Model& model, Adam& opt, std::span<const Video* const> videos, const ExperimentConfig& cfg,
                        std::size_t epoch, std::uint64_t seed) {
  EpochLosses rec;
  rec.epoch = epoch;
  rec.lr = opt.lr();
  const std::size_t n = batches_per_epoch(videos.size(), cfg.training);
  for (std::size_t b = 0; b < n; ++b) {
    std::mt19937_64 rng(derive_seed(seed, {epoch, b}));
    const auto batch = make_batch(videos, cfg.training.B, cfg.sampling, batch_options(cfg, cfg.training.augment), rng);
    ForwardOptions fo;
    fo.train = true;
    fo.dropout_rng = &rng;
    fo.reuse_center = cfg.training.reuse_center;
    BatchLosses losses;
    try {
      losses = batch_losses(model, batch, cfg, fo);
    } catch (const DegenerateVectorError& e) {
      spdlog::warn("epoch {} batch {}: degenerate similarity row {}, batch skipped", epoch, b, e.row());
      ++rec.skipped;
      continue;
    } catch (const UndefinedMetricError& e) {
      spdlog::warn("epoch {} batch {}: {}, batch skipped", epoch, b, e.what());
      ++rec.skipped;
      continue;
    }
    model.params().zero_grad();
    backward(losses.total);
    opt.step();
    rec.reg += losses.reg.item();
    rec.rel += losses.rel.item();
    rec.total += losses.total.item();
    ++rec.batches;
  }
  if (rec.batches > 0) {
    const double k = static_cast<double>(rec.batches);
    rec.reg /= k;
    rec.rel /= k;
    rec.total /= k;
  }
  return rec;
}

EpochLosses contrastive_epoch(Model& model, Adam& opt, std::span<const Video* const> videos,
                              const ExperimentConfig& cfg, std::size_t epoch, std::uint64_t seed) {
  if (videos.size() < 2) throw ContractError("contrastive_epoch: needs at least two videos for negatives");
  EpochLosses rec;
  rec.epoch = epoch;
  rec.lr = opt.lr();
  const SamplingConfig single = cfg.sampling_for(0);
  const std::size_t n = batches_per_epoch(videos.size(), cfg.training);
  const std::size_t B = std::max<std::size_t>(2, cfg.training.B);
  for (std::size_t b = 0; b < n; ++b) {
    std::mt19937_64 rng(derive_seed(seed, {epoch, b}));
    const auto batch = make_batch(videos, B, single, batch_options(cfg, cfg.training.augment), rng);
    std::vector<Value> anchors, positives;
    for (const auto& item : batch) {
      Clip other = sample_clip(*videos[item.video_index], single, rng);
      if (cfg.training.augment) other = augment(other, rng());
      anchors.push_back(model.encoder().encode_clip(item.clip));
      positives.push_back(model.encoder().encode_clip(other));
    }
    Value loss;
    try {
      loss = contrastive_loss(stack_rows(anchors), stack_rows(positives), cfg.training.contrastive_temperature);
    } catch (const DegenerateVectorError& e) {
      spdlog::warn("pretrain epoch {} batch {}: degenerate feature row {}, batch skipped", epoch, b, e.row());
      ++rec.skipped;
      continue;
    }
    model.params().zero_grad();
    backward(loss);
    opt.step();
    rec.total += loss.item();
    ++rec.batches;
  }
  if (rec.batches > 0) rec.total /= static_cast<double>(rec.batches);
  return rec;
}

VideoPrediction infer_video(const Model& model, const Video& video, const SamplingConfig& sampling) {
  const std::size_t T = sampling.T, L = video.L;
  NoGradGuard no_grad;
  std::vector<std::size_t> starts;
  if (L < T) {
    spdlog::info("video {}: L = {} < T = {}, predicting from one looped clip", video.video_id, L, T);
    starts.push_back(0);
  } else {
    for (std::size_t s = 0; s + T <= L; s += T) starts.push_back(s);
  }

  std::map<std::size_t, Value> cache;
  auto encoded = [&](std::size_t start) -> const Value& {
    auto it = cache.find(start);
    if (it == cache.end()) it = cache.emplace(start, model.encoder().encode_clip(extract_clip(video, T, start))).first;
    return it->second;
  };

  const HeadConfig& head = model.head_config();
  std::vector<double> acc(head.C, 0.0);
  double total_acc = 0.0;
  for (std::size_t s : starts) {
    const Value& z = encoded(s);
    std::vector<Value> rows;
    for (std::size_t cs : context_starts(L, T, s, sampling.K)) rows.push_back(encoded(cs));
    const auto attended = model.fusion().nonlocal_attend(z, stack_rows(rows));
    const RegressionOutput out = model.head().forward(concat(z, attended.out), false, nullptr);
    for (std::size_t c = 0; c < head.C; ++c) acc[c] += out.per_label.at(c);
    if (out.total) total_acc += out.total->item();
  }

  VideoPrediction pred;
  pred.clips = starts.size();
  const double k = static_cast<double>(starts.size());
  const LabelScale& scale = video.labels.scale;
  for (double v : acc) {
    pred.per_label.push_back(scale_label_value(clamp_train(v / k, scale), scale, ScaleDirection::to_native_range));
  }
  if (head.total_score_enabled) {
    const LabelScale ts = total_scale(scale, head.C);
    pred.total = scale_label_value(clamp_train(total_acc / k, ts), ts, ScaleDirection::to_native_range);
  }
  return pred;
}

SimilarityPairs similarity_pairs(const Model& model, std::span<const Video* const> videos, const ExperimentConfig& cfg,
                                 std::size_t n_batches, std::uint64_t seed) {
  SimilarityPairs pairs;
  if (videos.size() < 2) return pairs;
  const std::size_t B = std::min(cfg.training.B, videos.size());
  if (B < 2) return pairs;
  const SamplingConfig single = cfg.sampling_for(0);
  NoGradGuard no_grad;
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::mt19937_64 rng(derive_seed(seed, {b}));
    const auto batch = make_batch(videos, B, single, batch_options(cfg, false), rng);
    std::vector<Value> zs;
    for (const auto& item : batch) zs.push_back(model.encoder().encode_clip(item.clip));
    try {
      const Value Mhat = cosine_similarity_matrix(stack_rows(zs));
      const Value M = label_similarity(batch);
      for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = i + 1; j < B; ++j) {
          pairs.features.push_back(Mhat.at(i, j));
          pairs.labels.push_back(M.at(i, j));
        }
      }
    } catch (const DegenerateVectorError& e) {
      spdlog::warn("alignment batch {}: degenerate row {}, skipped", b, e.row());
    }
  }
  return pairs;
}

std::optional<double> alignment_score(const SimilarityPairs& pairs) {
  if (pairs.features.size() < 2) return std::nullopt;
  return pearson(pairs.features, pairs.labels);
}

std::optional<double> alignment_score(const Model& model, std::span<const Video* const> videos,
                                      const ExperimentConfig& cfg, std::size_t n_batches, std::uint64_t seed) {
  return alignment_score(similarity_pairs(model, videos, cfg, n_batches, seed));
}

FoldPlan make_loso_plan(const std::vector<Video>& videos, double subsample_fraction) {
  const auto ids = subject_ids(videos);
  if (ids.size() < 2) throw ContractError("leave-one-subject-out needs at least two subjects");
  FoldPlan plan;
  plan.subsample_fraction = subsample_fraction;
  for (const auto& held : ids) {
    Fold f;
    f.test_subjects = {held};
    for (const auto& s : ids) {
      if (s != held) f.train_subjects.push_back(s);
    }
    plan.folds.push_back(std::move(f));
  }
  return plan;
}

FoldPlan make_split_plan(const std::vector<Video>& videos, std::size_t holdout, double subsample_fraction) {
  const auto ids = subject_ids(videos);
  if (holdout < 1 || holdout >= ids.size()) {
    throw ContractError(fmt::format("split: cannot hold out {} of {} subjects", holdout, ids.size()));
  }
  FoldPlan plan;
  plan.subsample_fraction = subsample_fraction;
  Fold f;
  f.train_subjects.assign(ids.begin(), ids.end() - static_cast<long>(holdout));
  f.test_subjects.assign(ids.end() - static_cast<long>(holdout), ids.end());
  plan.folds.push_back(std::move(f));
  return plan;
}

FoldPlan make_plan(const std::vector<Video>& videos, const TrainingConfig& training) {
  return training.protocol == Protocol::loso
             ? make_loso_plan(videos, training.subsample_fraction)
             : make_split_plan(videos, training.holdout_subjects, training.subsample_fraction);
}

Variant proposed_variant(const ExperimentConfig& cfg) { return {"Proposed", cfg.training.lambda, cfg.training.K, false}; }

std::vector<Variant> ablation_variants(const ExperimentConfig& cfg) {
  return {proposed_variant(cfg),
          {"w/o L_rel", 0.0, cfg.training.K, false},
          {"w/o L_rel w/o K", 0.0, 0, false},
          {"Contrastive", 0.0, cfg.training.K, true}};
}

ExperimentConfig apply_variant(const ExperimentConfig& cfg, const Variant& variant) {
  ExperimentConfig out = cfg;
  out.training.lambda = variant.lambda;
  out.training.K = variant.K;
  out.sampling.K = variant.K;
  return out;
}

FoldResult run_fold(const std::vector<Video>& videos, const Fold& fold, std::size_t fold_index, double subsample_fraction,
                    const ExperimentConfig& base, const Variant& variant, bool keep_model) {
  const ExperimentConfig cfg = apply_variant(base, variant);
  const TrainingConfig& t = cfg.training;
  const std::set<std::string> train_set(fold.train_subjects.begin(), fold.train_subjects.end());
  const std::set<std::string> test_set(fold.test_subjects.begin(), fold.test_subjects.end());
  VideoRefs train, test;
  for (const auto& v : videos) {
    if (train_set.count(v.subject_id)) train.push_back(&v);
    if (test_set.count(v.subject_id)) test.push_back(&v);
  }
  if (train.empty() || test.empty()) throw ContractError(fmt::format("fold {}: empty train or test set", fold_index));
  if (subsample_fraction < 1.0) {
    std::mt19937_64 rng(derive_seed(cfg.seeds.train, {kStreamSubsample, fold_index}));
    std::shuffle(train.begin(), train.end(), rng);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(subsample_fraction * static_cast<double>(train.size()))));
    train.resize(std::min(keep, train.size()));
    std::sort(train.begin(), train.end(), [](const Video* a, const Video* b) { return a->video_id < b->video_id; });
  }

  FoldResult r;
  r.fold = fold_index;
  r.test_subjects = fold.test_subjects;
  r.train_videos = train.size();
  auto model = std::make_unique<Model>(cfg.encoder, cfg.head, derive_seed(cfg.seeds.init, {fold_index}));
  const AdamConfig adam{t.lr, t.weight_decay};

  if (variant.contrastive) {
    Adam pre(model->params(), adam);
    for (std::size_t e = 0; e < t.contrastive_epochs; ++e) {
      pre.set_lr(lr_schedule(e, t.lr, t.lr_decay, t.lr_decay_every));
      r.pretrain.push_back(
          contrastive_epoch(*model, pre, train, cfg, e, derive_seed(cfg.seeds.train, {kStreamPretrain, fold_index})));
      spdlog::debug("[{}] fold {} pretrain epoch {}: L_con {:.5f}", variant.name, fold_index, e,
                    r.pretrain.back().total);
    }
    for (const auto& prefix : Model::encoder_prefixes()) model->params().freeze_prefix(prefix);
  }

  Adam opt(model->params(), adam);
  for (std::size_t e = 0; e < t.epochs; ++e) {
    opt.set_lr(lr_schedule(e, t.lr, t.lr_decay, t.lr_decay_every));
    r.epochs.push_back(train_epoch(*model, opt, train, cfg, e, derive_seed(cfg.seeds.train, {kStreamTrain, fold_index})));
    const auto& ep = r.epochs.back();
    spdlog::debug("[{}] fold {} epoch {}: L_reg {:.5f} L_rel {:.5f} L_total {:.5f}", variant.name, fold_index, e, ep.reg,
                  ep.rel, ep.total);
  }

  const std::size_t cols = cfg.head.C + (cfg.head.total_score_enabled ? 1 : 0);
  r.prediction = Table(0, cols);
  r.truth = Table(0, cols);
  for (const Video* v : test) {
    const VideoPrediction p = infer_video(*model, *v, cfg.sampling);
    std::vector<double> pred = p.per_label, truth = v->labels.values;
    if (p.total) {
      pred.push_back(*p.total);
      double sum = 0.0;
      for (double y : truth) sum += y;
      truth.push_back(sum);
    }
    r.video_ids.push_back(v->video_id);
    r.prediction.append_row(pred);
    r.truth.append_row(truth);
  }
  r.pairs = similarity_pairs(*model, test, cfg, t.alignment_batches, derive_seed(cfg.seeds.train, {kStreamAlign, fold_index}));
  if (keep_model) r.model = std::move(model);
  return r;
}

namespace {

MetricsReport average_reports(const std::vector<MetricsReport>& reports, const std::vector<std::string>& names) {
  MetricsReport out;
  out.aggregate.label = "mean";
  if (reports.empty()) return out;
  for (const auto& r : reports) out.n += r.n;
  auto average = [&](auto get) {
    double sum = 0.0;
    std::size_t k = 0;
    for (const auto& r : reports) {
      if (auto v = get(r)) {
        sum += *v;
        ++k;
      }
    }
    return k > 0 ? std::optional<double>(sum / static_cast<double>(k)) : std::nullopt;
  };
  for (std::size_t c = 0; c <= names.size(); ++c) {
    auto pick = [c, &names](const MetricsReport& r) -> const LabelMetrics& {
      return c < names.size() ? r.per_label[c] : r.aggregate;
    };
    LabelMetrics m;
    m.label = c < names.size() ? names[c] : "mean";
    m.mae = *average([&](const MetricsReport& r) { return std::optional<double>(pick(r).mae); });
    m.rmse = *average([&](const MetricsReport& r) { return std::optional<double>(pick(r).rmse); });
    m.pcc = average([&](const MetricsReport& r) { return pick(r).pcc; });
    m.ccc = average([&](const MetricsReport& r) { return pick(r).ccc; });
    if (c < names.size()) {
      out.per_label.push_back(std::move(m));
    } else {
      out.aggregate = std::move(m);
    }
  }
  return out;
}

}  // namespace

CrossValidationResult run_cross_validation(const std::vector<Video>& videos, const FoldPlan& plan,
                                           const ExperimentConfig& cfg, const Variant& variant, std::size_t jobs,
                                           bool keep_models) {
  if (subject_ids(videos).size() < 2) throw ContractError("cross-validation needs at least two subjects");
  if (plan.folds.empty()) throw ContractError("cross-validation: empty fold plan");
  const auto t0 = std::chrono::steady_clock::now();
  CrossValidationResult result;
  result.variant = variant;
  result.folds.resize(plan.folds.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < plan.folds.size(); k = next++) {
      try {
        result.folds[k] = run_fold(videos, plan.folds[k], k, plan.subsample_fraction, cfg, variant, keep_models);
        spdlog::info("[{}] fold {}/{} done", variant.name, k + 1, plan.folds.size());
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, plan.folds.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  const auto names = label_names(cfg.head);
  Table pred(0, names.size()), truth(0, names.size());
  SimilarityPairs pairs;
  std::vector<MetricsReport> per_fold;
  for (const auto& f : result.folds) {
    for (std::size_t i = 0; i < f.prediction.rows; ++i) {
      pred.append_row(std::span<const double>(f.prediction.data).subspan(i * f.prediction.cols, f.prediction.cols));
      truth.append_row(std::span<const double>(f.truth.data).subspan(i * f.truth.cols, f.truth.cols));
    }
    pairs.features.insert(pairs.features.end(), f.pairs.features.begin(), f.pairs.features.end());
    pairs.labels.insert(pairs.labels.end(), f.pairs.labels.begin(), f.pairs.labels.end());
    if (f.prediction.rows >= 2) per_fold.push_back(metrics_report(f.prediction, f.truth, names));
  }
  result.pooled = metrics_report(pred, truth, names);
  result.mean_of_folds = average_reports(per_fold, names);
  result.alignment = alignment_score(pairs);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<CrossValidationResult> run_ablation(const std::vector<Video>& videos, const ExperimentConfig& cfg,
                                                std::size_t jobs) {
  const FoldPlan plan = make_plan(videos, cfg.training);
  std::vector<CrossValidationResult> rows;
  for (const auto& variant : ablation_variants(cfg)) {
    spdlog::info("ablation variant '{}' (lambda = {}, K = {}{})", variant.name, variant.lambda, variant.K,
                 variant.contrastive ? ", contrastive pretraining" : "");
    rows.push_back(run_cross_validation(videos, plan, cfg, variant, jobs));
  }
  return rows;
}

std::string format_ablation_csv(const std::vector<CrossValidationResult>& rows, const HeadConfig& head) {
  auto names = label_names(head);
  names.push_back("mean");
  std::string out = "variant";
  for (const auto& n : names) out += fmt::format(",{0}_MAE,{0}_RMSE,{0}_PCC,{0}_CCC", n);
  out += ",alignment_score\n";
  auto num = [](double v) { return fmt::format("{:.17g}", v); };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string("nan"); };
  for (const auto& r : rows) {
    out += r.variant.name;
    auto emit = [&](const LabelMetrics& m) {
      out += fmt::format(",{},{},{},{}", num(m.mae), num(m.rmse), opt(m.pcc), opt(m.ccc));
    };
    for (const auto& m : r.pooled.per_label) emit(m);
    emit(r.pooled.aggregate);
    out += "," + opt(r.alignment) + "\n";
  }
  return out;
}

json run_record(const ExperimentConfig& cfg, const CrossValidationResult& result) {
  json rec;
  rec["config"] = config_to_json(cfg);
  rec["variant"] = {{"name", result.variant.name},
                    {"lambda", result.variant.lambda},
                    {"K", result.variant.K},
                    {"contrastive", result.variant.contrastive}};
  rec["seeds"] = {{"corpus", cfg.seeds.corpus}, {"init", cfg.seeds.init}, {"train", cfg.seeds.train}};
  rec["label_names"] = label_names(cfg.head);
  rec["similarity_labels"] = fmt::format("training-range labels; ranges reaching zero mapped onto [{}, 1]",
                                         kSimilarityFloor);
  rec["folds"] = json::array();
  for (const auto& f : result.folds) {
    json fj;
    fj["fold"] = f.fold;
    fj["test_subjects"] = f.test_subjects;
    fj["train_videos"] = f.train_videos;
    fj["pretrain_epochs"] = json::array();
    for (const auto& e : f.pretrain) fj["pretrain_epochs"].push_back(epoch_json(e));
    fj["epochs"] = json::array();
    for (const auto& e : f.epochs) fj["epochs"].push_back(epoch_json(e));
    fj["videos"] = json::array();
    for (std::size_t i = 0; i < f.video_ids.size(); ++i) {
      std::vector<double> p(f.prediction.data.begin() + static_cast<long>(i * f.prediction.cols),
                            f.prediction.data.begin() + static_cast<long>((i + 1) * f.prediction.cols));
      std::vector<double> y(f.truth.data.begin() + static_cast<long>(i * f.truth.cols),
                            f.truth.data.begin() + static_cast<long>((i + 1) * f.truth.cols));
      fj["videos"].push_back({{"video_id", f.video_ids[i]}, {"prediction", p}, {"truth", y}});
    }
    rec["folds"].push_back(std::move(fj));
  }
  rec["metrics"] = {{"pooled", metrics_json(result.pooled)}, {"mean_of_folds", metrics_json(result.mean_of_folds)}};
  rec["alignment_score"] = optional_json(result.alignment);
  rec["wall_clock_seconds"] = result.seconds;
  return rec;
}

}  // namespace relaff
