// relaff: command-line driver for corpus generation, training, ablations,
// gradient checks and evaluation.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "relaff/config.hpp"
#include "relaff/error.hpp"
#include "relaff/gradcheck_suite.hpp"
#include "relaff/io.hpp"
#include "relaff/log.hpp"
#include "relaff/metrics.hpp"
#include "relaff/train.hpp"

namespace fs = std::filesystem;
using namespace relaff;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string config;
  std::string corpus;
  std::string out;
  std::string weights;
  std::size_t jobs = 1;
  std::vector<std::string> seed_overrides;
  bool inject_fault = false;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  for (const auto& s : o.seed_overrides) apply_seed_override(cfg, s);
  cfg.validate();
  return cfg;
}

void make_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", out, ec.message()));
}

void write_json(const fs::path& path, const nlohmann::json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

void print_header(const ExperimentConfig& cfg, const Variant& v) {
  const auto& t = cfg.training;
  fmt::print("run: variant = {}, lambda = {}, K = {}, T = {}, B = {}, loss = {}, epochs = {}, protocol = {}\n", v.name,
             v.lambda, v.K, cfg.sampling.T, t.B, to_string(t.loss_kind), t.epochs, to_string(t.protocol));
  fmt::print("seeds: corpus = {}, init = {}, train = {}\n", cfg.seeds.corpus, cfg.seeds.init, cfg.seeds.train);
  fmt::print("similarity labels: training range, ranges reaching zero mapped onto [{}, 1]\n", kSimilarityFloor);
}

std::vector<Video> load_corpus(const Options& o, const ExperimentConfig& cfg) {
  auto videos = read_corpus(o.corpus);
  check_corpus_compatible(cfg, videos);
  return videos;
}

int cmd_gen(const Options& o) {
  const ExperimentConfig cfg = load(o);
  make_out_dir(o.out);
  const auto videos = generate_corpus(cfg.synth, cfg.seeds.corpus);
  write_corpus(o.out, videos);
  std::size_t frames = 0;
  for (const auto& v : videos) frames += v.L;
  fmt::print("subjects: {}\nvideos: {}\nframes: {}\n", subject_ids(videos).size(), videos.size(), frames);
  return 0;
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const auto videos = load_corpus(o, cfg);
  make_out_dir(o.out);
  const Variant variant = proposed_variant(cfg);
  print_header(cfg, variant);
  const FoldPlan plan = make_plan(videos, cfg.training);
  const auto result = run_cross_validation(videos, plan, cfg, variant, o.jobs, true);
  const fs::path out(o.out);
  write_json(out / "run_record.json", run_record(cfg, result));
  write_text_file(out / "metrics.csv", format_metrics_csv(result.pooled));
  write_text_file(out / "metrics.txt", format_metrics_text(result.pooled));
  write_text_file(out / "metrics_mean_of_folds.csv", format_metrics_csv(result.mean_of_folds));
  for (const auto& f : result.folds) write_weights(out / fmt::format("weights_fold{:02}.rafw", f.fold), f.model->params());
  fmt::print("{}", format_metrics_csv(result.pooled));
  return 0;
}

int cmd_ablate(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const auto videos = load_corpus(o, cfg);
  make_out_dir(o.out);
  print_header(cfg, proposed_variant(cfg));
  const auto rows = run_ablation(videos, cfg, o.jobs);
  const fs::path out(o.out);
  const std::string csv = format_ablation_csv(rows, cfg.head);
  write_text_file(out / "ablation.csv", csv);
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : rows) records.push_back(run_record(cfg, r));
  write_json(out / "ablation_records.json", records);
  fmt::print("{}", csv);
  return 0;
}

int cmd_gradcheck(const Options& o) {
  GradCheckSuiteOptions gopt;
  if (!o.config.empty() || !o.seed_overrides.empty()) gopt.seed = load(o).seeds.init;
  gopt.inject_fault = o.inject_fault;
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite(gopt);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::vector<std::string> failed;
  for (const auto& r : results) {
    fmt::print("{:<28} {:>6} coords  max rel err {:.3e}  {}\n", r.name, r.coordinates, r.max_relative_error,
               r.passed ? "ok" : "FAIL");
    if (!r.passed) failed.push_back(r.name);
  }
  fmt::print("{} components, {} failed, {:.1f} s\n", results.size(), failed.size(), seconds);
  if (!failed.empty()) {
    fmt::print("failing: {}\n", fmt::join(failed, ", "));
    return kExitFailure;
  }
  return 0;
}

int cmd_eval(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const auto videos = load_corpus(o, cfg);
  make_out_dir(o.out);
  Model model(cfg.encoder, cfg.head, cfg.seeds.init);
  load_weights(o.weights, model.params());
  const auto names = label_names(cfg.head);
  Table pred(0, names.size()), truth(0, names.size());
  std::string rows = "video_id,subject_id";
  for (const auto& n : names) rows += fmt::format(",{0}_pred,{0}_true", n);
  rows += "\n";
  for (const auto& v : videos) {
    const VideoPrediction p = infer_video(model, v, cfg.sampling);
    std::vector<double> yhat = p.per_label, y = v.labels.values;
    if (p.total) {
      yhat.push_back(*p.total);
      double sum = 0.0;
      for (double x : y) sum += x;
      y.push_back(sum);
    }
    pred.append_row(yhat);
    truth.append_row(y);
    rows += v.video_id + "," + v.subject_id;
    for (std::size_t c = 0; c < y.size(); ++c) rows += fmt::format(",{:.17g},{:.17g}", yhat[c], y[c]);
    rows += "\n";
  }
  const fs::path out(o.out);
  write_text_file(out / "predictions.csv", rows);
  if (videos.size() >= 2) {
    const auto report = metrics_report(pred, truth, names);
    write_text_file(out / "metrics.csv", format_metrics_csv(report));
    write_text_file(out / "metrics.txt", format_metrics_text(report));
    fmt::print("{}", format_metrics_csv(report));
  } else {
    spdlog::warn("one video: metrics need at least two, only predictions written");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Context-attention video regression with a relational loss"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    if (required) opt->required();
    c->add_option("--seed-override", o.seed_overrides, "Seed override NAME=VALUE (corpus, init, train)");
  };

  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  add_config(gen, true);
  gen->add_option("--out", o.out, "Corpus directory to create")->required();

  auto* train = app.add_subcommand("train", "Train and evaluate per the configured protocol");
  add_config(train, true);
  train->add_option("--corpus", o.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--jobs", o.jobs, "Folds trained in parallel")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "Run the four-variant ablation");
  add_config(ablate, true);
  ablate->add_option("--corpus", o.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--out", o.out, "Output directory")->required();
  ablate->add_option("--jobs", o.jobs, "Folds trained in parallel")->check(CLI::PositiveNumber);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  add_config(gradcheck, false);
  gradcheck->add_flag("--inject-fault", o.inject_fault, "Include an operation with a broken backward rule");

  auto* eval = app.add_subcommand("eval", "Predict every video of a corpus with stored weights");
  add_config(eval, true);
  eval->add_option("--corpus", o.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--weights", o.weights, "Weights file")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", o.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (train->parsed()) return cmd_train(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (gradcheck->parsed()) return cmd_gradcheck(o);
    if (eval->parsed()) return cmd_eval(o);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "invalid config: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
