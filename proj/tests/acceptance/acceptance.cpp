// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances and experiment settings are fixed here.
//
//   relaff_acceptance [--workdir DIR] [--only N]...

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "relaff/config.hpp"
#include "relaff/data.hpp"
#include "relaff/error.hpp"
#include "relaff/gradcheck_suite.hpp"
#include "relaff/labels.hpp"
#include "relaff/losses.hpp"
#include "relaff/metrics.hpp"
#include "relaff/optimizer.hpp"
#include "relaff/train.hpp"

using namespace relaff;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kRelTol = 1e-12;
constexpr double kMetricTol = 1e-10;
constexpr double kAlignGain = 0.10;
constexpr double kCccGain = 0.03;
constexpr double kAblationSeconds = 30 * 60.0;
constexpr double kContextGain = 0.05;
constexpr double kScheduleTol = 1e-18;
constexpr double kRoundTripTol = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Experiment corpus and model shared by the two ablation criteria.
ExperimentConfig experiment_config() {
  ExperimentConfig cfg;
  cfg.encoder.T = 8;
  cfg.encoder.H = cfg.encoder.W = 16;
  cfg.encoder.D = cfg.encoder.D_f = 32;
  cfg.encoder.transformer_layers = 1;
  cfg.encoder.attention_heads = 4;
  cfg.encoder.feedforward_width = 64;
  cfg.encoder.patch_grid = 4;
  cfg.encoder.backbone_width = 64;
  cfg.head.C = 2;
  cfg.head.penultimate_width = 64;
  cfg.head.dropout_rate = 0.1;
  cfg.sampling.T = 8;
  cfg.sampling.K = 1;
  cfg.synth.subjects = 8;
  cfg.synth.videos_per_subject = 16;
  cfg.synth.L = 48;
  cfg.synth.H = cfg.synth.W = 16;
  cfg.synth.C = 2;
  cfg.synth.noise = 0.1;
  cfg.synth.context_dependence = 0.3;
  cfg.training.lambda = 2.0;
  cfg.training.B = 8;
  cfg.training.K = 1;
  cfg.training.epochs = 15;
  cfg.training.lr = 1e-3;
  cfg.training.batches_per_epoch = 20;
  cfg.training.augment = false;
  cfg.training.alignment_batches = 20;
  return cfg;
}

const std::vector<Seeds> kSeedTriples{{1, 2, 3}, {11, 12, 13}, {21, 22, 23}};

ExperimentConfig with_seeds(ExperimentConfig cfg, const Seeds& s) {
  cfg.seeds = s;
  cfg.sampling.seed = s.train;
  return cfg;
}

double pooled_ccc(const CrossValidationResult& r) {
  if (!r.pooled.aggregate.ccc) throw UndefinedMetricError("pooled CCC undefined");
  return *r.pooled.aggregate.ccc;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const auto results = run_gradcheck_suite(GradCheckSuiteOptions{kGradTol});
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& r : results) {
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = r.name;
    }
    if (!(r.max_relative_error < kGradTol)) failed += " " + r.name;
  }
  const bool pipeline = std::any_of(results.begin(), results.end(), [](const auto& r) { return r.name == "pipeline.total_loss"; });
  Outcome o;
  o.pass = failed.empty() && pipeline && secs < kGradSeconds;
  o.detail = fmt::format("{} components, worst {:.2e} ({}), {:.1f} s{}", results.size(), worst, worst_name, secs,
                         failed.empty() ? "" : "; failing:" + failed);
  return o;
}

Outcome relational_oracle() {
  const Value m = cosine_similarity_matrix(Value::constant({3, 2}, {1, 2, -1, 0.5, 0.3, 3}));
  const double equal = relational_loss(m, m).item();
  const Value orth = cosine_similarity_matrix(Value::constant({2, 2}, {1, 0, 0, 1}));
  const Value same = cosine_similarity_matrix(Value::constant({2, 2}, {0.4, 0.6, 0.4, 0.6}));
  const double half = relational_loss(orth, same).item();
  Outcome o;
  o.pass = std::fabs(equal) <= kRelTol && std::fabs(half - std::sqrt(0.5)) <= kRelTol;
  o.detail = fmt::format("equal matrices {:.3g}, orthogonal vs identical {:.15f}", equal, half);
  return o;
}

Outcome metric_oracle() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> nd(2, 20), cd(1, 4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t N = nd(rng), C = cd(rng);
    Table p(N, C), y(N, C);
    for (double& v : p.data) v = u(rng);
    for (double& v : y.data) v = u(rng);
    const auto report = metrics_report(p, y);
    for (std::size_t c = 0; c < C; ++c) {
      double sp = 0, sy = 0;
      for (std::size_t i = 0; i < N; ++i) {
        sp += p(i, c);
        sy += y(i, c);
      }
      const double n = static_cast<double>(N), mp = sp / n, my = sy / n;
      double ae = 0, se = 0, cxy = 0, cxx = 0, cyy = 0;
      for (std::size_t i = 0; i < N; ++i) {
        const double dp = p(i, c) - mp, dy = y(i, c) - my;
        ae += std::fabs(p(i, c) - y(i, c));
        se += (p(i, c) - y(i, c)) * (p(i, c) - y(i, c));
        cxy += dp * dy;
        cxx += dp * dp;
        cyy += dy * dy;
      }
      const auto& m = report.per_label[c];
      const double pcc = cxy / std::sqrt(cxx * cyy);
      const double ccc = 2 * cxy / (cxx + cyy + n * (mp - my) * (mp - my));
      if (!m.pcc || !m.ccc) return {false, fmt::format("undefined correlation at trial {}", trial)};
      worst = std::max({worst, std::fabs(m.mae - ae / n), std::fabs(m.rmse - std::sqrt(se / n)),
                        std::fabs(*m.pcc - pcc), std::fabs(*m.ccc - ccc)});
    }
  }
  return {worst <= kMetricTol, fmt::format("100 instances, max deviation {:.2e}", worst)};
}

Outcome relational_ablation() {
  const auto t0 = Clock::now();
  std::vector<double> d_align, d_ccc;
  double slowest = 0.0;
  std::string per_seed;
  for (const auto& s : kSeedTriples) {
    const auto cfg = with_seeds(experiment_config(), s);
    const auto corpus = generate_corpus(cfg.synth, cfg.seeds.corpus);
    const auto ta = Clock::now();
    const auto rows = run_ablation(corpus, cfg);
    slowest = std::max(slowest, seconds_since(ta));
    const auto& proposed = rows.at(0);
    const auto& no_rel = rows.at(1);
    if (!proposed.alignment || !no_rel.alignment) return {false, "alignment undefined"};
    d_align.push_back(*proposed.alignment - *no_rel.alignment);
    d_ccc.push_back(pooled_ccc(proposed) - pooled_ccc(no_rel));
    per_seed += fmt::format(" [{}/{}/{}: align {:.3f} vs {:.3f}, CCC {:.3f} vs {:.3f}]", s.corpus, s.init, s.train,
                            *proposed.alignment, *no_rel.alignment, pooled_ccc(proposed), pooled_ccc(no_rel));
  }
  const double ma = median(d_align), mc = median(d_ccc);
  Outcome o;
  o.pass = ma >= kAlignGain && mc >= kCccGain && slowest < kAblationSeconds;
  o.detail = fmt::format("median alignment gain {:+.3f} (need {:+.2f}), median pooled CCC gain {:+.3f} (need {:+.2f}), "
                         "slowest ablation {:.0f} s, total {:.0f} s;{}",
                         ma, kAlignGain, mc, kCccGain, slowest, seconds_since(t0), per_seed);
  return o;
}

Outcome context_ablation() {
  std::vector<double> gains;
  std::string per_seed;
  for (const auto& s : kSeedTriples) {
    auto cfg = with_seeds(experiment_config(), s);
    cfg.synth.context_dependence = 0.8;
    const auto corpus = generate_corpus(cfg.synth, cfg.seeds.corpus);
    const auto plan = make_plan(corpus, cfg.training);
    const Variant with_k = proposed_variant(cfg);
    const Variant without_k{"K = 0", cfg.training.lambda, 0, false};
    const double a = pooled_ccc(run_cross_validation(corpus, plan, cfg, with_k));
    const double b = pooled_ccc(run_cross_validation(corpus, plan, cfg, without_k));
    gains.push_back(a - b);
    per_seed += fmt::format(" [{}/{}/{}: {:.3f} vs {:.3f}]", s.corpus, s.init, s.train, a, b);
  }
  const double m = median(gains);
  return {m >= kContextGain, fmt::format("median pooled CCC gain of K = 1 over K = 0 {:+.3f} (need {:+.2f});{}", m,
                                         kContextGain, per_seed)};
}

Outcome gradient_flow() {
  ExperimentConfig cfg;
  cfg.encoder.T = cfg.sampling.T = 4;
  cfg.encoder.H = cfg.encoder.W = cfg.synth.H = cfg.synth.W = 8;
  cfg.encoder.D = cfg.encoder.D_f = 16;
  cfg.encoder.transformer_layers = 1;
  cfg.encoder.attention_heads = 2;
  cfg.encoder.feedforward_width = 16;
  cfg.encoder.patch_grid = 2;
  cfg.encoder.backbone_width = 16;
  cfg.head.penultimate_width = 8;
  cfg.sampling.K = cfg.training.K = 2;
  cfg.synth.subjects = 2;
  cfg.synth.L = 24;
  cfg.training.B = 4;
  cfg.training.lambda = 1.0;
  cfg.training.augment = true;
  const auto corpus = generate_corpus(cfg.synth, 5);
  const auto refs = video_refs(corpus);
  Model model(cfg.encoder, cfg.head, 6);

  // Instrumented step: the context stack is built on the graph and then
  // detached, so any gradient reaching it would show up in its buffer.
  std::mt19937_64 rng(7), drop(8);
  const auto batch = make_batch(refs, cfg.training.B, cfg.sampling, {true, false}, rng);
  ForwardOptions audit;
  audit.train = true;
  audit.dropout_rng = &drop;
  audit.audit_context = true;
  audit.reuse_center = false;
  const auto losses = batch_losses(model, batch, cfg, audit);
  backward(losses.total);
  double leaked = 0.0;
  std::size_t audited = 0;
  for (const auto& r : losses.results) {
    if (!r.context_audit) return {false, "audit stack missing"};
    for (double g : r.context_audit->grad()) leaked += std::fabs(g);
    audited += r.context_audit->size();
  }
  model.params().zero_grad();

  const auto before = model.params().snapshot();
  cfg.training.batches_per_epoch = 100;
  Adam opt(model.params(), AdamConfig{1e-2, 5e-3});
  const auto rec = train_epoch(model, opt, refs, cfg, 0, 9);
  const auto after = model.params().snapshot();
  bool identical = !model.params().frozen().empty();
  for (const auto& name : model.params().frozen()) {
    const auto& a = before.at(name);
    const auto& b = after.at(name);
    identical = identical && a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  }
  const bool moved = before.at("backbone.fc.weight") != after.at("backbone.fc.weight");
  return {leaked == 0.0 && identical && moved && opt.step_count() == 100,
          fmt::format("context-branch |grad| sum {} over {} audited entries; {} frozen tensors {} after {} steps",
                      leaked, audited, model.params().frozen().size(), identical ? "bit-identical" : "CHANGED",
                      rec.batches)};
}

Outcome contracts() {
  double sched = 0.0;
  for (std::size_t e = 0; e <= 20; ++e)
    sched = std::max(sched, std::fabs(lr_schedule(e) - 1e-4 * std::pow(0.1, std::floor(static_cast<double>(e) / 5.0))));
  std::size_t mismatches = 0, checked = 0;
  for (std::size_t L = 1; L <= 16; ++L)
    for (std::size_t T = 1; T <= 16; ++T)
      for (std::size_t s = 0; s < L; ++s) {
        const auto idx = clip_frame_indices(L, T, s);
        if (idx.size() != T) ++mismatches;
        for (std::size_t t = 0; t < idx.size(); ++t) mismatches += idx[t] != (s + t) % L;
        ++checked;
      }
  double trip = 0.0;
  std::mt19937_64 rng(3);
  for (const char* id : {"affect", "unit_affect", "panss", "cains", "panss_total", "cains_total"}) {
    const auto scale = label_scale(id);
    std::uniform_real_distribution<double> u(scale.native_lo, scale.native_hi);
    for (int i = 0; i < 1000; ++i) {
      const double y = u(rng);
      const double back = scale_label_value(scale_label_value(y, scale, ScaleDirection::to_train_range), scale,
                                            ScaleDirection::to_native_range);
      trip = std::max(trip, std::fabs(back - y));
    }
  }
  return {sched <= kScheduleTol && mismatches == 0 && trip <= kRoundTripTol,
          fmt::format("schedule max error {:.1e}, {} index mismatches over {} (L, T, start), label round trip {:.1e}",
                      sched, mismatches, checked, trip)};
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism(const fs::path& work) {
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ExperimentConfig cfg = experiment_config();
  cfg.synth.subjects = 3;
  cfg.synth.videos_per_subject = 4;
  cfg.training.epochs = 3;
  cfg.training.batches_per_epoch = 5;
  cfg.training.alignment_batches = 5;
  cfg.training.augment = true;
  std::ofstream(dir / "config.json") << config_to_json(cfg).dump(2);
  const std::string cli = RELAFF_CLI_PATH;
  const std::string conf = (dir / "config.json").string();
  if (shell(fmt::format("{} gen --config {} --out {} > /dev/null", cli, conf, (dir / "corpus").string())) != 0)
    return {false, "gen failed"};
  for (const char* run : {"a", "b"}) {
    if (shell(fmt::format("{} train --config {} --corpus {} --out {} > /dev/null", cli, conf,
                          (dir / "corpus").string(), (dir / run).string())) != 0)
      return {false, fmt::format("train run {} failed", run)};
  }
  std::vector<std::string> compared, differing;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const std::string name = e.path().filename().string();
    if (name.ends_with(".csv") || name.ends_with(".rafw")) {
      compared.push_back(name);
      if (slurp(e.path()) != slurp(dir / "b" / name)) differing.push_back(name);
    }
  }
  std::sort(compared.begin(), compared.end());
  const bool has_weights = std::any_of(compared.begin(), compared.end(), [](const auto& n) { return n.ends_with(".rafw"); });
  return {differing.empty() && has_weights && !compared.empty(),
          fmt::format("{} files compared ({}), {} differ", compared.size(), fmt::join(compared, ", "),
                      differing.size())};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  fs::path work = fs::temp_directory_path() / "relaff_acceptance";
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only.push_back(std::atoi(argv[++i]));
    } else {
      fmt::print(stderr, "usage: {} [--workdir DIR] [--only N]...\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"relational loss oracle", relational_oracle},
      {"metric oracle equivalence", metric_oracle},
      {"relational-loss ablation", relational_ablation},
      {"context ablation", context_ablation},
      {"gradient-flow rule", gradient_flow},
      {"schedule and sampling contracts", contracts},
      {"determinism", [&] { return determinism(work); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failures += !o.pass;
    fmt::print("[{}] criterion {} ({}): {}\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
