#include "relaff/gradcheck_suite.hpp"

#include <functional>
#include <random>

#include "relaff/data.hpp"
#include "relaff/gradcheck.hpp"
#include "relaff/losses.hpp"
#include "relaff/train.hpp"

namespace relaff {

namespace {

struct Case {
  std::string name;
  std::function<Value()> f;
  std::vector<Value> thetas;
};

class Factory {
 public:
  explicit Factory(std::uint64_t seed) : rng_(seed) {}

  Value param(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = d(rng_);
    return Value::parameter(std::move(shape), std::move(v));
  }
  // Entries bounded away from zero, for kinks and poles.
  Value away_from_zero(Shape shape, double lo = 0.2, double hi = 1.0, bool positive = false) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = (positive || sign(rng_)) ? d(rng_) : -d(rng_);
    return Value::parameter(std::move(shape), std::move(v));
  }
  Value constant(Shape shape, double lo = -1.0, double hi = 1.0) {
    Value v = param(std::move(shape), lo, hi);
    v.set_requires_grad(false);
    return v;
  }
  // Scalar summary with a random upstream gradient.
  std::function<Value(const Value&)> probe(const Shape& shape) {
    Value w = constant(shape);
    return [w](const Value& y) { return sum(mul(y, w)); };
  }

 private:
  std::mt19937_64 rng_;
};

// y = x² with a backward rule that is off by a factor of 1.5.
Value faulty_square(const Value& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * x.data()[i];
  return make_op("faulty_square", x.shape(), std::move(out), {x},
                 [](const detail::Node& o, std::span<const detail::NodePtr> ps) {
                   for (std::size_t i = 0; i < o.grad.size(); ++i) ps[0]->grad[i] += o.grad[i] * 3.0 * ps[0]->data[i];
                 });
}

void add_operation_cases(std::vector<Case>& cases, Factory& F) {
  {
    Value a = F.param({3, 4}), b = F.param({4, 2});
    auto p = F.probe({3, 2});
    cases.push_back({"matmul", [=] { return p(matmul(a, b)); }, {a, b}});
  }
  {
    Value a = F.param({2, 3}), b = F.param({2, 3});
    auto p = F.probe({2, 3});
    cases.push_back({"add", [=] { return p(add(a, b)); }, {a, b}});
    cases.push_back({"sub", [=] { return p(sub(a, b)); }, {a, b}});
    cases.push_back({"mul", [=] { return p(mul(a, b)); }, {a, b}});
    cases.push_back({"scale", [=] { return p(scale(a, -1.7)); }, {a}});
    cases.push_back({"add_scalar", [=] { return p(add_scalar(a, 0.3)); }, {a}});
    cases.push_back({"tanh", [=] { return p(tanh(a)); }, {a}});
    cases.push_back({"exp", [=] { return p(exp(a)); }, {a}});
    cases.push_back({"square", [=] { return p(square(a)); }, {a}});
  }
  {
    Value a = F.param({2, 3}), b = F.away_from_zero({2, 3}, 0.5, 2.0);
    auto p = F.probe({2, 3});
    cases.push_back({"div", [=] { return p(div(a, b)); }, {a, b}});
  }
  {
    Value a = F.away_from_zero({2, 3});
    Value b = F.param({2, 3});
    auto p = F.probe({2, 3});
    cases.push_back({"relu", [=] { return p(relu(a)); }, {a}});
    cases.push_back({"elementwise",
                     [=] {
                       Value y = elementwise(Elementwise::add, a, b);
                       y = elementwise(Elementwise::mul, y, b);
                       y = elementwise(Elementwise::sub, y, a);
                       y = elementwise(Elementwise::relu, y);
                       return p(elementwise(Elementwise::scale, y, Value(), 0.7));
                     },
                     {a, b}});
  }
  {
    Value a = F.away_from_zero({2, 3}, 0.5, 2.0, true);
    auto p = F.probe({2, 3});
    cases.push_back({"log", [=] { return p(log(a)); }, {a}});
    cases.push_back({"sqrt", [=] { return p(sqrt(a)); }, {a}});
  }
  {
    Value s = F.param({1});
    auto p = F.probe({2, 3});
    cases.push_back({"broadcast", [=] { return p(broadcast(s, {2, 3})); }, {s}});
  }
  {
    Value x = F.param({3, 4}), b = F.param({4});
    auto p = F.probe({3, 4});
    auto p1 = F.probe({1});
    auto pd = F.probe({4});
    auto pt = F.probe({4, 3});
    auto pr = F.probe({2, 6});
    auto pc = F.probe({3, 2});
    auto prow = F.probe({4});
    cases.push_back({"add_row", [=] { return p(add_row(x, b)); }, {x, b}});
    cases.push_back({"sum", [=] { return p1(sum(x)); }, {x}});
    cases.push_back({"mean", [=] { return p1(mean(x)); }, {x}});
    cases.push_back({"mean_pool", [=] { return pd(mean_pool(x)); }, {x}});
    cases.push_back({"transpose", [=] { return pt(transpose(x)); }, {x}});
    cases.push_back({"reshape", [=] { return pr(reshape(x, {2, 6})); }, {x}});
    cases.push_back({"slice_cols", [=] { return pc(slice_cols(x, 1, 3)); }, {x}});
    cases.push_back({"row", [=] { return prow(row(x, 1)); }, {x}});
  }
  {
    Value a = F.param({3}), b = F.param({4});
    auto p = F.probe({7});
    auto ps = F.probe({2});
    cases.push_back({"concat", [=] { return p(concat(a, b)); }, {a, b}});
    cases.push_back({"slice", [=] { return ps(slice(b, 1, 3)); }, {b}});
  }
  {
    Value a = F.param({2, 2}), b = F.param({2, 3});
    auto p = F.probe({2, 5});
    cases.push_back({"concat_cols", [=] { return p(concat_cols({a, b})); }, {a, b}});
  }
  {
    Value a = F.param({3}), b = F.param({3});
    auto p = F.probe({2, 3});
    cases.push_back({"stack_rows", [=] { return p(stack_rows({a, b})); }, {a, b}});
  }
  {
    Value v = F.param({5}, -2.0, 2.0);
    Value m = F.param({3, 4}, -2.0, 2.0);
    auto p5 = F.probe({5});
    auto pm = F.probe({3, 4});
    cases.push_back({"softmax", [=] { return p5(softmax(v)); }, {v}});
    cases.push_back({"softmax.axis0", [=] { return pm(softmax(m, 0)); }, {m}});
    cases.push_back({"softmax.axis1", [=] { return pm(softmax(m, 1)); }, {m}});
    cases.push_back({"log_softmax", [=] { return pm(log_softmax(m)); }, {m}});
  }
  {
    Value x = F.param({3, 5}, -2.0, 2.0), g = F.param({5}, 0.5, 1.5), b = F.param({5});
    auto p = F.probe({3, 5});
    cases.push_back({"layer_norm", [=] { return p(layer_norm(x, g, b)); }, {x, g, b}});
    cases.push_back({"l2_normalize_rows", [=] { return p(l2_normalize_rows(x)); }, {x}});
  }
}

void add_loss_cases(std::vector<Case>& cases, Factory& F) {
  {
    Value z = F.param({4, 5});
    auto p = F.probe({4, 4});
    cases.push_back({"cosine_similarity_matrix", [=] { return p(cosine_similarity_matrix(z)); }, {z}});
    const Value labels = F.constant({4, 2}, 0.05, 1.0);
    cases.push_back({"relational_loss",
                     [=] { return relational_loss(cosine_similarity_matrix(z), cosine_similarity_matrix(labels)); },
                     {z}});
  }
  {
    Value yhat = F.param({4, 3});
    const Value y = F.constant({4, 3});
    cases.push_back({"rmse_loss", [=] { return rmse_loss(yhat, y); }, {yhat}});
    cases.push_back({"ccc_loss", [=] { return ccc_loss(yhat, y); }, {yhat}});
    Value v = F.param({6});
    const Value w = F.constant({6});
    cases.push_back({"ccc", [=] { return ccc(v, w); }, {v}});
    Value r1 = F.param({1}, 0.5, 1.5), r2 = F.param({1}, 0.5, 1.5);
    cases.push_back({"total_loss", [=] { return total_loss(r1, r2, 2.0); }, {r1, r2}});
  }
  {
    Value a = F.param({3, 4}), b = F.param({3, 4});
    cases.push_back({"contrastive_loss", [=] { return contrastive_loss(a, b, 0.5); }, {a, b}});
  }
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.encoder.T = 4;
  cfg.encoder.H = cfg.encoder.W = 8;
  cfg.encoder.D = cfg.encoder.D_f = 16;
  cfg.encoder.transformer_layers = 2;
  cfg.encoder.attention_heads = 2;
  cfg.encoder.feedforward_width = 32;
  cfg.encoder.patch_grid = 2;
  cfg.encoder.backbone_width = 16;
  cfg.head.C = 2;
  cfg.head.penultimate_width = 32;
  cfg.head.dropout_rate = 0.0;
  cfg.sampling.T = 4;
  cfg.sampling.K = 1;
  cfg.synth.subjects = 2;
  cfg.synth.videos_per_subject = 1;
  cfg.synth.L = 16;
  cfg.synth.H = cfg.synth.W = 8;
  cfg.synth.C = 2;
  cfg.training.K = 1;
  cfg.training.B = 2;
  cfg.training.lambda = 1.0;
  cfg.training.protocol = Protocol::split;
  return cfg;
}

}  // namespace

std::vector<ComponentCheck> run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  Factory F(options.seed);
  std::vector<Case> cases;
  add_operation_cases(cases, F);
  add_loss_cases(cases, F);
  if (options.inject_fault) {
    Value a = F.param({2, 3});
    auto p = F.probe({2, 3});
    cases.push_back({"fault.square", [=] { return p(faulty_square(a)); }, {a}});
  }

  const ExperimentConfig cfg = tiny_config();
  cfg.validate();
  auto model = std::make_shared<Model>(cfg.encoder, cfg.head, options.seed);
  const auto corpus = std::make_shared<std::vector<Video>>(generate_corpus(cfg.synth, options.seed));
  std::mt19937_64 batch_rng(options.seed);
  const VideoRefs refs = video_refs(*corpus);
  const auto batch = std::make_shared<std::vector<BatchItem>>(make_batch(refs, 2, cfg.sampling, {}, batch_rng));
  std::vector<Value> trainable;
  for (const auto& [name, v] : model->params().entries()) {
    if (v.requires_grad()) trainable.push_back(v);
  }
  const Clip& clip = (*batch)[0].clip;
  {
    const VideoEncoder& enc = model->encoder();
    auto p = F.probe({cfg.encoder.T, cfg.encoder.D});
    cases.push_back({"encoder.backbone", [=, &enc] { return p(enc.backbone_forward(clip)); },
                     {model->params().get("backbone.fc.weight"), model->params().get("backbone.fc.bias")}});
    Value x = F.param({cfg.encoder.T, cfg.encoder.D});
    std::vector<Value> thetas{x};
    for (const auto& [name, v] : model->params().entries()) {
      if (name.rfind("neck.", 0) == 0) thetas.push_back(v);
    }
    cases.push_back({"encoder.transformer", [=, &enc] { return p(enc.transformer_encoder(enc.positional_encode(x))); },
                     thetas});
    auto pz = F.probe({cfg.encoder.D});
    cases.push_back({"encoder.encode_clip", [=, &enc] { return pz(enc.encode_clip(clip)); }, thetas});
  }
  {
    const ContextFusion& fusion = model->fusion();
    Value z = F.param({cfg.encoder.D});
    const Value Z = F.constant({3, cfg.encoder.D});
    auto p = F.probe({2 * cfg.encoder.D});
    cases.push_back({"fusion.fuse", [=, &fusion] { return p(fusion.fuse(z, Z)); },
                     {z, model->params().get("fusion.theta"), model->params().get("fusion.phi"),
                      model->params().get("fusion.g")}});
  }
  {
    const RegressionHead& head = model->head();
    Value fused = F.param({2 * cfg.encoder.D});
    auto p = F.probe({cfg.head.C});
    std::vector<Value> thetas{fused};
    for (const auto& [name, v] : model->params().entries()) {
      if (name.rfind("head.", 0) == 0) thetas.push_back(v);
    }
    cases.push_back({"head", [=, &head] { return p(head.forward(fused, false, nullptr).per_label); }, thetas});
  }
  // The context branch is forward-only, so the oracle evaluates it once at
  // the unperturbed weights and holds it fixed.
  auto contexts = std::make_shared<std::vector<Value>>();
  for (const auto& item : *batch) contexts->push_back(model->encoder().encode_context(item.context, nullptr));
  cases.push_back({"pipeline.forward",
                   [=] {
                     auto out = model->forward_with_context(clip, (*contexts)[0], {});
                     return add(sum(out.output.per_label), sum(out.z));
                   },
                   trainable});
  cases.push_back({"pipeline.total_loss", [=] { return batch_losses(*model, *batch, cfg, {}, *contexts).total; },
                   trainable});

  std::vector<ComponentCheck> results;
  for (const auto& c : cases) {
    ComponentCheck r;
    r.name = c.name;
    for (const auto& theta : c.thetas) {
      const GradCheckResult g = grad_check(c.f, theta, options.eps);
      r.max_relative_error = std::max(r.max_relative_error, g.max_relative_error);
      r.coordinates += theta.size();
    }
    r.passed = r.max_relative_error < options.tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace relaff
