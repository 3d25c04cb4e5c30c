#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "relaff/config.hpp"
#include "relaff/error.hpp"
#include "relaff/gradcheck_suite.hpp"
#include "relaff/io.hpp"
#include "relaff/log.hpp"
#include "relaff/losses.hpp"
#include "relaff/metrics.hpp"
#include "relaff/optimizer.hpp"
#include "relaff/train.hpp"

namespace py = pybind11;
using namespace relaff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Value to_value(const Array& a, bool track = false) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  if (shape.empty()) shape = {1};
  std::vector<double> data(a.data(), a.data() + a.size());
  return track ? Value::parameter(std::move(shape), std::move(data)) : Value::constant(std::move(shape), std::move(data));
}

Array to_array(const Value& v) {
  std::vector<py::ssize_t> shape(v.shape().begin(), v.shape().end());
  Array out(shape);
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

Array grad_array(const Value& v) {
  std::vector<py::ssize_t> shape(v.shape().begin(), v.shape().end());
  Array out(shape);
  std::copy(v.grad().begin(), v.grad().end(), out.mutable_data());
  return out;
}

Table to_table(const Array& a) {
  if (a.ndim() == 1) {
    Table t(static_cast<std::size_t>(a.shape(0)), 1);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
  }
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array");
  Table t(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::dict label_metrics_dict(const LabelMetrics& m) {
  py::dict d;
  d["MAE"] = m.mae;
  d["RMSE"] = m.rmse;
  d["PCC"] = m.pcc ? py::object(py::float_(*m.pcc)) : py::object(py::none());
  d["CCC"] = m.ccc ? py::object(py::float_(*m.ccc)) : py::object(py::none());
  return d;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json py_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

ExperimentConfig config_arg(const py::object& o) {
  if (o.is_none()) return ExperimentConfig{};
  return config_from_json(py_to_json(o));
}

// Loss value and its gradient with respect to the first argument.
py::tuple value_and_grad(const std::function<Value(const Value&)>& f, const Array& x) {
  Value v = to_value(x, true);
  Value loss = f(v);
  backward(loss);
  return py::make_tuple(loss.item(), grad_array(v));
}

Array video_frames(const Video& v) {
  py::array_t<float> out({v.L, v.H, v.W, std::size_t{3}});
  std::copy(v.frames.begin(), v.frames.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_relaff, m) {
  m.doc() = "Context-attention video regression with a relational loss";
  init_logging();

  py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
  py::register_exception<DegenerateVectorError>(m, "DegenerateVectorError", PyExc_ValueError);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ArithmeticError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // Losses
  m.def("cosine_similarity_matrix", [](const Array& x) { return to_array(cosine_similarity_matrix(to_value(x))); });
  m.def("relational_loss",
        [](const Array& mhat, const Array& mtrue) { return relational_loss(to_value(mhat), to_value(mtrue)).item(); });
  m.def("relational_loss_from_features",
        [](const Array& features, const Array& labels) {
          const Value M = cosine_similarity_matrix(to_value(labels));
          return value_and_grad([&](const Value& z) { return relational_loss(cosine_similarity_matrix(z), M); },
                                features);
        },
        "Relational loss of feature rows against label rows, and its gradient w.r.t. the features.");
  m.def("rmse_loss", [](const Array& p, const Array& y) { return rmse_loss(to_value(p), to_value(y)).item(); });
  m.def("ccc", [](const Array& p, const Array& y) { return ccc(to_value(p), to_value(y)).item(); });
  m.def("ccc_loss", [](const Array& p, const Array& y) { return ccc_loss(to_value(p), to_value(y)).item(); });
  m.def("total_loss", [](double reg, double rel, double lambda) {
    return total_loss(Value::scalar(reg), Value::scalar(rel), lambda).item();
  });
  m.def("contrastive_loss",
        [](const Array& a, const Array& p, double temperature) {
          return contrastive_loss(to_value(a), to_value(p), temperature).item();
        },
        py::arg("anchors"), py::arg("positives"), py::arg("temperature") = kDefaultTemperature);

  // Metrics
  m.def("pearson", [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); });
  m.def("concordance", [](const std::vector<double>& a, const std::vector<double>& b) { return concordance(a, b); });
  m.def("metrics_report", [](const Array& pred, const Array& truth) {
    const MetricsReport r = metrics_report(to_table(pred), to_table(truth));
    py::dict out;
    for (const auto& lm : r.per_label) out[py::str(lm.label)] = label_metrics_dict(lm);
    out["mean"] = label_metrics_dict(r.aggregate);
    return out;
  });

  // Schedule and sampling
  m.def("lr_schedule", &lr_schedule, py::arg("epoch"), py::arg("base") = 1e-4, py::arg("factor") = 0.1,
        py::arg("every") = 5);
  m.def("clip_frame_indices", &clip_frame_indices, py::arg("L"), py::arg("T"), py::arg("start"));
  m.def("context_starts", &context_starts, py::arg("L"), py::arg("T"), py::arg("start"), py::arg("K"));
  m.def("scale_label", [](double v, const std::string& scale, bool to_native) {
    return scale_label_value(v, label_scale(scale),
                             to_native ? ScaleDirection::to_native_range : ScaleDirection::to_train_range);
  }, py::arg("value"), py::arg("scale"), py::arg("to_native") = false);

  // Config
  m.def("default_config", [] { return json_to_py(config_to_json(ExperimentConfig{})); });
  m.def("validate_config", [](const py::object& cfg) { return json_to_py(config_to_json(config_arg(cfg))); },
        "Validates a config dict and returns it with every default filled in.");

  // Corpus
  py::class_<Video>(m, "Video")
      .def_readonly("video_id", &Video::video_id)
      .def_readonly("subject_id", &Video::subject_id)
      .def_readonly("L", &Video::L)
      .def_readonly("H", &Video::H)
      .def_readonly("W", &Video::W)
      .def_readonly("fps", &Video::fps)
      .def_property_readonly("labels", [](const Video& v) { return v.labels.values; })
      .def_property_readonly("scale", [](const Video& v) { return v.labels.scale.id; })
      .def_property_readonly("frames", &video_frames);

  m.def("generate_corpus", [](const py::object& cfg) {
    const ExperimentConfig c = config_arg(cfg);
    return generate_corpus(c.synth, c.seeds.corpus);
  }, py::arg("config") = py::none());
  m.def("write_corpus", &write_corpus);
  m.def("read_corpus", &read_corpus);

  // Models and training
  py::class_<Model, std::shared_ptr<Model>>(m, "Model")
      .def(py::init([](const py::object& cfg, std::uint64_t seed) {
             const ExperimentConfig c = config_arg(cfg);
             return std::make_shared<Model>(c.encoder, c.head, seed);
           }),
           py::arg("config") = py::none(), py::arg("seed") = 0)
      .def("parameter_names", [](const Model& model) { return model.params().names(); })
      .def("parameter", [](const Model& model, const std::string& name) { return to_array(model.params().get(name)); })
      .def("save", [](const Model& model, const std::filesystem::path& p) { write_weights(p, model.params()); })
      .def("load", [](Model& model, const std::filesystem::path& p) { load_weights(p, model.params()); })
      .def("encode", [](const Model& model, const Video& v, std::size_t start) {
        NoGradGuard no_grad;
        return to_array(model.encoder().encode_clip(extract_clip(v, model.encoder_config().T, start)));
      }, py::arg("video"), py::arg("start") = 0)
      .def("predict", [](const Model& model, const Video& v, std::size_t K) {
        SamplingConfig s;
        s.T = model.encoder_config().T;
        s.K = K;
        const VideoPrediction p = infer_video(model, v, s);
        return py::make_tuple(p.per_label, p.total);
      }, py::arg("video"), py::arg("K") = 1);

  m.def("alignment_score", [](const Model& model, const std::vector<Video>& videos, const py::object& cfg,
                              std::size_t n_batches, std::uint64_t seed) {
    const ExperimentConfig c = config_arg(cfg);
    std::vector<const Video*> refs;
    for (const auto& v : videos) refs.push_back(&v);
    return alignment_score(model, refs, c, n_batches, seed);
  }, py::arg("model"), py::arg("videos"), py::arg("config") = py::none(), py::arg("n_batches") = 50,
        py::arg("seed") = 0);

  m.def("train_model", [](const std::vector<Video>& videos, const py::object& cfg, const std::vector<std::string>& train_subjects,
                          const std::vector<std::string>& test_subjects, py::object lambda, py::object K) {
    ExperimentConfig c = config_arg(cfg);
    Variant v = proposed_variant(c);
    if (!lambda.is_none()) v.lambda = lambda.cast<double>();
    if (!K.is_none()) v.K = K.cast<std::size_t>();
    Fold fold{test_subjects, train_subjects};
    FoldResult r;
    {
      py::gil_scoped_release release;
      r = run_fold(videos, fold, 0, c.training.subsample_fraction, c, v, true);
    }
    py::list epochs;
    for (const auto& e : r.epochs) epochs.append(py::make_tuple(e.reg, e.rel, e.total));
    return py::make_tuple(std::shared_ptr<Model>(std::move(r.model)), epochs);
  }, py::arg("videos"), py::arg("config"), py::arg("train_subjects"), py::arg("test_subjects"),
        py::arg("lambda_") = py::none(), py::arg("K") = py::none(),
        "Trains one fold and returns (model, [(L_reg, L_rel, L_total) per epoch]).");

  m.def("cross_validate", [](const std::vector<Video>& videos, const py::object& cfg, std::size_t jobs) {
    const ExperimentConfig c = config_arg(cfg);
    nlohmann::json rec;
    {
      py::gil_scoped_release release;
      const auto r = run_cross_validation(videos, make_plan(videos, c.training), c, proposed_variant(c), jobs);
      rec = run_record(c, r);
    }
    return json_to_py(rec);
  }, py::arg("videos"), py::arg("config"), py::arg("jobs") = 1);

  m.def("ablate", [](const std::vector<Video>& videos, const py::object& cfg, std::size_t jobs) {
    const ExperimentConfig c = config_arg(cfg);
    nlohmann::json recs = nlohmann::json::array();
    {
      py::gil_scoped_release release;
      for (const auto& r : run_ablation(videos, c, jobs)) recs.push_back(run_record(c, r));
    }
    return json_to_py(recs);
  }, py::arg("videos"), py::arg("config"), py::arg("jobs") = 1);

  m.def("gradcheck", [](bool inject_fault) {
    GradCheckSuiteOptions o;
    o.inject_fault = inject_fault;
    py::dict out;
    for (const auto& r : run_gradcheck_suite(o)) out[py::str(r.name)] = r.max_relative_error;
    return out;
  }, py::arg("inject_fault") = false, "Maximum relative gradient error per component.");
}
