#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "emosphere/data.hpp"
#include "emosphere/errors.hpp"
#include "emosphere/geometry.hpp"
#include "emosphere/gradcheck.hpp"
#include "emosphere/losses.hpp"
#include "emosphere/metrics.hpp"
#include "emosphere/model.hpp"
#include "emosphere/trainer.hpp"

namespace py = pybind11;
using namespace emosphere;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

py::tuple vad_tuple(const VadPoint& p) { return py::make_tuple(p.v, p.a, p.d); }

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["ccc_v"] = r.ccc_v;
  d["ccc_a"] = r.ccc_a;
  d["ccc_d"] = r.ccc_d;
  d["ccc_mean"] = r.ccc_mean;
  d["macro_f1"] = r.macro_f1;
  d["accuracy"] = r.accuracy;
  d["confusion"] = r.confusion;
  return d;
}

py::dict record_dict(const EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["lambda"] = r.lambda;
  d["train_loss"] = r.train_loss;
  d["train_ccc_loss"] = r.train_ccc_loss;
  d["train_aux_loss"] = r.train_aux_loss;
  d["val_loss"] = r.val_loss;
  d["val"] = report_dict(r.val);
  d["saved"] = r.saved;
  return d;
}

std::pair<std::vector<Example>, std::vector<Example>> by_split(const SyntheticDataset& s) {
  std::pair<std::vector<Example>, std::vector<Example>> out;
  for (std::size_t i = 0; i < s.examples.size(); ++i) {
    (s.dataset.records[i].split == Split::Val ? out.second : out.first).push_back(s.examples[i]);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_emosphere, m) {
  m.doc() = "Spherical VAD regions, losses and a desk-scale speech emotion regressor.";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<IndexError>(m, "IndexError", error.ptr());
  py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<FormatError>(m, "FormatError", error.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<StateError>(m, "StateError", error.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", error.ptr());

  // ---- geometry

  m.def("normalize_vad", [](double v, double a, double d) {
    return vad_tuple(normalize_vad({v, a, d, VadScale::Raw17}));
  }, py::arg("v"), py::arg("a"), py::arg("d"));
  m.def("denormalize_vad", [](double v, double a, double d) {
    return vad_tuple(denormalize_vad({v, a, d, VadScale::NormUnit}));
  }, py::arg("v"), py::arg("a"), py::arg("d"));
  m.def("to_spherical", [](double v, double a, double d) {
    const SphericalPoint s = to_spherical({v, a, d, VadScale::NormUnit});
    return py::make_tuple(s.r, s.azimuth_deg, s.elevation_deg);
  }, py::arg("v"), py::arg("a"), py::arg("d"), "Normalized VAD to (r, azimuth, elevation) in degrees.");
  m.def("to_cartesian", [](double r, double azimuth, double elevation) {
    return vad_tuple(to_cartesian({r, azimuth, elevation}));
  }, py::arg("r"), py::arg("azimuth"), py::arg("elevation"));

  py::class_<RegionPartition>(m, "RegionPartition")
      .def(py::init<int, int>(), py::arg("n_phi"), py::arg("n_theta"))
      .def_property_readonly("n_phi", &RegionPartition::n_phi)
      .def_property_readonly("n_theta", &RegionPartition::n_theta)
      .def_property_readonly("n_regions", &RegionPartition::n_regions)
      .def("assign", [](const RegionPartition& p, double azimuth, double elevation) {
        return assign_region(p, {1.0, azimuth, elevation}).index;
      }, py::arg("azimuth"), py::arg("elevation"))
      .def("region_of_raw", [](const RegionPartition& p, double v, double a, double d) {
        return region_of_raw(p, {v, a, d, VadScale::Raw17}).index;
      }, py::arg("v"), py::arg("a"), py::arg("d"))
      .def("centroid", [](const RegionPartition& p, int index, double r) {
        const SphericalPoint s = region_centroid(p, {index}, r);
        return py::make_tuple(s.r, s.azimuth_deg, s.elevation_deg);
      }, py::arg("index"), py::arg("r") = 1.0)
      .def("__repr__", [](const RegionPartition& p) {
        return "RegionPartition(n_phi=" + std::to_string(p.n_phi()) +
               ", n_theta=" + std::to_string(p.n_theta()) + ")";
      });
  m.def("make_partition", &make_partition, py::arg("angle_deg"));

  // ---- losses

  m.def("inverse_frequency_weights", [](const std::vector<std::int64_t>& counts) {
    return inverse_frequency_weights(counts, static_cast<int>(counts.size())).w;
  }, py::arg("counts"));
  m.def("weighted_cross_entropy",
        [](const Array& logits, const std::vector<int>& targets, std::optional<std::vector<double>> weights) {
          const Tensor t = to_tensor(logits);
          ClassWeights w = t.rank() == 2 ? uniform_weights(static_cast<int>(t.dim(1))) : ClassWeights{};
          if (weights) w.w = *weights;
          const LossValue l = weighted_cross_entropy(t, targets, w);
          return py::make_tuple(l.value, to_array(l.gradient));
        },
        py::arg("logits"), py::arg("targets"), py::arg("weights") = py::none(),
        "Returns (loss, d loss / d logits). Weights default to 1 for every class.");
  m.def("ccc", [](const std::vector<double>& p, const std::vector<double>& t) { return ccc(p, t); },
        py::arg("pred"), py::arg("target"));
  m.def("ccc_loss", [](const Array& pred, const Array& target) {
    const LossValue l = ccc_loss(to_tensor(pred), to_tensor(target));
    return py::make_tuple(l.value, to_array(l.gradient));
  }, py::arg("pred"), py::arg("target"));
  m.def("lambda_schedule", [](int epoch, int cutoff_epoch, bool enabled) {
    ScheduleConfig cfg;
    cfg.cutoff_epoch = cutoff_epoch;
    cfg.enabled = enabled;
    return lambda_schedule(epoch, cfg);
  }, py::arg("epoch"), py::arg("cutoff_epoch") = 5, py::arg("enabled") = true);

  // ---- metrics

  m.def("evaluate_regression", [](const Array& pred, const Array& target) {
    const RegressionReport r = evaluate_regression(to_tensor(pred), to_tensor(target));
    py::dict d;
    d["ccc_v"] = r.ccc_v;
    d["ccc_a"] = r.ccc_a;
    d["ccc_d"] = r.ccc_d;
    d["ccc_mean"] = r.ccc_mean;
    return d;
  }, py::arg("pred"), py::arg("target"));
  m.def("evaluate_classification", [](const std::vector<int>& pred, const std::vector<int>& truth, int n) {
    const ClassificationReport r = evaluate_classification(pred, truth, n);
    py::dict d;
    d["macro_f1"] = r.macro_f1;
    d["accuracy"] = r.accuracy;
    d["confusion"] = r.confusion;
    return d;
  }, py::arg("pred"), py::arg("truth"), py::arg("n_classes"));

  // ---- model

  py::enum_<Pooling>(m, "Pooling")
      .value("StylePooling", Pooling::StylePooling)
      .value("AttentiveStats", Pooling::AttentiveStats);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](int feat_dim, int hidden_dim, int n_heads, int kernel_size, int n_regions,
                       Pooling pooling, std::uint64_t seed) {
             ModelConfig c{feat_dim, hidden_dim, n_heads, kernel_size, n_regions, pooling, seed};
             c.validate();
             return c;
           }),
           py::arg("feat_dim") = 16, py::arg("hidden_dim") = 32, py::arg("n_heads") = 2,
           py::arg("kernel_size") = 5, py::arg("n_regions") = 8,
           py::arg("pooling") = Pooling::StylePooling, py::arg("seed") = 0)
      .def_readwrite("feat_dim", &ModelConfig::feat_dim)
      .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
      .def_readwrite("n_heads", &ModelConfig::n_heads)
      .def_readwrite("kernel_size", &ModelConfig::kernel_size)
      .def_readwrite("n_regions", &ModelConfig::n_regions)
      .def_readwrite("pooling", &ModelConfig::pooling)
      .def_readwrite("seed", &ModelConfig::seed)
      .def(py::self == py::self);

  py::class_<Model>(m, "Model")
      .def(py::init<const ModelConfig&>(), py::arg("config"))
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def("infer", [](const Model& model, const Array& features) {
        const ModelOutput out = model.infer(to_tensor(features));
        return py::make_tuple(to_array(out.region_logits), to_array(out.vad_pred));
      }, py::arg("features"), "[B, T, D] features to (region logits [B, N], VAD [B, 3]).")
      .def("save", [](const Model& model, const std::filesystem::path& path,
                      const std::vector<std::string>& class_names) { save_checkpoint(path, model, class_names); },
           py::arg("path"), py::arg("class_names") = std::vector<std::string>{});
  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    return py::make_tuple(std::move(ck.model), ck.class_names);
  }, py::arg("path"), "Returns (model, class_names).");

  // ---- data and training

  py::class_<Example>(m, "Example")
      .def_readonly("id", &Example::id)
      .def_property_readonly("features", [](const Example& e) { return to_array(e.features); })
      .def_property_readonly("vad", [](const Example& e) { return vad_tuple(e.vad); })
      .def_readonly("region", &Example::region)
      .def_readonly("category", &Example::category);

  m.def("load_examples", [](const std::filesystem::path& manifest, double angle_deg, std::size_t feat_dim,
                            bool keep_x) {
    std::vector<UtteranceRecord> records = load_manifest(manifest);
    if (!keep_x) records = filter_x_labels(records).records;
    return load_examples(records, make_partition(angle_deg), feat_dim);
  }, py::arg("manifest"), py::arg("angle_deg") = 90.0, py::arg("feat_dim") = 16, py::arg("keep_x") = false);

  m.def("synthetic_split", [](int n, int feat_dim, int frames, double noise, std::uint64_t seed,
                              double val_fraction, double angle_deg) {
    SyntheticConfig cfg{n, feat_dim, frames, noise, seed, val_fraction, angle_deg};
    return by_split(generate_synthetic(cfg));
  }, py::arg("n") = 512, py::arg("feat_dim") = 16, py::arg("frames") = 10, py::arg("noise") = 0.05,
     py::arg("seed") = 0, py::arg("val_fraction") = 0.2, py::arg("angle_deg") = 90.0,
     "Synthetic (train, val) example lists.");
  m.def("synthesize_dataset", [](const std::filesystem::path& out_dir, int n, int feat_dim, int frames,
                                 double noise, std::uint64_t seed) {
    SyntheticConfig cfg{n, feat_dim, frames, noise, seed, 0.2, 90.0};
    synthesize_dataset(cfg, out_dir);
    return out_dir / "manifest.tsv";
  }, py::arg("out_dir"), py::arg("n") = 512, py::arg("feat_dim") = 16, py::arg("frames") = 10,
     py::arg("noise") = 0.05, py::arg("seed") = 0, "Writes a manifest and feature files; returns the manifest path.");

  m.def("fit",
        [](Model& model, const std::vector<Example>& train, const std::vector<Example>& val, double angle_deg,
           int epochs, int batch_size, double lr, double weight_decay, const std::string& aux,
           bool weighted, bool dynamic_weighting, std::uint64_t seed,
           std::optional<std::filesystem::path> checkpoint, std::optional<std::filesystem::path> history) {
          TrainConfig cfg;
          cfg.epochs = epochs;
          cfg.batch_size = batch_size;
          cfg.lr = lr;
          cfg.weight_decay = weight_decay;
          cfg.aux_mode = aux_mode_from_string(aux);
          cfg.wce_mode = weighted ? WceMode::Weighted : WceMode::Unweighted;
          cfg.schedule.enabled = dynamic_weighting;
          cfg.seed = seed;
          FitResult r = [&] {
            py::gil_scoped_release release;
            return fit(model, train, val, make_partition(angle_deg), cfg, {checkpoint, history});
          }();
          py::list hist;
          for (const auto& rec : r.history) hist.append(record_dict(rec));
          py::dict out;
          out["history"] = hist;
          out["best_epoch"] = r.best_epoch;
          out["best_val_loss"] = r.best_val_loss;
          out["best_model"] = std::move(r.best_model);
          out["warnings"] = r.warnings;
          return out;
        },
        py::arg("model"), py::arg("train"), py::arg("val"), py::arg("angle_deg") = 90.0, py::arg("epochs") = 20,
        py::arg("batch_size") = 32, py::arg("lr") = 1e-3, py::arg("weight_decay") = 0.01,
        py::arg("aux") = "spherical", py::arg("weighted") = true, py::arg("dynamic_weighting") = true,
        py::arg("seed") = 0, py::arg("checkpoint") = py::none(), py::arg("history") = py::none(),
        "Trains `model` in place and returns the history and the selected model.");

  m.def("predict", [](const Model& model, const std::vector<Example>& examples, int batch_size) {
    const Predictions p = predict(model, examples, batch_size);
    return py::make_tuple(to_array(p.region_logits), to_array(p.vad));
  }, py::arg("model"), py::arg("examples"), py::arg("batch_size") = 64);

  m.def("evaluate", [](const Model& model, const std::vector<Example>& examples, double angle_deg) {
    // Region head only; categorical vocabularies need the training split.
    TrainConfig cfg;
    cfg.wce_mode = WceMode::Unweighted;
    const AuxTask aux = make_aux_task(examples, make_partition(angle_deg), cfg);
    return report_dict(evaluate(model, examples, aux, cfg.schedule.cutoff_epoch, cfg).report);
  }, py::arg("model"), py::arg("examples"), py::arg("angle_deg") = 90.0);

  m.def("gradient_suite", [](int seeds) {
    GradSuiteConfig cfg;
    cfg.seeds = seeds;
    const GradSuiteSummary s = run_gradient_suite(cfg);
    py::dict worst;
    for (const auto& r : s.worst) worst[py::str(r.name)] = r.max_rel_error;
    return py::make_tuple(s.ok, worst);
  }, py::arg("seeds") = 20, "Returns (ok, {check name: worst relative error}).");
}
