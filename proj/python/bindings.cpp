#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dtspike/checkpoint.hpp"
#include "dtspike/config.hpp"
#include "dtspike/profile.hpp"
#include "dtspike/train.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

dts::Tensor tensor_from(const FloatArray& a) {
    dts::Shape shape(static_cast<size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    std::vector<float> data(a.data(), a.data() + a.size());
    return dts::Tensor::from(std::move(shape), std::move(data));
}

py::array_t<float> array_from(const dts::Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

dts::ExperimentConfig config_with_overrides(const std::string& path, std::optional<uint64_t> seed,
                                            std::optional<double> lambda_m) {
    dts::ExperimentConfig cfg = dts::load_experiment_config(path);
    if (seed) {
        cfg.train.seed = *seed;
        cfg.data.seed = *seed;
    }
    if (lambda_m) cfg.train.lambda_m = static_cast<float>(*lambda_m);
    cfg.validate();
    return cfg;
}

py::dict eval_to_dict(const dts::EvalResult& r) {
    py::dict d;
    d["accuracy"] = r.accuracy;
    d["t_avg"] = r.t_avg;
    d["sa_percent"] = r.sa_percent;
    return d;
}

} // namespace

PYBIND11_MODULE(_dtspike, m) {
    m.doc() = "spiking vision transformers with trainable per-layer time-step masks";

    m.def(
        "lif_forward",
        [](const FloatArray& drive, float leak, float v_threshold, float gamma) {
            if (drive.ndim() < 2) throw dts::DimensionError("drive must be [T, ...]");
            dts::Tensor seq = tensor_from(drive);
            auto steps = dts::split0(seq, seq.dim(0));
            auto spikes = dts::lif_forward(steps, {leak, v_threshold, gamma});
            return array_from(dts::concat0(spikes));
        },
        py::arg("drive"), py::arg("leak") = 1.0f, py::arg("v_threshold") = 1.0f, py::arg("gamma") = 1.0f,
        "LIF over the leading time dimension; returns the spike train");

    m.def(
        "lif_surrogate",
        [](const FloatArray& h, float leak, float v_threshold, float gamma) {
            return array_from(dts::lif_surrogate(tensor_from(h), {leak, v_threshold, gamma}));
        },
        py::arg("h"), py::arg("leak") = 1.0f, py::arg("v_threshold") = 1.0f, py::arg("gamma") = 1.0f);

    m.def("mask_window",
          [](const FloatArray& scores) { return array_from(dts::mask_window(tensor_from(scores))); });

    m.def("step_scores", [](const FloatArray& params) {
        dts::Tensor t = tensor_from(params);
        return array_from(dts::step_scores(t));
    });

    m.def("step_mask", [](const FloatArray& scores) {
        dts::Tensor t = tensor_from(scores);
        return array_from(dts::step_mask_of(t));
    });

    m.def("active_steps", [](const FloatArray& mask) { return dts::active_steps(tensor_from(mask)); });

    m.def("project_nonneg", [](const FloatArray& params) {
        dts::Tensor t = tensor_from(params);
        dts::project_nonneg(t);
        return array_from(t);
    });

    m.def("cosine_similarity", [](const std::vector<double>& a, const std::vector<double>& b) {
        return dts::cosine_similarity(a, b);
    });

    m.def(
        "make_synthetic",
        [](uint64_t seed, int num_classes, int per_class, int image_size, float noise) {
            dts::SyntheticSpec spec{seed, num_classes, per_class, image_size, noise};
            dts::Dataset ds = dts::make_synthetic(spec);
            py::array_t<float> images({static_cast<py::ssize_t>(ds.size()),
                                       static_cast<py::ssize_t>(ds.channels),
                                       static_cast<py::ssize_t>(ds.image_size),
                                       static_cast<py::ssize_t>(ds.image_size)});
            std::copy(ds.images.begin(), ds.images.end(), images.mutable_data());
            py::array_t<int> labels(static_cast<py::ssize_t>(ds.size()));
            std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
            return py::make_tuple(images, labels);
        },
        py::arg("seed") = 7, py::arg("num_classes") = 10, py::arg("per_class") = 50,
        py::arg("image_size") = 16, py::arg("noise") = 0.08f);

    py::class_<dts::Model>(m, "Model")
        .def(py::init([](const std::string& config_path) {
                 dts::ExperimentConfig cfg = dts::load_experiment_config(config_path);
                 return new dts::Model(cfg.model, cfg.train.seed,
                                       cfg.train.resolved_t_init(cfg.model.max_steps));
             }),
             py::arg("config_path"))
        .def("forward",
             [](dts::Model& self, const FloatArray& images) {
                 return array_from(self.forward(tensor_from(images)));
             })
        .def("set_training", &dts::Model::set_training)
        .def("t_avg", &dts::Model::t_avg)
        .def("layers",
             [](dts::Model& self) {
                 py::list out;
                 for (const auto* l : self.masked_layers()) {
                     py::dict d;
                     d["name"] = l->name;
                     d["group"] = dts::to_string(l->group);
                     d["active_steps"] = l->gate.active();
                     d["max_steps"] = l->gate.max_steps();
                     out.append(d);
                 }
                 return out;
             })
        .def("load_checkpoint",
             [](dts::Model& self, const std::string& path) { dts::load_checkpoint(path, self); })
        .def("save_checkpoint",
             [](dts::Model& self, const std::string& path) { dts::save_checkpoint(path, self); });

    m.def(
        "train",
        [](const std::string& config_path, const std::string& out_dir, std::optional<uint64_t> seed,
           std::optional<double> lambda_m, bool verbose) {
            auto cfg = config_with_overrides(config_path, seed, lambda_m);
            auto [train_ds, eval_ds] = cfg.load_datasets();
            dts::Model model(cfg.model, cfg.train.seed, cfg.train.resolved_t_init(cfg.model.max_steps));
            dts::TrainState state = dts::train_loop(model, train_ds, eval_ds, cfg.train, out_dir, verbose);
            py::dict d;
            d["best_eval_acc"] = state.best_eval_acc;
            d["best_epoch"] = state.best_epoch;
            d["epochs"] = state.history.size();
            d["final_t_avg"] = state.history.empty() ? model.t_avg() : state.history.back().t_avg;
            return d;
        },
        py::arg("config_path"), py::arg("out_dir"), py::arg("seed") = std::nullopt,
        py::arg("lambda_m") = std::nullopt, py::arg("verbose") = false);

    m.def(
        "evaluate",
        [](const std::string& config_path, const std::string& checkpoint, std::optional<uint64_t> seed) {
            auto cfg = config_with_overrides(config_path, seed, std::nullopt);
            auto [train_ds, eval_ds] = cfg.load_datasets();
            (void)train_ds;
            dts::Model model(cfg.model, cfg.train.seed, cfg.train.resolved_t_init(cfg.model.max_steps));
            if (!checkpoint.empty()) dts::load_checkpoint(checkpoint, model);
            model.set_training(false);
            return eval_to_dict(dts::evaluate(model, eval_ds, cfg.train.batch_size));
        },
        py::arg("config_path"), py::arg("checkpoint") = std::string(), py::arg("seed") = std::nullopt);

    m.def(
        "profile",
        [](const std::string& config_path, const std::string& checkpoint) {
            auto cfg = dts::load_experiment_config(config_path);
            auto [train_ds, eval_ds] = cfg.load_datasets();
            (void)train_ds;
            dts::Model model(cfg.model, cfg.train.seed, cfg.train.resolved_t_init(cfg.model.max_steps));
            if (!checkpoint.empty()) dts::load_checkpoint(checkpoint, model);
            model.set_training(false);
            dts::ProfileReport r = dts::profile(model, eval_ds, cfg.profile.energy, cfg.train.batch_size,
                                                cfg.profile.sample_limit);
            py::dict d;
            d["t_avg"] = r.t_avg;
            d["sa_percent"] = r.sa_percent;
            d["flops"] = r.flops;
            d["sops"] = r.sops;
            d["compute_energy_pj"] = r.compute_energy_pj;
            d["memory_energy_pj"] = r.memory_energy_pj;
            d["total_energy_pj"] = r.total_energy_pj;
            d["mac_ac_ratio"] = r.energy.mac_ac_ratio();
            return d;
        },
        py::arg("config_path"), py::arg("checkpoint") = std::string());
}
