// Python bindings for the main operations: graph construction, detector
// math, injection, scanning, datasets, training and evaluation.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mab/builders.hpp"
#include "mab/detector.hpp"
#include "mab/experiment.hpp"
#include "mab/poison.hpp"
#include "mab/scanner.hpp"
#include "mab/serialize.hpp"
#include "mab/stats.hpp"
#include "mab/train.hpp"

namespace py = pybind11;
using namespace mab;

namespace {

Tensor tensor_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape.push_back(static_cast<std::size_t>(a.shape(i)));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> tensor_to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

TriggerSpec trigger_from_kwargs(const std::string& pattern, int size, const std::string& corner) {
    TriggerSpec t;
    auto p = pattern_from_tag(pattern);
    if (!p) throw Error("unknown trigger pattern '" + pattern + "'");
    t.pattern = *p;
    t.size = size;
    auto c = corner_from_tag(corner);
    if (!c) throw Error("unknown corner '" + corner + "'");
    t.placement = *c;
    return t;
}

DetectorConfig detector_from_kwargs(const std::string& mode, int alpha, double beta, double delta,
                                    int window) {
    DetectorConfig d;
    auto m = detector_mode_from_tag(mode);
    if (!m) throw Error("unknown detector mode '" + mode + "'");
    d.mode = *m;
    d.alpha = alpha;
    d.beta = beta;
    d.delta = delta;
    d.window = window;
    return d;
}

}  // namespace

PYBIND11_MODULE(_mablab, m) {
    m.doc() = "architectural-backdoor laboratory core";

    py::register_exception<Error>(m, "MabError");

    py::class_<ArchGraph>(m, "ArchGraph")
        .def_property_readonly("name", [](const ArchGraph& g) { return g.name; })
        .def_property_readonly("input_shape", [](const ArchGraph& g) { return g.input_shape; })
        .def("node_count", [](const ArchGraph& g) { return g.nodes.size(); })
        .def("node_ids",
             [](const ArchGraph& g) {
                 std::vector<std::string> ids;
                 for (const auto& [id, n] : g.nodes) ids.push_back(id);
                 return ids;
             })
        .def("__repr__", [](const ArchGraph& g) {
            return "<ArchGraph '" + g.name + "', " + std::to_string(g.nodes.size()) + " nodes>";
        });

    py::class_<ParamStore>(m, "ParamStore")
        .def_property_readonly("seed", [](const ParamStore& p) { return p.rng_seed; })
        .def("node_ids", [](const ParamStore& p) {
            std::vector<std::string> ids;
            for (const auto& [id, t] : p.params) ids.push_back(id);
            return ids;
        });

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", [](const Dataset& d) { return d.size(); })
        .def_property_readonly("num_classes", [](const Dataset& d) { return d.num_classes; })
        .def("image", [](const Dataset& d, std::size_t i) { return tensor_to_numpy(d.images.at(i)); })
        .def("label", [](const Dataset& d, std::size_t i) { return d.labels.at(i); });

    py::class_<EvalMetrics>(m, "EvalMetrics")
        .def_readonly("task_accuracy", &EvalMetrics::task_accuracy)
        .def_readonly("triggered_accuracy", &EvalMetrics::triggered_accuracy)
        .def_readonly("triggered_accuracy_ratio", &EvalMetrics::triggered_accuracy_ratio)
        .def("__repr__", [](const EvalMetrics& e) {
            return "<EvalMetrics task=" + std::to_string(e.task_accuracy) +
                   " triggered=" + std::to_string(e.triggered_accuracy) + ">";
        });

    m.def("build_architecture", &build_architecture, py::arg("name"), py::arg("num_classes"),
          py::arg("input_size") = 32);
    m.def("validate",
          [](const ArchGraph& g) {
              std::vector<std::string> out;
              for (const auto& v : validate(g))
                  out.push_back("[" + v.code + "] " + (v.node_id.empty() ? "" : v.node_id + ": ") +
                                v.message);
              return out;
          });
    m.def("infer_shapes", [](const ArchGraph& g) { return infer_shapes(g); });
    m.def("serialize", &serialize);
    m.def("deserialize", &deserialize);
    m.def("load_graph", &load_graph_file);
    m.def("save_graph", &save_graph_file);

    m.def(
        "apply_trigger",
        [](const py::array_t<double>& img, const std::string& pattern, int size,
           const std::string& corner) {
            return tensor_to_numpy(
                apply_trigger(tensor_from_numpy(img), trigger_from_kwargs(pattern, size, corner)));
        },
        py::arg("image"), py::arg("pattern") = "checkerboard", py::arg("size") = 3,
        py::arg("corner") = "bottom-left");

    m.def(
        "naive_detector",
        [](const py::array_t<double>& img, int alpha, double beta, double delta, int window) {
            return tensor_to_numpy(naive_detector(
                tensor_from_numpy(img), detector_from_kwargs("naive", alpha, beta, delta, window)));
        },
        py::arg("image"), py::arg("alpha") = 10, py::arg("beta") = 1.0, py::arg("delta") = 1.0,
        py::arg("window") = 3);
    m.def(
        "robust_detector",
        [](const py::array_t<double>& img, int alpha, double beta, double delta, int window) {
            return tensor_to_numpy(robust_detector(
                tensor_from_numpy(img), detector_from_kwargs("robust", alpha, beta, delta, window)));
        },
        py::arg("image"), py::arg("alpha") = 10, py::arg("beta") = 1.0, py::arg("delta") = 1.0,
        py::arg("window") = 3);

    m.def(
        "inject_mab",
        [](const ArchGraph& g, const std::string& mode, int alpha, double beta, double delta,
           int window) {
            return inject_mab(g, detector_from_kwargs(mode, alpha, beta, delta, window));
        },
        py::arg("graph"), py::arg("mode") = "robust", py::arg("alpha") = 10, py::arg("beta") = 1.0,
        py::arg("delta") = 1.0, py::arg("window") = 3);

    m.def("make_synthetic", &make_synthetic, py::arg("num_classes"), py::arg("n"), py::arg("seed"),
          py::arg("image_size") = 16, py::arg("noise") = 0.05);
    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("load_cifar_binary", &load_cifar_binary, py::arg("paths"));

    m.def(
        "poison_dataset",
        [](const Dataset& ds, double fraction, const std::string& pattern, int size,
           const std::string& corner, int target, std::uint64_t seed) {
            PoisonSpec spec;
            spec.fraction = fraction;
            spec.trigger = trigger_from_kwargs(pattern, size, corner);
            spec.target_class = target;
            return poison_dataset(ds, spec, seed);
        },
        py::arg("dataset"), py::arg("fraction") = 0.1, py::arg("pattern") = "checkerboard",
        py::arg("size") = 3, py::arg("corner") = "bottom-left", py::arg("target") = 0,
        py::arg("seed") = 1);

    m.def("init_params", &init_params, py::arg("graph"), py::arg("seed"));
    m.def(
        "forward_logits",
        [](const ArchGraph& g, const ParamStore& ps, const py::array_t<double>& img) {
            auto acts = forward_pass(g, ps, tensor_from_numpy(img));
            return tensor_to_numpy(acts.at(g.output_id));
        },
        py::arg("graph"), py::arg("params"), py::arg("image"));

    m.def(
        "train",
        [](const ArchGraph& g, const Dataset& train_set, const Dataset& test_set, int epochs,
           int batch_size, double lr, double momentum, std::uint64_t seed,
           const std::optional<std::string>& trigger_pattern) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.lr = lr;
            cfg.momentum = momentum;
            cfg.seed = seed;
            std::optional<TriggerSpec> trig;
            if (trigger_pattern) trig = trigger_from_kwargs(*trigger_pattern, 3, "bottom-left");
            TrainResult r = train(g, train_set, test_set, cfg, trig);
            std::vector<std::pair<double, double>> history;
            for (const auto& e : r.history.epochs) history.emplace_back(e.task_acc, e.trig_acc);
            return py::make_tuple(r.params, history);
        },
        py::arg("graph"), py::arg("train_set"), py::arg("test_set"), py::arg("epochs") = 5,
        py::arg("batch_size") = 16, py::arg("lr") = 0.02, py::arg("momentum") = 0.9,
        py::arg("seed") = 1, py::arg("trigger") = std::nullopt);

    m.def(
        "evaluate",
        [](const ArchGraph& g, const ParamStore& ps, const Dataset& test,
           const std::optional<std::string>& trigger_pattern) {
            std::optional<TriggerSpec> trig;
            if (trigger_pattern) trig = trigger_from_kwargs(*trigger_pattern, 3, "bottom-left");
            return evaluate(g, ps, test, trig);
        },
        py::arg("graph"), py::arg("params"), py::arg("test_set"), py::arg("trigger") = std::nullopt);

    m.def("ks_two_sample", [](std::vector<double> a, std::vector<double> b) {
        KsResult r = ks_two_sample(std::move(a), std::move(b));
        return py::make_tuple(r.d, r.p);
    });

    m.def(
        "detector_trace",
        [](const py::array_t<double>& img, const std::string& mode, int alpha, double beta,
           double delta, int window) {
            DetectorConfig cfg = detector_from_kwargs(mode, alpha, beta, delta, window);
            DetectorTrace trace;
            Tensor out = cfg.mode == DetectorMode::Naive
                             ? naive_detector(tensor_from_numpy(img), cfg, &trace)
                             : robust_detector(tensor_from_numpy(img), cfg, &trace);
            py::list stages;
            for (const auto& [stage, t] : trace)
                stages.append(py::make_tuple(stage, tensor_to_numpy(t)));
            return py::make_tuple(tensor_to_numpy(out), stages);
        },
        py::arg("image"), py::arg("mode") = "robust", py::arg("alpha") = 10, py::arg("beta") = 1.0,
        py::arg("delta") = 1.0, py::arg("window") = 3);

    m.def(
        "backdoor_loss",
        [](const ArchGraph& g, const ParamStore& ps, const Dataset& val,
           const std::string& pattern, int size, const std::string& corner) {
            return backdoor_loss(g, ps, val, trigger_from_kwargs(pattern, size, corner));
        },
        py::arg("graph"), py::arg("params"), py::arg("val_set"),
        py::arg("pattern") = "checkerboard", py::arg("size") = 3,
        py::arg("corner") = "bottom-left");

    m.def("scan_graph", [](const ArchGraph& g) { return report_json(scan_graph(g)); });
    m.def("scan_file", [](const std::string& path) { return report_json(scan(path)); });
}
