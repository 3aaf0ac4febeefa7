#include "pointgcn/binary_io.hpp"
#include "pointgcn/data.hpp"
#include "pointgcn/graph.hpp"
#include "pointgcn/model.hpp"
#include "pointgcn/train.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace pointgcn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

PointCloud to_cloud(const FloatArray& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("points must have shape (n, 3)");
    PointCloud c;
    c.points.resize(std::size_t(a.shape(0)));
    const float* p = a.data();
    for (std::size_t i = 0; i < c.points.size(); ++i) c.points[i] = {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
    return c;
}

py::array_t<float> to_array(const PointCloud& c) {
    py::array_t<float> out({py::ssize_t(c.size()), py::ssize_t(3)});
    float* p = out.mutable_data();
    for (std::size_t i = 0; i < c.size(); ++i) {
        p[3 * i] = c.points[i].x;
        p[3 * i + 1] = c.points[i].y;
        p[3 * i + 2] = c.points[i].z;
    }
    return out;
}

py::array_t<double> to_array(const Eigen::MatrixXd& m) {
    py::array_t<double> out({py::ssize_t(m.rows()), py::ssize_t(m.cols())});
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.mutable_data(), m.rows(),
                                                                                       m.cols()) = m;
    return out;
}

// Stacks a fixed-size dataset as (N, n, 3) points and (N,) labels.
py::tuple dataset_arrays(const Dataset& d) {
    const std::size_t n = d.size() ? d.clouds[0].size() : 0;
    py::array_t<float> pts({py::ssize_t(d.size()), py::ssize_t(n), py::ssize_t(3)});
    py::array_t<int> labels(py::ssize_t(d.size()));
    float* p = pts.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (const auto& q : d.clouds[i].points) {
            *p++ = q.x;
            *p++ = q.y;
            *p++ = q.z;
        }
        labels.mutable_data()[i] = d.clouds[i].label.value_or(-1);
    }
    return py::make_tuple(pts, labels, d.class_names);
}

Dataset make_dataset(const py::array_t<float, py::array::c_style | py::array::forcecast>& points,
                     const std::vector<int>& labels, const std::vector<std::string>& class_names) {
    if (points.ndim() != 3 || points.shape(2) != 3) throw std::invalid_argument("points must have shape (N, n, 3)");
    if (std::size_t(points.shape(0)) != labels.size()) throw std::invalid_argument("one label per cloud is required");
    Dataset d;
    d.class_names = class_names;
    const float* p = points.data();
    const std::size_t n = std::size_t(points.shape(1));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        PointCloud c;
        c.points.resize(n);
        for (auto& q : c.points) {
            q = {p[0], p[1], p[2]};
            p += 3;
        }
        c.label = labels[i];
        d.clouds.push_back(std::move(c));
    }
    return d;
}

ModelConfig config_from(const py::dict& kw) {
    ModelConfig c;
    for (const auto& [k, v] : kw) {
        const auto key = py::str(k).cast<std::string>();
        std::string value = py::str(v).cast<std::string>();
        if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
            std::ostringstream s;
            bool first = true;
            for (const auto& x : v) s << (std::exchange(first, false) ? "" : ",") << py::str(x).cast<std::string>();
            value = s.str();
        } else if (py::isinstance<py::bool_>(v)) {
            value = v.cast<bool>() ? "true" : "false";
        }
        if (!c.set(key, value)) throw std::invalid_argument("unknown model setting '" + key + "'");
    }
    return c;
}

py::list report_rows(const TrainReport& r) {
    py::list rows;
    for (const auto& e : r.epochs) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["train_loss"] = e.train_loss;
        d["test_loss"] = e.test_loss;
        d["instance_accuracy"] = e.instance_accuracy;
        d["class_accuracy"] = e.class_accuracy;
        d["seconds"] = e.seconds;
        rows.append(d);
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_pointgcn, m) {
    m.doc() = "Graph CNN classifier for point clouds";

    m.def("normalize_unit_sphere", [](const FloatArray& pts) { return to_array(normalize_unit_sphere(to_cloud(pts))); },
          py::arg("points"));
    m.def("farthest_point_sample",
          [](const FloatArray& pts, std::size_t count, std::uint64_t seed) {
              return farthest_point_sample(to_cloud(pts), count, seed);
          },
          py::arg("points"), py::arg("count"), py::arg("seed") = 0);
    m.def("knn_adjacency",
          [](const FloatArray& pts, std::size_t k) {
              const WeightedGraph g = knn_graph(to_cloud(pts), k);
              return py::make_tuple(to_array(Eigen::MatrixXd(g.adjacency)), g.sigma_squared);
          },
          py::arg("points"), py::arg("k"), "Dense symmetric kNN weight matrix and the kernel width sigma^2.");
    m.def("rescaled_laplacian",
          [](const FloatArray& pts, std::size_t k) {
              GraphOptions o;
              o.k = k;
              const RescaledLaplacian L = build_rescaled_laplacian(to_cloud(pts), o);
              return py::make_tuple(to_array(Eigen::MatrixXd(L.matrix)), L.lambda_max);
          },
          py::arg("points"), py::arg("k"));

    m.def("read_off", [](const std::filesystem::path& path) {
        const TriangleMesh mesh = read_off(path);
        PointCloud v{mesh.vertices, std::nullopt};
        py::array_t<std::uint32_t> faces({py::ssize_t(mesh.faces.size()), py::ssize_t(3)});
        std::uint32_t* f = faces.mutable_data();
        for (const auto& t : mesh.faces)
            for (auto i : t) *f++ = i;
        return py::make_tuple(to_array(v), faces);
    });
    m.def("preprocess_off",
          [](const std::filesystem::path& path, std::size_t points, std::size_t samples, std::uint64_t seed) {
              return to_array(preprocess(read_off(path), PreprocessOptions{points, samples}, seed));
          },
          py::arg("path"), py::arg("points") = 1024, py::arg("samples") = 2048, py::arg("seed") = 0);

    m.def("synth",
          [](std::vector<std::string> classes, std::size_t per_class, std::size_t points, double noise,
             std::uint64_t seed) {
              SynthOptions o;
              if (!classes.empty()) o.classes = std::move(classes);
              o.per_class = per_class;
              o.points = points;
              o.noise_sigma = noise;
              o.seed = seed;
              return dataset_arrays(synth_generate(o));
          },
          py::arg("classes") = std::vector<std::string>{}, py::arg("per_class") = 100, py::arg("points") = 1024,
          py::arg("noise") = 0.0, py::arg("seed") = 0, "Returns (points[N, n, 3], labels[N], class_names).");
    m.def("read_packed", [](const std::filesystem::path& path) { return dataset_arrays(read_packed(path)); });
    m.def("write_packed",
          [](const std::filesystem::path& path, const FloatArray& points, const std::vector<int>& labels,
             const std::vector<std::string>& class_names) {
              write_packed(make_dataset(points, labels, class_names), path);
          },
          py::arg("path"), py::arg("points"), py::arg("labels"), py::arg("class_names"));

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(p, c); })
        .def_readonly("epoch", &Checkpoint::epoch)
        .def_property_readonly("config", [](const Checkpoint& c) { return c.config.to_text(); })
        .def_property_readonly("class_count", [](const Checkpoint& c) { return c.config.class_count; })
        .def("predict",
             [](const Checkpoint& c, const FloatArray& pts) {
                 const PointCloud cloud = to_cloud(pts);
                 const auto graph = build_graph_context<float>(cloud, c.config);
                 const Vector<float> p = forward(graph, cloud, c.params, c.config, Mode::Eval).probs;
                 return std::vector<float>(p.data(), p.data() + p.size());
             },
             py::arg("points"), "Class probabilities for one cloud.")
        .def("evaluate",
             [](const Checkpoint& c, const std::filesystem::path& data, std::size_t threads) {
                 const EvalResult r = evaluate(c.params, c.config, read_packed(data), threads);
                 py::dict d;
                 d["instance_accuracy"] = r.instance_accuracy;
                 d["class_accuracy"] = r.class_accuracy;
                 d["loss"] = r.loss;
                 d["confusion"] = r.confusion;
                 return d;
             },
             py::arg("data"), py::arg("threads") = 1)
        .def("active_points", [](const Checkpoint& c, const FloatArray& pts) {
            py::list rows;
            for (const auto& r : extract_active_points(c, to_cloud(pts)))
                rows.append(py::make_tuple(r.point.layer, r.point.filter, r.point.vertex, r.position.x,
                                           r.position.y, r.position.z));
            return rows;
        });

    m.def("train",
          [](const std::filesystem::path& train_path, const std::filesystem::path& test_path, std::size_t epochs,
             double lr, std::size_t batch, std::uint64_t seed, std::size_t threads, const py::dict& model,
             const Checkpoint* resume, const std::function<void(py::dict)>& on_epoch) {
              const Dataset tr = read_packed(train_path), te = read_packed(test_path);
              ModelConfig c = resume ? resume->config : config_from(model);
              if (!resume) c.class_count = tr.class_count();
              TrainOptions o;
              o.epochs = epochs;
              o.lr = lr;
              o.batch_size = batch;
              o.seed = seed;
              o.threads = threads;
              if (on_epoch)
                  o.on_epoch = [&](const EpochStats& s) {
                      py::gil_scoped_acquire gil;
                      TrainReport one;
                      one.epochs.push_back(s);
                      on_epoch(report_rows(one)[0].cast<py::dict>());
                  };
              TrainResult r;
              {
                  py::gil_scoped_release nogil;
                  r = train(c, tr, te, o, resume);
              }
              return py::make_tuple(r.checkpoint, report_rows(r.report));
          },
          py::arg("train"), py::arg("test"), py::arg("epochs") = 100, py::arg("lr") = 1e-3, py::arg("batch") = 28,
          py::arg("seed") = 0, py::arg("threads") = 1, py::arg("model") = py::dict(), py::arg("resume") = nullptr,
          py::arg("on_epoch") = nullptr, "Returns (checkpoint, per-epoch report rows).");

    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    m.attr("__version__") = "0.1.0";
}
