#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kpseg/checkpoint.hpp"
#include "kpseg/cloud_io.hpp"
#include "kpseg/gradcheck_suite.hpp"
#include "kpseg/grid.hpp"
#include "kpseg/metrics.hpp"
#include "kpseg/rosette.hpp"
#include "kpseg/run_config.hpp"
#include "kpseg/scene.hpp"
#include "kpseg/trainer.hpp"

namespace py = pybind11;
using namespace kpseg;

namespace {

Points points_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(1) != 3)
    throw ArgumentError("expected an (N, 3) float array of coordinates");
  Points pts(a.shape(0));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts[i] = {r(i, 0), r(i, 1), r(i, 2)};
  return pts;
}

py::array_t<double> array_from_points(const Points& pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t(3)});
  auto w = out.mutable_unchecked<2>();
  for (size_t i = 0; i < pts.size(); ++i) {
    w(i, 0) = pts[i].x;
    w(i, 1) = pts[i].y;
    w(i, 2) = pts[i].z;
  }
  return out;
}

LabeledCloud cloud_from_python(const py::array_t<double, py::array::c_style | py::array::forcecast>& coords,
                               const py::object& intensity, const py::object& labels) {
  LabeledCloud c;
  c.coords = points_from_array(coords);
  if (!intensity.is_none())
    c.intensity = intensity.cast<std::vector<double>>();
  if (!labels.is_none())
    c.labels = labels.cast<std::vector<uint8_t>>();
  c.validate();
  return c;
}

py::dict cloud_to_python(const LabeledCloud& c) {
  py::dict d;
  d["coords"] = array_from_points(c.coords);
  if (c.has_intensity()) d["intensity"] = py::array_t<double>(c.intensity.size(), c.intensity.data());
  if (c.has_labels())
    d["labels"] = py::array_t<uint8_t>(c.labels.size(), c.labels.data());
  return d;
}

LabeledCloud cloud_from_dict(const py::dict& d) {
  return cloud_from_python(d["coords"].cast<py::array_t<double, py::array::c_style | py::array::forcecast>>(),
                           d.contains("intensity") ? d["intensity"] : py::none(),
                           d.contains("labels") ? d["labels"] : py::none());
}

}  // namespace

PYBIND11_MODULE(_kpseg, m) {
  m.doc() = "Kernel-point-convolution point cloud segmentation core";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.attr("NUM_CLASSES") = kNumClasses;
  m.attr("IGNORE_LABEL") = kIgnoreLabel;
  m.attr("CLASS_NAMES") = class_names();

  // ---- clouds and I/O
  m.def("load_cloud", [](const std::string& path) { return cloud_to_python(load_cloud(path)); },
        py::arg("path"), "Load a cloud (.xyz / .ply / .kpc) as a dict of arrays");
  m.def("save_cloud",
        [](const py::dict& cloud, const std::string& path) {
          save_cloud(cloud_from_dict(cloud), path);
        },
        py::arg("cloud"), py::arg("path"));

  m.def("grid_subsample",
        [](const py::dict& cloud, double cell, bool majority_labels) {
          return cloud_to_python(grid_subsample(cloud_from_dict(cloud), cell,
                                                majority_labels ? LabelMode::majority
                                                                : LabelMode::none));
        },
        py::arg("cloud"), py::arg("cell"), py::arg("majority_labels") = true);

  m.def("radius_search",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& queries,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& supports,
           double radius, uint32_t max_neighbors) {
          NeighborTable t = radius_search(points_from_array(queries), points_from_array(supports),
                                          radius, max_neighbors);
          py::array_t<uint32_t> idx({static_cast<py::ssize_t>(t.num_queries()),
                                     static_cast<py::ssize_t>(t.width)});
          std::copy(t.indices.begin(), t.indices.end(), idx.mutable_data());
          py::dict d;
          d["indices"] = idx;
          d["shadow_index"] = t.shadow_index();
          d["radius"] = t.radius;
          return d;
        },
        py::arg("queries"), py::arg("supports"), py::arg("radius"), py::arg("max_neighbors") = 40,
        "Exact radius neighbors; rows padded with the shadow index");

  m.def("extract_sphere",
        [](const py::dict& cloud, const std::array<double, 3>& center, double radius) {
          SphereExtract ex = extract_sphere(cloud_from_dict(cloud),
                                            {center[0], center[1], center[2]}, radius);
          py::dict d = cloud_to_python(ex.cloud);
          d["index_map"] = py::array_t<uint32_t>(ex.index_map.size(), ex.index_map.data());
          return d;
        },
        py::arg("cloud"), py::arg("center"), py::arg("radius"));

  m.def("augment",
        [](const py::dict& cloud, double scale_min, double scale_max, bool rotate_z, bool shuffle,
           uint64_t seed) {
          AugConfig cfg;
          cfg.scale_min = scale_min;
          cfg.scale_max = scale_max;
          cfg.rotate_z = rotate_z;
          cfg.shuffle = shuffle;
          Rng rng(seed);
          return cloud_to_python(augment(cloud_from_dict(cloud), cfg, rng));
        },
        py::arg("cloud"), py::arg("scale_min") = 0.9, py::arg("scale_max") = 1.1,
        py::arg("rotate_z") = true, py::arg("shuffle") = true, py::arg("seed") = 0);

  // ---- kernel math
  m.def("generate_kernel_points",
        [](int k, double radius, uint64_t seed, double influence_ratio) {
          KernelDisposition kd = generate_kernel_points(k, radius, seed, influence_ratio);
          py::dict d;
          d["points"] = array_from_points(kd.points);
          d["radius"] = kd.radius;
          d["influence"] = kd.influence;
          return d;
        },
        py::arg("k") = 15, py::arg("radius") = 1.0, py::arg("seed") = 42,
        py::arg("influence_ratio") = 1.5);

  m.def("kernel_influence",
        [](const Mat& rel_pos, const py::array_t<double, py::array::c_style | py::array::forcecast>& kernel_points,
           double radius, double influence) {
          KernelDisposition kd;
          kd.points = points_from_array(kernel_points);
          kd.radius = radius;
          kd.influence = influence;
          return kernel_influence(rel_pos, kd);
        },
        py::arg("rel_pos"), py::arg("kernel_points"), py::arg("radius"), py::arg("influence"));

  m.def("kpconv_forward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& queries,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& supports,
           double radius, uint32_t max_neighbors, const Mat& features, const Mat& weights, int k,
           uint64_t kernel_seed, double influence_ratio) {
          Points q = points_from_array(queries), s = points_from_array(supports);
          KernelDisposition kd = generate_kernel_points(k, radius, kernel_seed, influence_ratio);
          NeighborTable t = radius_search(q, s, radius, max_neighbors);
          ConvInput in{q, s, t, features};
          return kpconv_forward(in, ConvWeights(weights, k), kd);
        },
        py::arg("queries"), py::arg("supports"), py::arg("radius"), py::arg("max_neighbors"),
        py::arg("features"), py::arg("weights"), py::arg("k") = 15, py::arg("kernel_seed") = 42,
        py::arg("influence_ratio") = 1.5,
        "One self-contained kernel point convolution (neighbors built internally)");

  // ---- metrics
  m.def("compute_metrics",
        [](const std::vector<uint8_t>& predicted, const std::vector<uint8_t>& truth) {
          ConfusionMatrix cm;
          accumulate(cm, predicted, truth);
          MetricsReport r = compute_metrics(cm);
          py::dict d;
          d["oa"] = r.oa;
          d["miou"] = r.miou;
          py::dict iou;
          for (int c = 0; c < kNumClasses; ++c)
            iou[class_names()[c].c_str()] = r.iou[c] ? py::cast(*r.iou[c]) : py::none();
          d["iou"] = iou;
          return d;
        },
        py::arg("predicted"), py::arg("truth"));

  // ---- synthetic data
  m.def("make_interchange_spec",
        [](double extent, double density, uint64_t layout_seed) {
          return scene_spec_to_json(make_interchange_spec(extent, density, layout_seed));
        },
        py::arg("extent") = 40.0, py::arg("density") = 750.0, py::arg("layout_seed") = 0);

  m.def("generate_scene",
        [](const std::string& spec_json, uint64_t seed) {
          Scene scene = generate_scene(scene_spec_from_json(spec_json), seed);
          return cloud_to_python(scene.cloud);
        },
        py::arg("spec_json"), py::arg("seed") = 0);

  m.def("fov_coverage",
        [](double t, int grid_res, double f_petal, double f_spin) {
          RosetteConfig cfg;
          if (f_petal > 0) cfg.f_petal = f_petal;
          if (f_spin > 0) cfg.f_spin = f_spin;
          return fov_coverage(cfg, t, grid_res);
        },
        py::arg("t"), py::arg("grid_res") = 64, py::arg("f_petal") = -1.0,
        py::arg("f_spin") = -1.0);

  m.def("rosette_directions",
        [](double t0, double t1) {
          RosetteConfig cfg;
          auto dirs = rosette_directions(cfg, t0, t1);
          Points pts;
          pts.reserve(dirs.size());
          for (const auto& d : dirs) pts.push_back(d.dir);
          return array_from_points(pts);
        },
        py::arg("t0"), py::arg("t1"));

  m.def("gradient_checks", [](uint64_t seed) {
    py::dict d;
    for (const LayerCheck& c : run_gradient_checks(seed)) d[c.layer.c_str()] = c.max_rel_error;
    return d;
  }, py::arg("seed") = 7);

  // ---- network training and inference
  py::class_<Network>(m, "Network")
      .def(py::init([](const std::string& preset, int stack_depth, uint64_t seed) {
             RunConfig cfg = preset_config(preset);
             cfg.net.stack_depth = stack_depth;
             return std::make_unique<Network>(cfg.net, seed);
           }),
           py::arg("preset") = "tiny", py::arg("stack_depth") = 3, py::arg("seed") = 0)
      .def_property_readonly("step", [](const Network& n) { return n.step_counter; })
      .def("config_json", [](const Network& n) { return network_config_to_json(n.config()); })
      .def("train",
           [](Network& net, const std::vector<py::dict>& clouds, int steps, double lr,
              double momentum, const std::string& class_weighting) {
             RunConfig cfg;
             cfg.net = net.config();
             cfg.optim.lr = lr;
             cfg.optim.momentum = momentum;
             cfg.optim.class_weighting = class_weighting;
             std::vector<LabeledCloud> cs;
             for (const py::dict& d : clouds) cs.push_back(cloud_from_dict(d));
             Dataset data = make_dataset(std::move(cs), cfg.net);
             Trainer trainer(net, cfg);
             auto reports = trainer.train(data, steps, nullptr);
             py::list losses;
             for (const StepReport& r : reports) losses.append(r.loss);
             return losses;
           },
           py::arg("clouds"), py::arg("steps"), py::arg("lr") = 0.01, py::arg("momentum") = 0.98,
           py::arg("class_weighting") = "none")
      .def("predict",
           [](Network& net, const py::dict& cloud, double tile_stride) {
             PredictResult r = predict_cloud(net, cloud_from_dict(cloud), tile_stride);
             py::dict d;
             d["labels"] = py::array_t<uint8_t>(r.labels.size(), r.labels.data());
             d["probs"] = r.probs;
             return d;
           },
           py::arg("cloud"), py::arg("tile_stride") = 2.5)
      .def("save", [](Network& net, const std::string& path) { save_checkpoint(net, path); },
           py::arg("path"))
      .def_static("load",
                  [](const std::string& path) { return load_checkpoint(path); },
                  py::arg("path"));

  m.def("preset_config_json",
        [](const std::string& name) { return run_config_to_json(preset_config(name)); },
        py::arg("name") = "paper");
}
