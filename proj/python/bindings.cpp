#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "coopsense/control.hpp"
#include "coopsense/detection.hpp"
#include "coopsense/geometry.hpp"
#include "coopsense/harness.hpp"
#include "coopsense/metrics.hpp"

namespace py = pybind11;
using namespace coopsense;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Accepts (N, 3) or (N, 4); a missing intensity column reads as 1.
geometry::PointCloud to_cloud(const Array& a, const std::string& frame_id = "py") {
  if (a.ndim() != 2 || (a.shape(1) != 3 && a.shape(1) != 4))
    throw py::value_error("points must have shape (N, 3) or (N, 4)");
  geometry::PointCloud c{frame_id, {}};
  const auto r = a.unchecked<2>();
  c.points.reserve(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    c.points.push_back({r(i, 0), r(i, 1), r(i, 2), a.shape(1) == 4 ? r(i, 3) : 1.0});
  return c;
}

Array to_array(const geometry::PointCloud& c) {
  Array out({static_cast<py::ssize_t>(c.size()), py::ssize_t{4}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.points[i];
    w(i, 0) = p.x;
    w(i, 1) = p.y;
    w(i, 2) = p.z;
    w(i, 3) = p.intensity;
  }
  return out;
}

harness::ScenarioConfig config_from(const py::dict& options) {
  harness::ScenarioConfig cfg;
  for (const auto& [k, v] : options)
    harness::set_option(cfg, py::str(k), py::str(v));
  harness::validate(cfg);
  return cfg;
}

py::dict row_dict(const metrics::ReportRow& row) {
  std::ostringstream ss;
  metrics::write_report_row(ss, row);
  std::string line = ss.str();
  line.pop_back();
  py::dict d;
  std::istringstream fields(line);
  std::string f;
  for (const auto& col : metrics::report_columns()) {
    std::getline(fields, f, '\t');
    d[py::str(col)] = f;
  }
  return d;
}

metrics::View view_of(const std::string& v) {
  if (v == "bev") return metrics::View::kBev;
  if (v == "3d") return metrics::View::k3D;
  throw py::value_error("view must be 'bev' or '3d'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cooperative LiDAR perception and max-pressure signal control";

  py::class_<geometry::Pose>(m, "Pose")
      .def(py::init(&geometry::make_pose), py::arg("x"), py::arg("y"), py::arg("z"),
           py::arg("yaw"), py::arg("pitch") = 0.0, py::arg("roll") = 0.0)
      .def_readwrite("x", &geometry::Pose::x)
      .def_readwrite("y", &geometry::Pose::y)
      .def_readwrite("z", &geometry::Pose::z)
      .def_readwrite("yaw", &geometry::Pose::yaw)
      .def_readwrite("pitch", &geometry::Pose::pitch)
      .def_readwrite("roll", &geometry::Pose::roll);

  m.def(
      "merge_clouds",
      [](const geometry::Pose& ego, double ego_height, const Array& ego_points,
         const std::vector<std::tuple<geometry::Pose, double, Array>>& others) {
        geometry::SensorFrame e{"ego", ego, ego_height, to_cloud(ego_points, "ego")};
        std::vector<geometry::SensorFrame> rest;
        for (const auto& [pose, h, pts] : others) rest.push_back({"other", pose, h, to_cloud(pts)});
        return to_array(geometry::merge_clouds(e, rest));
      },
      py::arg("ego_pose"), py::arg("ego_height"), py::arg("ego_points"), py::arg("others"),
      "Points of every other sensor moved into the ego frame, appended to the ego points.");

  m.def(
      "remove_ground",
      [](const Array& pts, std::uint64_t seed) {
        return to_array(detection::ransac_ground_removal(to_cloud(pts), {}, seed));
      },
      py::arg("points"), py::arg("seed") = 1);

  m.def(
      "dbscan",
      [](const Array& pts, double eps, int min_pts) {
        return detection::dbscan(to_cloud(pts), eps, min_pts);
      },
      py::arg("points"), py::arg("eps") = 1.25, py::arg("min_pts") = 3);

  m.def(
      "detect",
      [](const Array& pts, std::uint64_t seed) {
        py::list out;
        for (const auto& d : detection::detect(to_cloud(pts), {}, seed)) {
          py::dict b;
          b["center"] = py::make_tuple(d.box.cx, d.box.cy, d.box.cz);
          b["extent"] = py::make_tuple(d.box.ex, d.box.ey, d.box.ez);
          b["points"] = d.score;
          out.append(b);
        }
        return out;
      },
      py::arg("points"), py::arg("seed") = 1,
      "Ground removal, clustering and size filtering with default settings.");

  m.def(
      "iou",
      [](std::array<double, 6> a, std::array<double, 6> b, const std::string& view) {
        auto box = [](const std::array<double, 6>& v) {
          return detection::Box3{v[0], v[1], v[2], v[3], v[4], v[5], 0.0};
        };
        return metrics::iou(box(a), box(b), view_of(view));
      },
      py::arg("a"), py::arg("b"), py::arg("view") = "bev",
      "Boxes as (cx, cy, cz, ex, ey, ez), axis aligned.");

  m.def(
      "ap40",
      [](const std::vector<std::pair<std::vector<std::pair<std::array<double, 6>, double>>,
                                     std::vector<std::array<double, 6>>>>& frames,
         double iou_threshold, const std::string& view) -> std::optional<double> {
        auto box = [](const std::array<double, 6>& v) {
          return detection::Box3{v[0], v[1], v[2], v[3], v[4], v[5], 0.0};
        };
        std::vector<metrics::FrameEval> evals;
        for (const auto& [preds, gts] : frames) {
          metrics::FrameEval f;
          for (const auto& [b, s] : preds) f.preds.push_back({box(b), s});
          for (const auto& g : gts) f.gts.push_back(box(g));
          evals.push_back(std::move(f));
        }
        return metrics::ap40(evals, iou_threshold, view_of(view));
      },
      py::arg("frames"), py::arg("iou_threshold") = 0.1, py::arg("view") = "bev",
      "frames: list of (predictions [(box, score)], ground truth [box]). None without ground truth.");

  m.def("argmax_phase",
        [](const std::vector<int>& p, int active) { return control::argmax_phase(p, active); },
        py::arg("pressures"), py::arg("active_phase"));

  m.def(
      "simulate",
      [](const py::dict& options) {
        const auto cfg = config_from(options);
        harness::RunResult r;
        {
          py::gil_scoped_release release;
          r = harness::simulate(cfg);
        }
        py::dict out = row_dict(r.row);
        std::vector<double> e;
        for (const auto& s : r.ecvpr) e.push_back(s.value);
        out["ecvpr_samples"] = e;
        return out;
      },
      py::arg("options") = py::dict(),
      "Closed-loop run from config keys; returns the report row and the E-CVPR samples.");

  m.def(
      "run",
      [](const py::dict& options, const std::filesystem::path& dir) {
        const auto cfg = config_from(options);
        harness::RunResult r;
        {
          py::gil_scoped_release release;
          r = harness::run(cfg, dir);
        }
        return row_dict(r.row);
      },
      py::arg("options"), py::arg("out_dir"), "simulate() plus the output files in out_dir.");

  m.def("default_config", [] {
    py::dict d;
    for (const auto& [k, v] : harness::config_entries(harness::ScenarioConfig{})) d[py::str(k)] = v;
    return d;
  });

  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);
}
