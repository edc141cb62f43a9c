// Python bindings. Maps cross the boundary as float64 numpy arrays of shape
// (height, width) with NaN marking invalid pixels; images as uint8
// (height, width, 3); feature maps as float64 (channels, height, width).

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "confdepth/confidence_head.hpp"
#include "confdepth/ensemble_confidence.hpp"
#include "confdepth/errors.hpp"
#include "confdepth/losses.hpp"
#include "confdepth/map_io.hpp"
#include "confdepth/metrics.hpp"
#include "confdepth/refine_experiment.hpp"
#include "confdepth/stereo_geometry.hpp"
#include "confdepth/synthetic_data.hpp"

namespace py = pybind11;
using namespace confdepth;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Image = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

FloatMap to_map(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
    const int h = static_cast<int>(a.shape(0));
    const int w = static_cast<int>(a.shape(1));
    FloatMap m(w, h);
    const double* src = a.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (std::isnan(src[i])) {
            m[i] = 0.0;
            m.set_valid(i, false);
        } else {
            m[i] = src[i];
        }
    }
    return m;
}

Array from_map(const FloatMap& m) {
    Array out({static_cast<py::ssize_t>(m.height()), static_cast<py::ssize_t>(m.width())});
    double* dst = out.mutable_data();
    for (std::size_t i = 0; i < m.size(); ++i) {
        dst[i] = m.valid(i) ? m[i] : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

RgbImage to_image(const Image& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an image of shape (height, width, 3)");
    RgbImage img;
    img.height = static_cast<int>(a.shape(0));
    img.width = static_cast<int>(a.shape(1));
    img.data.assign(a.data(), a.data() + a.size());
    return img;
}

Image from_image(const RgbImage& img) {
    Image out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width), py::ssize_t{3}});
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

FeatureMap to_features(const Array& a) {
    if (a.ndim() != 3) throw ShapeError("expected features of shape (channels, height, width)");
    FeatureMap f(static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), f.data.begin());
    return f;
}

Array from_features(const FeatureMap& f) {
    Array out({static_cast<py::ssize_t>(f.channels), static_cast<py::ssize_t>(f.height),
               static_cast<py::ssize_t>(f.width)});
    std::copy(f.data.begin(), f.data.end(), out.mutable_data());
    return out;
}

py::tuple term(const LossTerm& t) { return py::make_tuple(t.value, from_map(t.grad)); }

LossConfig loss_config(double lambda_silog, const std::vector<int>& grad_scales) {
    LossConfig cfg;
    cfg.lambda_silog = lambda_silog;
    cfg.grad_scales = grad_scales;
    cfg.validate();
    return cfg;
}

py::dict sample_dict(const LoadedSample& s) {
    py::dict d;
    d["id"] = s.id;
    d["image"] = from_image(s.image);
    d["depth_gt"] = from_map(s.depth_gt);
    d["supervision"] = from_map(s.supervision);
    py::list ens;
    for (const auto& m : s.ensemble) ens.append(from_map(m));
    d["ensemble"] = ens;
    d["corruption"] = s.corruption ? py::object(from_map(*s.corruption)) : py::none();
    d["rig"] = s.rig;
    d["keypoints"] = s.keypoints;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Confidence-aware depth supervision: core operations";

    static py::exception<Error> base(m, "ConfdepthError");
    static py::exception<Error> config_error(m, "ConfigError", base.ptr());
    static py::exception<Error> data_error(m, "DataError", base.ptr());
    static py::exception<Error> numeric_error(m, "NumericError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            switch (e.kind()) {
                case ErrorKind::Config: py::set_error(config_error, e.what()); break;
                case ErrorKind::Data: py::set_error(data_error, e.what()); break;
                case ErrorKind::Numeric: py::set_error(numeric_error, e.what()); break;
            }
        }
    });

    py::class_<CameraRig>(m, "CameraRig")
        .def(py::init([](double f, double b, double cx, double cy) {
                 CameraRig r{f, b, cx, cy};
                 r.validate();
                 return r;
             }),
             py::arg("focal_px"), py::arg("baseline_mm"), py::arg("cx_px") = 0.0, py::arg("cy_px") = 0.0)
        .def_readwrite("focal_px", &CameraRig::focal_px)
        .def_readwrite("baseline_mm", &CameraRig::baseline_mm)
        .def_readwrite("cx_px", &CameraRig::cx_px)
        .def_readwrite("cy_px", &CameraRig::cy_px)
        .def("__repr__", [](const CameraRig& r) {
            return "CameraRig(focal_px=" + std::to_string(r.focal_px) + ", baseline_mm=" + std::to_string(r.baseline_mm) +
                   ")";
        });

    py::class_<StereoKeypoint>(m, "StereoKeypoint")
        .def(py::init([](int id, double ul, double vl, double ur, double vr) {
                 return StereoKeypoint{id, ul, vl, ur, vr, std::abs(vl - vr) <= 1.0};
             }),
             py::arg("id"), py::arg("u_left"), py::arg("v_left"), py::arg("u_right"), py::arg("v_right"))
        .def_readonly("id", &StereoKeypoint::id)
        .def_readonly("u_left", &StereoKeypoint::u_left)
        .def_readonly("v_left", &StereoKeypoint::v_left)
        .def_readonly("u_right", &StereoKeypoint::u_right)
        .def_readonly("v_right", &StereoKeypoint::v_right)
        .def_readonly("rectified", &StereoKeypoint::rectified);

    // map_io
    m.def("read_pfm", [](const std::filesystem::path& p) { return from_map(read_pfm(p)); }, py::arg("path"));
    m.def("write_pfm", [](const Array& a, const std::filesystem::path& p) { write_pfm(to_map(a), p); },
          py::arg("map"), py::arg("path"));
    m.def("read_ppm", [](const std::filesystem::path& p) { return from_image(read_ppm(p)); }, py::arg("path"));
    m.def("write_ppm", [](const Image& a, const std::filesystem::path& p) { write_ppm(to_image(a), p); },
          py::arg("image"), py::arg("path"));
    m.def("read_keypoints", &read_keypoints, py::arg("path"), py::arg("rectify_tolerance_px") = 1.0);

    // stereo geometry
    m.def("disparity_to_depth", [](const Array& d, const CameraRig& rig) { return from_map(disparity_to_depth(to_map(d), rig)); },
          py::arg("disparity"), py::arg("rig"));
    m.def("depth_to_disparity", [](const Array& d, const CameraRig& rig) { return from_map(depth_to_disparity(to_map(d), rig)); },
          py::arg("depth"), py::arg("rig"));
    m.def("triangulate_keypoint",
          [](const StereoKeypoint& kp, const CameraRig& rig) {
              const Point3D p = triangulate_keypoint(kp, rig);
              return py::make_tuple(p.x_mm, p.y_mm, p.z_mm);
          },
          py::arg("keypoint"), py::arg("rig"));
    m.def("project_keypoint",
          [](double x, double y, double z, const CameraRig& rig) { return project_keypoint(Point3D{x, y, z}, rig); },
          py::arg("x"), py::arg("y"), py::arg("z"), py::arg("rig"));

    // ensemble confidence
    m.def("ensemble_mean_variance",
          [](const std::vector<Array>& members) {
              EnsembleDisparities ens;
              for (const auto& a : members) ens.members.push_back(to_map(a));
              const EnsembleStats s = ensemble_mean_variance(ens);
              return py::make_tuple(from_map(s.mean), from_map(s.variance));
          },
          py::arg("members"));
    m.def("effective_sigma",
          [](double sigma_base, int width, double ref_width) {
              return effective_sigma(SigmaPolicy{sigma_base, ref_width}, width);
          },
          py::arg("sigma_base"), py::arg("width"), py::arg("ref_width") = 518.0);
    m.def("variance_to_confidence",
          [](const Array& var, double sigma_eff) { return from_map(variance_to_confidence(to_map(var), sigma_eff)); },
          py::arg("variance"), py::arg("sigma_eff"));

    // losses
    m.def("confidence_weight", [](const Array& l, const Array& c) { return confidence_weight(to_map(l), to_map(c)); },
          py::arg("per_pixel_loss"), py::arg("conf"));
    m.def("silog_conf",
          [](const Array& p, const Array& g, const Array& c, double lam) {
              return term(silog_conf(to_map(p), to_map(g), to_map(c), loss_config(lam, {1, 2, 4, 8})));
          },
          py::arg("pred"), py::arg("gt"), py::arg("conf"), py::arg("lambda_silog") = 0.5);
    m.def("grad_match_conf",
          [](const Array& p, const Array& g, const Array& c, const std::vector<int>& scales) {
              return term(grad_match_conf(to_map(p), to_map(g), to_map(c), loss_config(0.5, scales)));
          },
          py::arg("pred"), py::arg("gt"), py::arg("conf"), py::arg("grad_scales") = std::vector<int>{1, 2, 4, 8});
    m.def("edge_smooth_conf",
          [](const Array& p, const Image& img, const Array& c) {
              return term(edge_smooth_conf(to_map(p), to_image(img), to_map(c), LossConfig{}));
          },
          py::arg("pred"), py::arg("image"), py::arg("conf"));
    m.def("total_loss",
          [](const Array& p, const Array& g, const Array& c, const Image& img, double lam,
             const std::vector<int>& scales) {
              const LossBreakdown b = total_loss(to_map(p), to_map(g), to_map(c), to_image(img), loss_config(lam, scales));
              py::dict d;
              d["silog_conf"] = b.silog_conf;
              d["grad_conf"] = b.grad_conf;
              d["edge_conf"] = b.edge_conf;
              d["total"] = b.total;
              d["grad"] = from_map(b.grad_wrt_pred);
              return d;
          },
          py::arg("pred"), py::arg("gt"), py::arg("conf"), py::arg("image"), py::arg("lambda_silog") = 0.5,
          py::arg("grad_scales") = std::vector<int>{1, 2, 4, 8});
    m.def("bce", [](const Array& p, const Array& t, double eps) { return term(bce(to_map(p), to_map(t), eps)); },
          py::arg("pred"), py::arg("target"), py::arg("epsilon") = 1e-7);

    // confidence head
    py::class_<HeadParams>(m, "HeadParams")
        .def(py::init<int>(), py::arg("c_in"))
        .def_static("initialize", &HeadParams::initialize, py::arg("c_in"), py::arg("seed"))
        .def_readonly("c_in", &HeadParams::c_in)
        .def_readwrite("w1", &HeadParams::w1)
        .def_readwrite("b1", &HeadParams::b1)
        .def_readwrite("w2", &HeadParams::w2)
        .def_readwrite("b2", &HeadParams::b2)
        .def("__eq__", [](const HeadParams& a, const HeadParams& b) { return a == b; });
    m.def("head_forward", [](const Array& f, const HeadParams& p) { return from_map(head_forward(to_features(f), p)); },
          py::arg("features"), py::arg("params"));
    m.def("train_head",
          [](const std::vector<std::pair<Array, Array>>& samples, double lr, int epochs, std::uint64_t seed) {
              std::vector<HeadSample> train;
              for (const auto& [f, t] : samples) train.push_back(HeadSample{to_features(f), to_map(t)});
              HeadTrainConfig cfg;
              cfg.lr = lr;
              cfg.epochs = epochs;
              cfg.seed = seed;
              HeadTrainResult r;
              {
                  py::gil_scoped_release release;
                  r = train_head(train, cfg);
              }
              return py::make_tuple(r.params, r.loss_curve);
          },
          py::arg("samples"), py::arg("lr") = 0.5, py::arg("epochs") = 500, py::arg("seed") = 0);
    m.def("engineered_features",
          [](const Image& img, const Array& var, double sigma_eff) {
              return from_features(engineered_features(to_image(img), to_map(var), sigma_eff));
          },
          py::arg("image"), py::arg("variance"), py::arg("sigma_eff"));
    m.def("save_head", &save_head, py::arg("params"), py::arg("path"));
    m.def("load_head", &load_head, py::arg("path"));

    // metrics
    m.def("median_scale", [](const Array& p, const Array& g) { return from_map(median_scale(to_map(p), to_map(g))); },
          py::arg("pred"), py::arg("gt"));
    m.def("compute_are", [](const Array& p, const Array& g) { return compute_are(to_map(p), to_map(g)); },
          py::arg("pred"), py::arg("gt"));
    m.def("compute_delta1", [](const Array& p, const Array& g) { return compute_delta1(to_map(p), to_map(g)); },
          py::arg("pred"), py::arg("gt"));
    m.def("evaluate_depth",
          [](const Array& p, const Array& g, std::optional<Array> mask) {
              const std::optional<FloatMap> mm = mask ? std::optional<FloatMap>(to_map(*mask)) : std::nullopt;
              const DepthMetrics r = evaluate_depth(to_map(p), to_map(g), mm ? &*mm : nullptr);
              py::dict d;
              d["are"] = r.are;
              d["delta1"] = r.delta1;
              d["n_valid"] = r.n_valid;
              return d;
          },
          py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none());
    m.def("keypoint_metrics",
          [](const Array& depth, const std::vector<StereoKeypoint>& kps, const CameraRig& rig) {
              const KeypointMetrics k = keypoint_metrics(to_map(depth), kps, rig);
              py::dict d;
              d["mae_mm"] = k.mae_mm;
              d["acc_2mm"] = k.acc_2mm;
              d["n"] = k.n;
              d["n_excluded"] = k.n_excluded;
              return d;
          },
          py::arg("depth"), py::arg("keypoints"), py::arg("rig"));
    m.def("spearman_rho", [](const Array& a, const Array& b) { return spearman_rho(to_map(a), to_map(b)); },
          py::arg("a"), py::arg("b"));

    // synthetic data and refinement
    m.def("make_corrupted_benchmark",
          [](int count, int width, int height, int k, double base_std_px, double artifact_std_px, double coverage,
             double bias, std::uint64_t seed) {
              BenchmarkConfig cfg;
              cfg.count = count;
              cfg.width = width;
              cfg.height = height;
              cfg.k = k;
              cfg.noise = {base_std_px, artifact_std_px};
              cfg.coverage = coverage;
              cfg.bias = bias;
              cfg.seed = seed;
              py::list out;
              for (const auto& s : make_corrupted_benchmark(cfg)) out.append(sample_dict(s));
              return out;
          },
          py::arg("count") = 4, py::arg("width") = 64, py::arg("height") = 48, py::arg("k") = 5,
          py::arg("base_std_px") = 0.04, py::arg("artifact_std_px") = 0.16, py::arg("coverage") = 0.3,
          py::arg("bias") = 1.5, py::arg("seed") = 2024);
    m.def("perturbed_init",
          [](const Array& sup, double amplitude, std::uint64_t seed) {
              return from_map(perturbed_init(to_map(sup), amplitude, seed));
          },
          py::arg("supervision"), py::arg("amplitude"), py::arg("seed"));
    m.def("refine_depth",
          [](const Array& init, const Array& sup, const Array& conf, const Image& img, double lr, int iters,
             double momentum, bool use_cal) {
              RefineConfig cfg;
              cfg.lr = lr;
              cfg.iters = iters;
              cfg.momentum = momentum;
              cfg.use_cal = use_cal;
              std::vector<double> curve;
              FloatMap out;
              const FloatMap a = to_map(init), b = to_map(sup), c = to_map(conf);
              const RgbImage im = to_image(img);
              {
                  py::gil_scoped_release release;
                  out = refine_depth(a, b, c, im, cfg, &curve);
              }
              return py::make_tuple(from_map(out), curve);
          },
          py::arg("init"), py::arg("supervision"), py::arg("conf"), py::arg("image"), py::arg("lr") = RefineConfig{}.lr,
          py::arg("iters") = RefineConfig{}.iters, py::arg("momentum") = RefineConfig{}.momentum,
          py::arg("use_cal") = true);
}
