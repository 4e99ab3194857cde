#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>

#include "awrkit/awr.hpp"
#include "awrkit/error.hpp"
#include "awrkit/eval.hpp"
#include "awrkit/geometry.hpp"
#include "awrkit/gradcheck.hpp"
#include "awrkit/rep.hpp"
#include "awrkit/synth.hpp"

namespace py = pybind11;
using namespace awrkit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Mask = py::array_t<bool, py::array::c_style | py::array::forcecast>;

void require_shape(const py::buffer_info& b, std::initializer_list<py::ssize_t> dims, const char* what) {
    bool ok = b.ndim == static_cast<py::ssize_t>(dims.size());
    std::size_t i = 0;
    for (auto d : dims) {
        if (!ok) break;
        ok = d < 0 || b.shape[i] == d;
        ++i;
    }
    if (!ok) throw ShapeError(std::string(what) + " has the wrong shape");
}

Array to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
    Array out(shape);
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Array pose_array(const std::vector<Vec3>& joints) {
    Array out({static_cast<py::ssize_t>(joints.size()), py::ssize_t{3}});
    auto r = out.mutable_unchecked<2>();
    for (std::size_t j = 0; j < joints.size(); ++j)
        for (int a = 0; a < 3; ++a) r(static_cast<py::ssize_t>(j), a) = joints[j][a];
    return out;
}

std::vector<Vec3> pose_from(const Array& a) {
    const auto b = a.request();
    require_shape(b, {-1, 3}, "pose");
    auto r = a.unchecked<2>();
    std::vector<Vec3> out;
    for (py::ssize_t j = 0; j < r.shape(0); ++j) out.emplace_back(r(j, 0), r(j, 1), r(j, 2));
    return out;
}

std::vector<HandPose> poses_from(const Array& a) {
    const auto b = a.request();
    require_shape(b, {-1, -1, 3}, "pose set");
    auto r = a.unchecked<3>();
    std::vector<HandPose> out(static_cast<std::size_t>(r.shape(0)));
    for (py::ssize_t f = 0; f < r.shape(0); ++f)
        for (py::ssize_t j = 0; j < r.shape(1); ++j) out[static_cast<std::size_t>(f)].joints.emplace_back(r(f, j, 0), r(f, j, 1), r(f, j, 2));
    return out;
}

CandidateField field_from(const Array& hyp, const Array& logits, const Mask& valid) {
    const auto hb = hyp.request();
    require_shape(hb, {-1, -1, 3}, "hypotheses");
    const int joints = static_cast<int>(hb.shape[0]);
    const int pixels = static_cast<int>(hb.shape[1]);
    require_shape(logits.request(), {joints, pixels}, "logits");
    require_shape(valid.request(), {joints, pixels}, "valid");
    CandidateField f(joints, pixels);
    std::copy(hyp.data(), hyp.data() + f.hypotheses.size(), f.hypotheses.begin());
    std::copy(logits.data(), logits.data() + f.logits.size(), f.logits.begin());
    for (std::size_t i = 0; i < f.valid.size(); ++i) f.valid[i] = valid.data()[i] ? 1 : 0;
    return f;
}

DepthImage depth_from(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    const auto b = a.request();
    require_shape(b, {-1, -1}, "depth");
    DepthImage img(static_cast<int>(b.shape[1]), static_cast<int>(b.shape[0]));
    std::copy(a.data(), a.data() + img.mm.size(), img.mm.begin());
    return img;
}

RepType rep_type(const std::string& rep, double kernel) {
    RepType t{parse_rep_tag(rep), kernel};
    t.validate();
    return t;
}

DenseRep rep_from(const RepType& type, const Array& maps) {
    const auto b = maps.request();
    require_shape(b, {-1, type.channels(), -1, -1}, "dense maps");
    if (b.shape[2] != b.shape[3]) throw ShapeError("dense maps must be square");
    DenseRep rep(type, static_cast<int>(b.shape[0]), static_cast<int>(b.shape[2]));
    std::copy(maps.data(), maps.data() + rep.grid.size(), rep.grid.begin());
    return rep;
}

Array rep_array(const DenseRep& rep) {
    return to_array(rep.grid, {rep.joints, rep.channels, rep.height, rep.width});
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Adaptive weighting regression for dense hand-pose representations";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<UsageError>(m, "UsageError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<InvalidDepthError>(m, "InvalidDepthError", base.ptr());
    py::register_exception<EmptyCropError>(m, "EmptyCropError", base.ptr());
    py::register_exception<UndecodableJointError>(m, "UndecodableJointError", base.ptr());

    py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
        .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
                 CameraIntrinsics c{fx, fy, cx, cy, width, height};
                 c.validate();
                 return c;
             }),
             py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
        .def_readwrite("fx", &CameraIntrinsics::fx)
        .def_readwrite("fy", &CameraIntrinsics::fy)
        .def_readwrite("cx", &CameraIntrinsics::cx)
        .def_readwrite("cy", &CameraIntrinsics::cy)
        .def_readwrite("width", &CameraIntrinsics::width)
        .def_readwrite("height", &CameraIntrinsics::height);

    m.def(
        "backproject",
        [](double u, double v, double d, const CameraIntrinsics& intr) {
            const Vec3 p = backproject(u, v, d, intr);
            return py::make_tuple(p.x(), p.y(), p.z());
        },
        py::arg("u"), py::arg("v"), py::arg("depth_mm"), py::arg("intrinsics"));
    m.def(
        "project",
        [](double x, double y, double z, const CameraIntrinsics& intr) {
            const Vec3 p = project(Vec3(x, y, z), intr);
            return py::make_tuple(p.x(), p.y(), p.z());
        },
        py::arg("x"), py::arg("y"), py::arg("z"), py::arg("intrinsics"));

    m.def("rep_channels", [](const std::string& rep) { return rep_type(rep, 1.0).channels(); }, py::arg("rep"));

    m.def(
        "softmax_weights",
        [](const Array& logits, const Mask& valid, double temperature) {
            const auto b = logits.request();
            require_shape(b, {-1, -1}, "logits");
            require_shape(valid.request(), {b.shape[0], b.shape[1]}, "valid");
            std::vector<std::uint8_t> v(static_cast<std::size_t>(b.size));
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = valid.data()[i] ? 1 : 0;
            const auto w = softmax_weights(std::span<const double>(logits.data(), v.size()), v,
                                           static_cast<int>(b.shape[0]), temperature);
            return to_array(w, {b.shape[0], b.shape[1]});
        },
        py::arg("logits"), py::arg("valid"), py::arg("temperature") = 1.0);

    m.def(
        "awr_aggregate",
        [](const Array& hyp, const Array& logits, const Mask& valid, double temperature) {
            return pose_array(awr_aggregate(field_from(hyp, logits, valid), temperature));
        },
        py::arg("hypotheses"), py::arg("logits"), py::arg("valid"), py::arg("temperature") = 1.0,
        "Softmax-weighted sum of J x N x 3 hypotheses over valid pixels; returns J x 3.");

    m.def(
        "awr_gradients",
        [](const Array& hyp, const Array& logits, const Mask& valid, const Array& upstream, double temperature) {
            const CandidateField f = field_from(hyp, logits, valid);
            require_shape(upstream.request(), {f.joints, 3}, "upstream");
            const auto g = awr_gradients(f, std::span<const double>(upstream.data(), static_cast<std::size_t>(f.joints) * 3),
                                         temperature);
            return py::make_tuple(to_array(g.hypotheses, {f.joints, f.pixels, 3}),
                                  to_array(g.logits, {f.joints, f.pixels}));
        },
        py::arg("hypotheses"), py::arg("logits"), py::arg("valid"), py::arg("upstream"), py::arg("temperature") = 1.0);

    py::class_<CropFrame>(m, "Crop")
        .def_property_readonly("size", [](const CropFrame& c) { return c.size; })
        .def_property_readonly("depth", [](const CropFrame& c) { return to_array(c.depth, {c.size, c.size}); })
        .def_property_readonly("mask",
                               [](const CropFrame& c) {
                                   py::array_t<bool> out({c.size, c.size});
                                   for (std::size_t i = 0; i < c.mask.size(); ++i) out.mutable_data()[i] = c.mask[i] != 0;
                                   return out;
                               })
        .def_property_readonly("center", [](const CropFrame& c) { return py::make_tuple(c.center.x(), c.center.y(), c.center.z()); })
        .def_property_readonly("cube_side", [](const CropFrame& c) { return c.cube_side; })
        .def("normalize", [](const CropFrame& c, const Array& pose) {
            return pose_array(normalize_pose(HandPose{pose_from(pose)}, c));
        }, py::arg("pose_mm"))
        .def("denormalize", [](const CropFrame& c, const Array& norm) {
            return pose_array(denormalize_pose(pose_from(norm), c).joints);
        }, py::arg("pose_norm"));

    m.def(
        "crop_hand",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& depth, std::tuple<double, double, double> center,
           const CameraIntrinsics& intr, double cube_side, int out_size) {
            const auto [x, y, z] = center;
            return crop_hand(depth_from(depth), Vec3(x, y, z), cube_side, out_size, intr);
        },
        py::arg("depth_mm"), py::arg("center_mm"), py::arg("intrinsics"), py::arg("cube_side") = kDefaultCubeSide,
        py::arg("out_size") = 64);

    py::class_<DenseGrid>(m, "DenseGrid")
        .def_property_readonly("size", [](const DenseGrid& g) { return g.size; })
        .def_property_readonly("points", [](const DenseGrid& g) { return pose_array(g.points); })
        .def_property_readonly("mask", [](const DenseGrid& g) {
            py::array_t<bool> out({g.size, g.size});
            for (std::size_t i = 0; i < g.mask.size(); ++i) out.mutable_data()[i] = g.mask[i] != 0;
            return out;
        });
    m.def("dense_grid", &dense_grid, py::arg("crop"), py::arg("dense_size"));

    m.def(
        "encode",
        [](const std::string& rep, const Array& pose_norm, const DenseGrid& grid, double kernel) {
            return rep_array(encode(rep_type(rep, kernel), pose_from(pose_norm), grid));
        },
        py::arg("rep"), py::arg("pose_norm"), py::arg("grid"), py::arg("kernel") = 1.0,
        "Ground-truth dense maps, J x C x D x D.");
    m.def(
        "awr_decode",
        [](const std::string& rep, const Array& maps, const DenseGrid& grid, double temperature, double kernel,
           std::optional<Array> weight_logits) {
            const DenseRep d = rep_from(rep_type(rep, kernel), maps);
            std::vector<double> wl;
            if (weight_logits) {
                require_shape(weight_logits->request(), {d.joints, d.height, d.width}, "weight_logits");
                wl.assign(weight_logits->data(), weight_logits->data() + static_cast<std::size_t>(d.joints) * d.pixels());
            }
            AwrOptions opt;
            opt.temperature = temperature;
            return pose_array(awr_decode(d, grid, weight_logits ? &wl : nullptr, opt));
        },
        py::arg("rep"), py::arg("maps"), py::arg("grid"), py::arg("temperature") = 1.0, py::arg("kernel") = 1.0,
        py::arg("weight_logits") = py::none());
    m.def(
        "detection_decode",
        [](const std::string& rep, const Array& maps, const DenseGrid& grid, double kernel, bool mean_fallback) {
            return pose_array(detection_decode(rep_from(rep_type(rep, kernel), maps), grid,
                                               DetectionOptions{.mean_fallback = mean_fallback}));
        },
        py::arg("rep"), py::arg("maps"), py::arg("grid"), py::arg("kernel") = 1.0, py::arg("mean_fallback") = false);

    m.def(
        "synth_frame",
        [](std::uint64_t seed, int index, double noise_sigma_mm, double dropout) {
            SceneParams scene;
            scene.noise_sigma_mm = noise_sigma_mm;
            scene.dropout = dropout;
            const Frame f = synth_frame(seed, index, scene);
            py::array_t<float> depth({f.depth.height, f.depth.width});
            std::copy(f.depth.mm.begin(), f.depth.mm.end(), depth.mutable_data());
            py::array_t<bool> vis(static_cast<py::ssize_t>(f.visible.size()));
            for (std::size_t j = 0; j < f.visible.size(); ++j) vis.mutable_data()[j] = f.visible[j] != 0;
            py::dict d;
            d["depth_mm"] = depth;
            d["pose_mm"] = pose_array(f.pose.joints);
            d["visible"] = vis;
            d["intrinsics"] = scene.intrinsics;
            return d;
        },
        py::arg("seed"), py::arg("index"), py::arg("noise_sigma_mm") = 2.0, py::arg("dropout") = 0.05);

    m.def(
        "mean_joint_error",
        [](const Array& preds, const Array& gts) {
            const JointErrors e = mean_joint_error(poses_from(preds), poses_from(gts));
            return py::make_tuple(to_array(e.per_joint_mean_mm, {static_cast<py::ssize_t>(e.per_joint_mean_mm.size())}),
                                  e.all_joint_mean_mm);
        },
        py::arg("preds_mm"), py::arg("gts_mm"), "Per-joint means (J,) and the all-joint mean, in mm.");
    m.def(
        "good_frame_curve",
        [](const Array& preds, const Array& gts, std::vector<double> thresholds) {
            const auto c = good_frame_curve(poses_from(preds), poses_from(gts), thresholds);
            std::vector<double> flat;
            for (const auto& p : c) flat.insert(flat.end(), {p.threshold_mm, p.fraction});
            return to_array(flat, {static_cast<py::ssize_t>(c.size()), 2});
        },
        py::arg("preds_mm"), py::arg("gts_mm"), py::arg("thresholds_mm") = default_thresholds());

    m.def(
        "gradcheck",
        [](std::uint64_t seed, int trials) {
            GradcheckOptions opt;
            opt.seed = seed;
            opt.trials = trials;
            py::list out;
            for (const auto& c : run_gradcheck(opt)) {
                py::dict d;
                d["op"] = c.op;
                d["trials"] = c.trials;
                d["max_rel_error"] = c.max_rel_error;
                d["passed"] = c.passed;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 0, py::arg("trials") = 10);
}
