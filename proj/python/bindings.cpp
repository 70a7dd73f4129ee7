#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dynaseg/backbones.hpp"
#include "dynaseg/datasets.hpp"
#include "dynaseg/evaluation.hpp"
#include "dynaseg/loss.hpp"
#include "dynaseg/silhouette.hpp"
#include "dynaseg/trainer.hpp"

namespace py = pybind11;
using namespace dynaseg;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;
using CountArray = py::array_t<long long, py::array::c_style | py::array::forcecast>;

ImageTensor image_from_array(const DoubleArray& arr) {
    if (arr.ndim() != 3 || arr.shape(2) != 3)
        throw InvalidArgument("image array must have shape (H, W, 3)");
    const int h = static_cast<int>(arr.shape(0));
    const int w = static_cast<int>(arr.shape(1));
    PlaneMatrix px(static_cast<Eigen::Index>(h) * w, 3);
    auto r = arr.unchecked<3>();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c) px(flat_index(i, j, w), c) = r(i, j, c);
    return ImageTensor(h, w, std::move(px));
}

ResponseMap response_from_array(const DoubleArray& arr, bool normalized) {
    if (arr.ndim() != 3) throw InvalidArgument("response array must have shape (H, W, C)");
    const int h = static_cast<int>(arr.shape(0));
    const int w = static_cast<int>(arr.shape(1));
    const int c = static_cast<int>(arr.shape(2));
    PlaneMatrix v(static_cast<Eigen::Index>(h) * w, c);
    auto r = arr.unchecked<3>();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int ch = 0; ch < c; ++ch) v(flat_index(i, j, w), ch) = r(i, j, ch);
    return ResponseMap(h, w, std::move(v), normalized);
}

py::array response_to_array(const ResponseMap& resp) {
    py::array_t<double> arr({resp.height, resp.width, resp.q});
    auto r = arr.mutable_unchecked<3>();
    for (int i = 0; i < resp.height; ++i)
        for (int j = 0; j < resp.width; ++j)
            for (int ch = 0; ch < resp.q; ++ch) r(i, j, ch) = resp.at(i, j, ch);
    return arr;
}

LabelMap labels_from_array(const IntArray& arr) {
    if (arr.ndim() != 2) throw InvalidArgument("label array must have shape (H, W)");
    const int h = static_cast<int>(arr.shape(0));
    const int w = static_cast<int>(arr.shape(1));
    Eigen::VectorXi lab(static_cast<Eigen::Index>(h) * w);
    auto r = arr.unchecked<2>();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) lab(flat_index(i, j, w)) = r(i, j);
    return LabelMap(h, w, std::move(lab));
}

py::array labels_to_array(const LabelMap& labels) {
    py::array_t<int> arr({labels.height, labels.width});
    auto r = arr.mutable_unchecked<2>();
    for (int i = 0; i < labels.height; ++i)
        for (int j = 0; j < labels.width; ++j) r(i, j) = labels.at(i, j);
    return arr;
}

ConfusionMatrix confusion_from_array(const CountArray& arr) {
    if (arr.ndim() != 2) throw InvalidArgument("counts array must be 2-D");
    const int p = static_cast<int>(arr.shape(0));
    const int g = static_cast<int>(arr.shape(1));
    ConfusionMatrix cm;
    cm.counts.resize(p, g);
    auto r = arr.unchecked<2>();
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < g; ++j) cm.counts(i, j) = r(i, j);
    cm.pred_ids.resize(p);
    cm.gt_ids.resize(g);
    for (int i = 0; i < p; ++i) cm.pred_ids[i] = i;
    for (int j = 0; j < g; ++j) cm.gt_ids[j] = j;
    return cm;
}

MuSchedule schedule_from(const std::string& kind, double alpha, double fixed_mu) {
    MuSchedule s;
    if (kind == "fsf")
        s.kind = ScheduleKind::FSF;
    else if (kind == "scf")
        s.kind = ScheduleKind::SCF;
    else if (kind == "fixed")
        s.kind = ScheduleKind::FIXED;
    else
        throw InvalidArgument("schedule must be fsf, scf, or fixed");
    s.alpha = alpha;
    s.fixed_mu = fixed_mu;
    return s;
}

LossReduction reduction_from(const std::string& name) {
    if (name == "mean") return LossReduction::MEAN;
    if (name == "sum") return LossReduction::SUM;
    throw InvalidArgument("reduction must be mean or sum");
}

py::dict result_to_dict(const SegmentationResult& r) {
    py::dict out;
    out["labels"] = labels_to_array(r.final_labels);
    out["clusters"] = r.final_labels.unique_count;
    out["iters"] = r.state.iters;
    out["stopped_by"] = to_string(r.state.stopped_by);
    out["q_history"] = r.state.q_history;
    out["mu_history"] = r.state.mu_history;
    std::vector<double> totals;
    totals.reserve(r.state.loss_history.size());
    for (const auto& lb : r.state.loss_history) totals.push_back(lb.total);
    out["loss_history"] = totals;
    out["wall_sec"] = r.wall_time_sec;
    if (r.silhouette)
        out["opt_nC"] = r.silhouette->opt_nC;
    else
        out["opt_nC"] = py::none();
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "unsupervised segmentation with a dynamically weighted clustering loss";

    py::enum_<ScheduleKind>(m, "ScheduleKind")
        .value("FSF", ScheduleKind::FSF)
        .value("SCF", ScheduleKind::SCF)
        .value("FIXED", ScheduleKind::FIXED);
    py::enum_<BackboneKind>(m, "BackboneKind")
        .value("CNN", BackboneKind::CNN)
        .value("RESNET_FPN", BackboneKind::RESNET_FPN);
    py::enum_<StopMode>(m, "StopMode")
        .value("SILHOUETTE", StopMode::SILHOUETTE)
        .value("FIXED_K", StopMode::FIXED_K);
    py::enum_<LossReduction>(m, "LossReduction")
        .value("MEAN", LossReduction::MEAN)
        .value("SUM", LossReduction::SUM);
    py::enum_<TrainMode>(m, "TrainMode")
        .value("PER_IMAGE", TrainMode::PER_IMAGE)
        .value("DATASET", TrainMode::DATASET);

    py::class_<SilhouetteConfig>(m, "SilhouetteConfig")
        .def(py::init<>())
        .def_readwrite("enabled", &SilhouetteConfig::enabled)
        .def_readwrite("sample_size", &SilhouetteConfig::sample_size)
        .def_readwrite("k_min", &SilhouetteConfig::k_min)
        .def_readwrite("k_max", &SilhouetteConfig::k_max);

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("schedule", &RunConfig::schedule)
        .def_readwrite("alpha", &RunConfig::alpha)
        .def_readwrite("fixed_mu", &RunConfig::fixed_mu)
        .def_readwrite("p", &RunConfig::p)
        .def_readwrite("q", &RunConfig::q)
        .def_readwrite("max_iters", &RunConfig::max_iters)
        .def_readwrite("lr", &RunConfig::lr)
        .def_readwrite("momentum", &RunConfig::momentum)
        .def_readwrite("weight_decay", &RunConfig::weight_decay)
        .def_readwrite("backbone", &RunConfig::backbone)
        .def_readwrite("cnn_components", &RunConfig::cnn_components)
        .def_readwrite("fpn_width", &RunConfig::fpn_width)
        .def_readwrite("weights_path", &RunConfig::weights_path)
        .def_readwrite("allow_random_init", &RunConfig::allow_random_init)
        .def_readwrite("stop_mode", &RunConfig::stop_mode)
        .def_readwrite("fixed_threshold", &RunConfig::fixed_threshold)
        .def_readwrite("silhouette", &RunConfig::silhouette)
        .def_readwrite("reduction", &RunConfig::reduction)
        .def_readwrite("train_mode", &RunConfig::train_mode)
        .def_readwrite("dataset_resize", &RunConfig::dataset_resize)
        .def_readwrite("seed", &RunConfig::seed)
        .def("effective_alpha", &RunConfig::effective_alpha)
        .def("validate", &RunConfig::validate);

    m.def(
        "segment",
        [](const DoubleArray& image, const RunConfig& cfg) {
            const SegmentationResult r = segment_image(image_from_array(image), cfg);
            return result_to_dict(r);
        },
        py::arg("image"), py::arg("config"),
        "Optimize a fresh model on one (H, W, 3) image in [0,1]; returns a result dict.");

    m.def(
        "param_count",
        [](const RunConfig& cfg) { return build_model(cfg)->param_count(); },
        py::arg("config"),
        "Trainable parameter count of the configured backbone (builds the model).");

    m.def(
        "compute_mu",
        [](const std::string& schedule, double alpha, int q_prime, double fixed_mu) {
            return compute_mu(schedule_from(schedule, alpha, fixed_mu), q_prime);
        },
        py::arg("schedule"), py::arg("alpha"), py::arg("q_prime"), py::arg("fixed_mu") = 5.0);

    m.def(
        "normalize_response",
        [](const DoubleArray& resp) {
            return response_to_array(normalize_response(response_from_array(resp, false)));
        },
        py::arg("response"));

    m.def(
        "argmax_labels",
        [](const DoubleArray& resp) {
            return labels_to_array(argmax_labels(response_from_array(resp, true)));
        },
        py::arg("normalized_response"));

    m.def(
        "feature_similarity_loss",
        [](const DoubleArray& resp, const IntArray& labels, const std::string& reduction) {
            return feature_similarity_loss(response_from_array(resp, true),
                                           labels_from_array(labels),
                                           reduction_from(reduction));
        },
        py::arg("normalized_response"), py::arg("labels"), py::arg("reduction") = "mean");

    m.def(
        "spatial_continuity_loss",
        [](const DoubleArray& resp, const std::string& reduction) {
            return spatial_continuity_loss(response_from_array(resp, true),
                                           reduction_from(reduction));
        },
        py::arg("normalized_response"), py::arg("reduction") = "mean");

    m.def(
        "combined_loss",
        [](const DoubleArray& resp, const IntArray& labels, const std::string& schedule,
           double alpha, int q_prime, double fixed_mu, const std::string& reduction) {
            const LossBreakdown lb = combined_loss(
                response_from_array(resp, true), labels_from_array(labels),
                schedule_from(schedule, alpha, fixed_mu), q_prime, reduction_from(reduction));
            py::dict out;
            out["sim"] = lb.sim;
            out["con"] = lb.con;
            out["mu"] = lb.mu;
            out["total"] = lb.total;
            return out;
        },
        py::arg("normalized_response"), py::arg("labels"), py::arg("schedule"), py::arg("alpha"),
        py::arg("q_prime"), py::arg("fixed_mu") = 5.0, py::arg("reduction") = "mean");

    m.def(
        "silhouette_score",
        [](const DoubleArray& points, const IntArray& assignment) {
            if (points.ndim() != 2 || assignment.ndim() != 1)
                throw InvalidArgument("points must be (N, D) and assignment (N,)");
            const int n = static_cast<int>(points.shape(0));
            const int d = static_cast<int>(points.shape(1));
            Eigen::MatrixXd pts(n, d);
            auto pr = points.unchecked<2>();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) pts(i, j) = pr(i, j);
            std::vector<int> assign(n);
            auto ar = assignment.unchecked<1>();
            for (int i = 0; i < n; ++i) assign[i] = ar(i);
            return silhouette_score(pts, assign);
        },
        py::arg("points"), py::arg("assignment"));

    m.def(
        "select_opt_nC",
        [](const DoubleArray& image, const DoubleArray& normalized_response,
           const std::vector<int>& candidate_ks, int sample_size, uint64_t seed) {
            const SilhouetteResult r =
                select_opt_nC(image_from_array(image), response_from_array(normalized_response, true),
                              candidate_ks, sample_size, seed);
            py::dict out;
            out["opt_nC"] = r.opt_nC;
            out["candidate_ks"] = r.candidate_ks;
            out["scores"] = r.scores;
            return out;
        },
        py::arg("image"), py::arg("normalized_response"), py::arg("candidate_ks"),
        py::arg("sample_size") = 2000, py::arg("seed") = 0);

    m.def(
        "hungarian_assign",
        [](const CountArray& counts) {
            const Assignment a = hungarian_assign(confusion_from_array(counts));
            return py::make_tuple(a.mapping, a.matched_count);
        },
        py::arg("counts"),
        "Maximize matched pixels over injective row-to-column mappings; returns (mapping, matched).");

    m.def(
        "miou",
        [](const CountArray& counts, const std::optional<std::vector<bool>>& is_thing) {
            const ConfusionMatrix cm = confusion_from_array(counts);
            const Assignment a = hungarian_assign(cm);
            EvalReport rep;
            if (is_thing) {
                ClassSplit split{*is_thing};
                rep = miou(cm, a, &split);
            } else {
                rep = miou(cm, a);
            }
            py::dict out;
            out["miou_all"] = rep.miou_all;
            out["miou_things"] = rep.miou_things;
            out["miou_stuff"] = rep.miou_stuff;
            out["pixel_acc"] = rep.pixel_acc;
            out["per_class_iou"] = rep.per_class_iou;
            out["mapping"] = a.mapping;
            return out;
        },
        py::arg("counts"), py::arg("is_thing") = py::none());

    m.def(
        "confusion",
        [](const IntArray& pred, const IntArray& gt, int ignore_label) {
            const ConfusionMatrix cm =
                confusion(labels_from_array(pred), labels_from_array(gt), ignore_label);
            py::array_t<long long> counts({cm.P(), cm.G()});
            auto r = counts.mutable_unchecked<2>();
            for (int i = 0; i < cm.P(); ++i)
                for (int j = 0; j < cm.G(); ++j) r(i, j) = cm.counts(i, j);
            return py::make_tuple(counts, cm.pred_ids, cm.gt_ids);
        },
        py::arg("pred"), py::arg("gt"), py::arg("ignore_label") = -1);

    m.def(
        "synthetic_corpus",
        [](int count, int blocks, int height, int width, double noise, uint64_t seed) {
            SyntheticSpec spec;
            spec.count = count;
            spec.blocks = blocks;
            spec.height = height;
            spec.width = width;
            spec.noise = noise;
            spec.seed = seed;
            py::list out;
            for (const auto& [img, gt] : synthetic_corpus(spec)) {
                py::array_t<double> px({img.height, img.width, 3});
                auto r = px.mutable_unchecked<3>();
                for (int i = 0; i < img.height; ++i)
                    for (int j = 0; j < img.width; ++j)
                        for (int c = 0; c < 3; ++c) r(i, j, c) = img.at(i, j, c);
                out.append(py::make_tuple(px, labels_to_array(gt.variants[0])));
            }
            return out;
        },
        py::arg("count") = 5, py::arg("blocks") = 3, py::arg("height") = 64,
        py::arg("width") = 64, py::arg("noise") = 0.02, py::arg("seed") = 0);

    m.attr("CNN_DEFAULT_PARAMS") = kCnnDefaultParams;
    m.attr("RESNET_FPN_DEFAULT_PARAMS") = kResNetFpnDefaultParams;
    m.attr("RESNET_FPN_PUBLISHED_PARAMS") = kResNetFpnPublishedParams;
}
