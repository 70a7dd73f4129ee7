#include "dynaseg/types.hpp"

#include <cmath>
#include <unordered_set>

namespace dynaseg {

namespace {
constexpr double kDegenerateVar = 1e-24;
}

ImageTensor::ImageTensor(int h, int w, PlaneMatrix px, std::string id)
    : height(h), width(w), pixels(std::move(px)), source_id(std::move(id)) {
    if (height < 2 || width < 2)
        throw InvalidArgument("ImageTensor: H and W must be >= 2, got " +
                              std::to_string(h) + "x" + std::to_string(w));
    if (pixels.rows() != static_cast<Eigen::Index>(height) * width || pixels.cols() != 3)
        throw ShapeMismatch("ImageTensor: pixel matrix must be (H*W) x 3");
    if (!pixels.allFinite() || pixels.minCoeff() < 0.0 || pixels.maxCoeff() > 1.0)
        throw InvalidArgument("ImageTensor: pixel values must be finite and in [0,1]");
}

ResponseMap::ResponseMap(int h, int w, PlaneMatrix v, bool norm)
    : height(h), width(w), q(static_cast<int>(v.cols())), values(std::move(v)), normalized(norm) {
    if (values.rows() != static_cast<Eigen::Index>(height) * width)
        throw ShapeMismatch("ResponseMap: value matrix must have H*W rows");
}

LabelMap::LabelMap(int h, int w, Eigen::VectorXi lab)
    : height(h), width(w), labels(std::move(lab)) {
    if (labels.size() != static_cast<Eigen::Index>(height) * width)
        throw ShapeMismatch("LabelMap: label vector must have H*W entries");
    std::unordered_set<int> seen;
    for (Eigen::Index n = 0; n < labels.size(); ++n) seen.insert(labels(n));
    unique_count = static_cast<int>(seen.size());
}

double RunConfig::effective_alpha() const {
    if (alpha) return *alpha;
    return schedule == ScheduleKind::SCF ? 50.0 : 15.0;
}

void RunConfig::validate() const {
    if (effective_alpha() <= 0.0) throw InvalidSpec("config: alpha must be > 0");
    if (schedule == ScheduleKind::FIXED && fixed_mu < 0.0)
        throw InvalidSpec("config: fixed mu must be >= 0");
    if (p < 1 || q < 1) throw InvalidSpec("config: p and q must be >= 1");
    if (max_iters < 1) throw InvalidSpec("config: max_iters (T) must be >= 1");
    if (lr <= 0.0) throw InvalidSpec("config: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw InvalidSpec("config: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw InvalidSpec("config: weight_decay must be >= 0");
    if (cnn_components < 1) throw InvalidSpec("config: cnn_components (M) must be >= 1");
    if (fpn_width < 1) throw InvalidSpec("config: fpn_width must be >= 1");
    if (fixed_threshold < 1) throw InvalidSpec("config: fixed threshold must be >= 1");
    if (silhouette.k_min < 2) throw InvalidSpec("config: silhouette.k_min must be >= 2");
    if (silhouette.k_max < silhouette.k_min)
        throw InvalidSpec("config: silhouette.k_max must be >= k_min");
    if (silhouette.sample_size < 2) throw InvalidSpec("config: silhouette.sample_size must be >= 2");
    if (dataset_resize < 2) throw InvalidSpec("config: dataset_resize must be >= 2");
}

Eigen::VectorXd channel_means(const PlaneMatrix& m) {
    return m.colwise().mean();
}

Eigen::VectorXd channel_vars(const PlaneMatrix& m) {
    const Eigen::Index n = m.rows();
    Eigen::VectorXd mu = m.colwise().mean();
    Eigen::VectorXd var(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        var(c) = (m.col(c).array() - mu(c)).square().sum() / static_cast<double>(n);
    return var;
}

ResponseMap normalize_response(const ResponseMap& raw) {
    if (raw.normalized)
        throw InvalidArgument("normalize_response: input is already normalized");
    if (!raw.values.allFinite())
        throw InvalidArgument("normalize_response: input has non-finite values");

    PlaneMatrix out = raw.values;
    const Eigen::VectorXd mu = channel_means(raw.values);
    const Eigen::VectorXd var = channel_vars(raw.values);
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        if (var(c) <= kDegenerateVar) {
            out.col(c).setZero();  // dead channel: all zeros, not an error
        } else {
            out.col(c) = (out.col(c).array() - mu(c)) / std::sqrt(var(c));
        }
    }
    return ResponseMap(raw.height, raw.width, std::move(out), true);
}

LabelMap argmax_labels(const ResponseMap& resp) {
    if (!resp.normalized)
        throw InvalidArgument("argmax_labels: response must be normalized first");
    const Eigen::Index n = resp.values.rows();
    const Eigen::Index q = resp.values.cols();
    Eigen::VectorXi labels(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        int best = 0;
        double best_v = resp.values(r, 0);
        for (Eigen::Index c = 1; c < q; ++c) {
            const double v = resp.values(r, c);
            if (v > best_v) {  // strict: ties keep the lowest index
                best_v = v;
                best = static_cast<int>(c);
            }
        }
        labels(r) = best;
    }
    return LabelMap(resp.height, resp.width, std::move(labels));
}

std::string to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::FSF: return "fsf";
        case ScheduleKind::SCF: return "scf";
        case ScheduleKind::FIXED: return "fixed";
    }
    return "?";
}

std::string to_string(BackboneKind k) {
    switch (k) {
        case BackboneKind::CNN: return "cnn";
        case BackboneKind::RESNET_FPN: return "resnet_fpn";
    }
    return "?";
}

std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::MAX_ITERS: return "max_iters";
        case StopReason::THRESHOLD: return "threshold";
    }
    return "?";
}

}  // namespace dynaseg
