#include "dynaseg/loss.hpp"

#include <cmath>

namespace dynaseg {

namespace {

void require_normalized(const ResponseMap& resp, const char* who) {
    if (!resp.normalized)
        throw InvalidArgument(std::string(who) + ": response must be normalized");
}

void require_labels_match(const ResponseMap& resp, const LabelMap& labels, const char* who) {
    if (resp.height != labels.height || resp.width != labels.width)
        throw ShapeMismatch(std::string(who) + ": response and labels disagree on H x W");
    for (Eigen::Index i = 0; i < labels.labels.size(); ++i)
        if (labels.labels(i) < 0 || labels.labels(i) >= resp.q)
            throw InvalidArgument(std::string(who) + ": label out of range [0, q)");
}

Eigen::Index continuity_terms(const ResponseMap& resp) {
    const Eigen::Index h = resp.height, w = resp.width;
    return static_cast<Eigen::Index>(resp.q) * (h * (w - 1) + (h - 1) * w);
}

}  // namespace

MuSchedule MuSchedule::from_config(const RunConfig& cfg) {
    return MuSchedule{cfg.schedule, cfg.effective_alpha(), cfg.fixed_mu};
}

double compute_mu(const MuSchedule& schedule, int q_prime) {
    if (q_prime < 1) throw InvalidQPrime("compute_mu: q' must be >= 1, got " + std::to_string(q_prime));
    if (schedule.alpha <= 0.0) throw InvalidSpec("compute_mu: alpha must be positive");
    switch (schedule.kind) {
        case ScheduleKind::FSF:
            return static_cast<double>(q_prime) / schedule.alpha;
        case ScheduleKind::SCF:
            return schedule.alpha / static_cast<double>(q_prime);
        case ScheduleKind::FIXED:
            break;
    }
    if (schedule.fixed_mu < 0.0) throw InvalidSpec("compute_mu: fixed mu must be nonnegative");
    return schedule.fixed_mu;
}

double feature_similarity_loss(const ResponseMap& resp, const LabelMap& labels,
                               LossReduction reduction) {
    require_normalized(resp, "feature_similarity_loss");
    require_labels_match(resp, labels, "feature_similarity_loss");
    const Eigen::Index n = resp.pixel_count();
    double total = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto row = resp.values.row(r);
        const double m = row.maxCoeff();
        double sum_exp = 0.0;
        for (int c = 0; c < resp.q; ++c) sum_exp += std::exp(row(c) - m);
        total += m + std::log(sum_exp) - row(labels.labels(r));
    }
    return reduction == LossReduction::MEAN ? total / static_cast<double>(n) : total;
}

PlaneMatrix feature_similarity_grad(const ResponseMap& resp, const LabelMap& labels,
                                    LossReduction reduction) {
    require_normalized(resp, "feature_similarity_grad");
    require_labels_match(resp, labels, "feature_similarity_grad");
    const Eigen::Index n = resp.pixel_count();
    const double scale = reduction == LossReduction::MEAN ? 1.0 / static_cast<double>(n) : 1.0;
    PlaneMatrix grad(n, resp.q);
    Eigen::VectorXd p(resp.q);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto row = resp.values.row(r);
        const double m = row.maxCoeff();
        double sum_exp = 0.0;
        for (int c = 0; c < resp.q; ++c) {
            p(c) = std::exp(row(c) - m);
            sum_exp += p(c);
        }
        p /= sum_exp;
        p(labels.labels(r)) -= 1.0;
        grad.row(r) = scale * p.transpose();
    }
    return grad;
}

double spatial_continuity_loss(const ResponseMap& resp, LossReduction reduction) {
    require_normalized(resp, "spatial_continuity_loss");
    if (resp.height < 2 || resp.width < 2)
        throw TooSmall("spatial_continuity_loss: needs H >= 2 and W >= 2");
    const int h = resp.height, w = resp.width;
    double total = 0.0;
    for (int c = 0; c < resp.q; ++c) {
        const auto plane = resp.values.col(c);
        for (int i = 0; i < h; ++i) {
            const Eigen::Index base = static_cast<Eigen::Index>(i) * w;
            for (int j = 0; j + 1 < w; ++j) total += std::abs(plane(base + j + 1) - plane(base + j));
        }
        for (int i = 0; i + 1 < h; ++i) {
            const Eigen::Index base = static_cast<Eigen::Index>(i) * w;
            for (int j = 0; j < w; ++j) total += std::abs(plane(base + w + j) - plane(base + j));
        }
    }
    return reduction == LossReduction::MEAN ? total / static_cast<double>(continuity_terms(resp))
                                            : total;
}

PlaneMatrix spatial_continuity_grad(const ResponseMap& resp, LossReduction reduction) {
    require_normalized(resp, "spatial_continuity_grad");
    if (resp.height < 2 || resp.width < 2)
        throw TooSmall("spatial_continuity_grad: needs H >= 2 and W >= 2");
    const int h = resp.height, w = resp.width;
    const double scale = reduction == LossReduction::MEAN
                             ? 1.0 / static_cast<double>(continuity_terms(resp))
                             : 1.0;
    PlaneMatrix grad = PlaneMatrix::Zero(resp.pixel_count(), resp.q);
    auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    for (int c = 0; c < resp.q; ++c) {
        const auto plane = resp.values.col(c);
        auto gplane = grad.col(c);
        for (int i = 0; i < h; ++i) {
            const Eigen::Index base = static_cast<Eigen::Index>(i) * w;
            for (int j = 0; j + 1 < w; ++j) {
                const double s = sgn(plane(base + j + 1) - plane(base + j)) * scale;
                gplane(base + j + 1) += s;
                gplane(base + j) -= s;
            }
        }
        for (int i = 0; i + 1 < h; ++i) {
            const Eigen::Index base = static_cast<Eigen::Index>(i) * w;
            for (int j = 0; j < w; ++j) {
                const double s = sgn(plane(base + w + j) - plane(base + j)) * scale;
                gplane(base + w + j) += s;
                gplane(base + j) -= s;
            }
        }
    }
    return grad;
}

LossBreakdown combined_loss(const ResponseMap& resp, const LabelMap& labels,
                            const MuSchedule& schedule, int q_prime, LossReduction reduction) {
    LossBreakdown out;
    out.mu = compute_mu(schedule, q_prime);
    out.sim = feature_similarity_loss(resp, labels, reduction);
    out.con = spatial_continuity_loss(resp, reduction);
    out.total = out.sim + out.mu * out.con;
    return out;
}

PlaneMatrix combined_grad(const ResponseMap& resp, const LabelMap& labels,
                          const MuSchedule& schedule, int q_prime, LossReduction reduction) {
    const double mu = compute_mu(schedule, q_prime);
    PlaneMatrix grad = feature_similarity_grad(resp, labels, reduction);
    grad += mu * spatial_continuity_grad(resp, reduction);
    return grad;
}

}  // namespace dynaseg
