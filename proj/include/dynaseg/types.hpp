#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynaseg/errors.hpp"

namespace dynaseg {

// Spatial maps are stored as (H*W) x C matrices: one column per channel,
// row index = i*W + j. Column-major Eigen storage makes each channel a
// contiguous plane.
using PlaneMatrix = Eigen::MatrixXd;

inline Eigen::Index flat_index(int i, int j, int w) {
    return static_cast<Eigen::Index>(i) * w + j;
}

/// An H x W x 3 image with values scaled to [0,1].
struct ImageTensor {
    int height = 0;
    int width = 0;
    PlaneMatrix pixels;  // (H*W) x 3
    std::string source_id;

    ImageTensor() = default;
    ImageTensor(int h, int w, PlaneMatrix px, std::string id = "");

    double at(int i, int j, int c) const { return pixels(flat_index(i, j, width), c); }
    int channels() const { return static_cast<int>(pixels.cols()); }
};

/// Backbone output before the classifier head: H x W x p.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int p = 0;
    PlaneMatrix values;  // (H*W) x p
};

/// Per-pixel classifier response over the q cluster dimensions.
/// `normalized` marks maps that went through the per-channel
/// zero-mean/unit-variance step.
struct ResponseMap {
    int height = 0;
    int width = 0;
    int q = 0;
    PlaneMatrix values;  // (H*W) x q
    bool normalized = false;

    ResponseMap() = default;
    ResponseMap(int h, int w, PlaneMatrix v, bool norm = false);

    double at(int i, int j, int c) const { return values(flat_index(i, j, width), c); }
    Eigen::Index pixel_count() const { return values.rows(); }
};

/// Per-pixel integer cluster assignments plus the count of distinct labels
/// actually present. unique_count is always recomputed from the data.
struct LabelMap {
    int height = 0;
    int width = 0;
    Eigen::VectorXi labels;  // H*W entries, row index = i*W + j
    int unique_count = 0;

    LabelMap() = default;
    LabelMap(int h, int w, Eigen::VectorXi lab);

    int at(int i, int j) const { return labels(flat_index(i, j, width)); }
};

enum class ScheduleKind { FSF, SCF, FIXED };
enum class BackboneKind { CNN, RESNET_FPN };
enum class StopMode { SILHOUETTE, FIXED_K };
enum class LossReduction { MEAN, SUM };
enum class UpsampleMode { BILINEAR, NEAREST };
enum class TrainMode { PER_IMAGE, DATASET };
enum class SilhouetteFeatures { RESPONSE, COLOR };

struct SilhouetteConfig {
    bool enabled = true;
    int sample_size = 2000;
    int k_min = 2;
    int k_max = 20;
    SilhouetteFeatures features = SilhouetteFeatures::COLOR;
};

struct RunConfig {
    ScheduleKind schedule = ScheduleKind::FSF;
    // Unset alpha falls back to the per-schedule default: 15 for FSF, 50 for SCF.
    std::optional<double> alpha;
    double fixed_mu = 5.0;  // used only by ScheduleKind::FIXED

    int p = 100;
    int q = 100;
    int max_iters = 64;         // T
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;

    BackboneKind backbone = BackboneKind::CNN;
    int cnn_components = 3;     // M
    int fpn_width = 128;
    std::string weights_path;   // pretrained residual weights; empty = none configured
    bool allow_random_init = true;
    UpsampleMode upsample = UpsampleMode::BILINEAR;

    StopMode stop_mode = StopMode::SILHOUETTE;
    int fixed_threshold = 3;    // used when stop_mode == FIXED_K
    SilhouetteConfig silhouette;

    LossReduction reduction = LossReduction::MEAN;
    TrainMode train_mode = TrainMode::PER_IMAGE;
    int dataset_resize = 320;   // shorter side, dataset-wide mode only

    uint64_t seed = 0;

    double effective_alpha() const;
    void validate() const;  // throws InvalidSpec
};

enum class StopReason { MAX_ITERS, THRESHOLD };

struct LossBreakdown {
    double sim = 0.0;
    double con = 0.0;
    double mu = 0.0;
    double total = 0.0;  // sim + mu * con
};

/// Optimization record for one image. q_history has one entry per executed
/// iteration; mu_history and loss_history record what each backward pass used
/// (no entry for an iteration cut short by the stopping gate).
struct TrainState {
    int iters = 0;
    double mu = 0.0;
    double loss_sim = 0.0;
    double loss_con = 0.0;
    double loss_total = 0.0;
    std::vector<int> q_history;
    std::vector<double> mu_history;
    std::vector<LossBreakdown> loss_history;
    StopReason stopped_by = StopReason::MAX_ITERS;
};

// -- operations --

/// Per-channel standardization over the spatial positions of one map:
/// mean 0, variance 1 (population variance). A zero-variance channel maps
/// to all zeros. Throws InvalidArgument when the input is already normalized.
ResponseMap normalize_response(const ResponseMap& raw);

/// Per-pixel argmax over channels; ties break to the lowest channel index.
/// Requires a normalized response.
LabelMap argmax_labels(const ResponseMap& resp);

// Channel moments over spatial positions (population variance). Used by the
// normalization step and by tests checking its invariants.
Eigen::VectorXd channel_means(const PlaneMatrix& m);
Eigen::VectorXd channel_vars(const PlaneMatrix& m);

std::string to_string(ScheduleKind k);
std::string to_string(BackboneKind k);
std::string to_string(StopReason r);

}  // namespace dynaseg
