#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dynaseg/backbones.hpp"
#include "dynaseg/silhouette.hpp"
#include "dynaseg/types.hpp"

namespace dynaseg {

struct OptimizerSpec {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;

    static OptimizerSpec from_config(const RunConfig& cfg) {
        return {cfg.lr, cfg.momentum, cfg.weight_decay};
    }
};

struct SegmentationResult {
    LabelMap final_labels;
    TrainState state;
    // Absent in fixed-threshold mode and in dataset-wide training.
    std::optional<SilhouetteResult> silhouette;
    double wall_time_sec = 0.0;
    std::string source_id;
};

/// Raised when any loss term stops being finite; carries the optimization
/// record up to the failing iteration.
class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(const std::string& msg, TrainState state)
        : Error(msg), state_(std::move(state)) {}
    const TrainState& state() const { return state_; }

private:
    TrainState state_;
};

// Observer invoked after each completed optimization step.
using IterCallback = std::function<void(int iter, const LossBreakdown& loss, int q_prime)>;

/// One image, one fresh model: forward -> normalize -> argmax -> q' -> mu ->
/// loss -> backward -> SGD step, until the silhouette/threshold gate or the
/// iteration cap fires. The under-segmentation guard means a THRESHOLD stop
/// never returns labels with fewer than opt_nC clusters: at q' == opt_nC the
/// current labels are kept, below it the previous iteration's labels are.
SegmentationResult segment_image(const ImageTensor& image, const RunConfig& config,
                                 const IterCallback& on_iter = {});

struct BatchFailure {
    int index = -1;
    std::string source_id;
    std::string message;
};

struct BatchOutcome {
    std::vector<SegmentationResult> results;  // input order, failed slots absent
    std::vector<int> result_indices;          // original index per result
    std::vector<BatchFailure> failures;
};

// Builds the observer for one batch item; may be invoked from worker threads.
using IterCallbackFactory = std::function<IterCallback(int index)>;

/// Per-image independence: image i runs with seed derive_seed(config.seed,
/// "batch", i), so results do not depend on parallelism. In dataset-wide mode
/// (train.mode = dataset) a single model is optimized across all images for
/// exactly T epochs (no silhouette gate, no observer) and then labels every
/// image.
BatchOutcome segment_batch(const std::vector<ImageTensor>& images, const RunConfig& config,
                           int parallelism = 1, const IterCallbackFactory& make_callback = {});

}  // namespace dynaseg
