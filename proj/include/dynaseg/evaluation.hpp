#pragma once

#include <string>
#include <vector>

#include "dynaseg/types.hpp"

namespace dynaseg {

using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

/// Predicted-label x ground-truth-class pixel counts. Rows and columns are
/// indexed by remapped contiguous ids; pred_ids/gt_ids give the original id
/// per row/column.
struct ConfusionMatrix {
    CountMatrix counts;  // P x G
    std::vector<int> pred_ids;
    std::vector<int> gt_ids;

    int P() const { return static_cast<int>(counts.rows()); }
    int G() const { return static_cast<int>(counts.cols()); }
    long long total() const { return counts.sum(); }
};

/// Counts over the labels present in the pair; pixels whose ground truth
/// equals ignore_label are excluded (pass a value outside the label range to
/// keep everything).
ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int ignore_label = -1);

/// Fixed-range variant for dataset-wide accumulation: rows 0..num_pred-1,
/// columns 0..num_classes-1, so matrices from different images add.
ConfusionMatrix confusion_fixed(const LabelMap& pred, const LabelMap& gt, int num_pred,
                                int num_classes, int ignore_label = -1);

void accumulate(ConfusionMatrix& into, const ConfusionMatrix& from);

/// Injective partial map from predicted rows to ground-truth columns with
/// exactly min(P, G) pairs, maximizing the matched pixel count. Among
/// maximizers the lexicographically smallest mapping vector wins (unmapped
/// sorts last).
struct Assignment {
    std::vector<int> mapping;  // size P; gt column index or -1
    long long matched_count = 0;
};

Assignment hungarian_assign(const ConfusionMatrix& cm);

/// Which ground-truth columns are countable objects; the complement is stuff.
struct ClassSplit {
    std::vector<bool> is_thing;  // size G
};

struct EvalReport {
    double miou_all = 0.0;
    double miou_things = 0.0;  // NaN when no split given
    double miou_stuff = 0.0;
    double pixel_acc = 0.0;
    std::vector<double> per_class_iou;  // size G; NaN = absent from both sides
    std::vector<int> gt_ids;
    long long total_pixels = 0;
};

/// Per mapped class: IoU = TP / (pred-row total + gt-column total - TP).
/// Unmapped predicted rows count against the classes they overlap; classes
/// absent from both sides are excluded from the means. Throws EmptyEval when
/// the matrix holds no pixels.
EvalReport miou(const ConfusionMatrix& cm, const Assignment& assignment,
                const ClassSplit* split = nullptr);

/// BSD500 protocol over a set of ground-truth variants: ALL averages the
/// per-variant scores, FINE scores against the variant with the most
/// segments, COARSE against the fewest, MEAN averages the three strategies.
struct Bsd500Scores {
    double all = 0.0;
    double fine = 0.0;
    double coarse = 0.0;
    double mean = 0.0;
    std::vector<double> per_variant;
};

Bsd500Scores bsd500_scores(const LabelMap& pred, const std::vector<LabelMap>& gt_variants,
                           int ignore_label = -1);

std::string eval_report_json(const EvalReport& report);
std::string per_class_csv(const EvalReport& report);

}  // namespace dynaseg
