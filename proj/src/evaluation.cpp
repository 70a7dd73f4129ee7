#include "dynaseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dynaseg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_shape(const LabelMap& pred, const LabelMap& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw ShapeMismatch("confusion: prediction and ground truth disagree on H x W");
}

// Square min-cost assignment (Hungarian with potentials), row -> column.
std::vector<int> solve_min_assignment(const CountMatrix& cost) {
    const int n = static_cast<int>(cost.rows());
    constexpr long long kInf = std::numeric_limits<long long>::max() / 4;
    std::vector<long long> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<long long> minv(n + 1, kInf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            long long delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const long long cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

// Maximum matchable total between the given rows and columns of counts
// (columns need not all be used; with nonnegative counts the optimum over
// full column coverage is the same value).
long long max_total(const CountMatrix& counts, const std::vector<int>& rows,
                    const std::vector<int>& cols) {
    if (rows.empty() || cols.empty()) return 0;
    const int n = static_cast<int>(std::max(rows.size(), cols.size()));
    long long maxv = 0;
    for (int r : rows)
        for (int c : cols) maxv = std::max(maxv, counts(r, c));
    CountMatrix cost = CountMatrix::Constant(n, n, maxv);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            cost(static_cast<int>(i), static_cast<int>(j)) = maxv - counts(rows[i], cols[j]);
    const std::vector<int> match = solve_min_assignment(cost);
    long long total = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int j = match[i];
        if (j >= 0 && j < static_cast<int>(cols.size())) total += counts(rows[i], cols[j]);
    }
    return total;
}

}  // namespace

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int ignore_label) {
    require_same_shape(pred, gt);
    std::map<int, int> pred_index, gt_index;
    for (Eigen::Index i = 0; i < pred.labels.size(); ++i) {
        if (gt.labels(i) == ignore_label) continue;
        pred_index.emplace(pred.labels(i), 0);
        gt_index.emplace(gt.labels(i), 0);
    }
    ConfusionMatrix cm;
    for (auto& [id, idx] : pred_index) {
        idx = static_cast<int>(cm.pred_ids.size());
        cm.pred_ids.push_back(id);
    }
    for (auto& [id, idx] : gt_index) {
        idx = static_cast<int>(cm.gt_ids.size());
        cm.gt_ids.push_back(id);
    }
    cm.counts = CountMatrix::Zero(static_cast<int>(cm.pred_ids.size()),
                                  static_cast<int>(cm.gt_ids.size()));
    for (Eigen::Index i = 0; i < pred.labels.size(); ++i) {
        if (gt.labels(i) == ignore_label) continue;
        ++cm.counts(pred_index[pred.labels(i)], gt_index[gt.labels(i)]);
    }
    return cm;
}

ConfusionMatrix confusion_fixed(const LabelMap& pred, const LabelMap& gt, int num_pred,
                                int num_classes, int ignore_label) {
    require_same_shape(pred, gt);
    if (num_pred < 1 || num_classes < 1)
        throw InvalidArgument("confusion_fixed: ranges must be positive");
    ConfusionMatrix cm;
    cm.counts = CountMatrix::Zero(num_pred, num_classes);
    cm.pred_ids.resize(num_pred);
    cm.gt_ids.resize(num_classes);
    for (int i = 0; i < num_pred; ++i) cm.pred_ids[i] = i;
    for (int i = 0; i < num_classes; ++i) cm.gt_ids[i] = i;
    for (Eigen::Index i = 0; i < pred.labels.size(); ++i) {
        const int g = gt.labels(i);
        if (g == ignore_label) continue;
        const int p = pred.labels(i);
        if (p < 0 || p >= num_pred)
            throw InvalidArgument("confusion_fixed: predicted label outside [0, num_pred)");
        if (g < 0 || g >= num_classes)
            throw InvalidArgument("confusion_fixed: ground-truth label outside [0, num_classes)");
        ++cm.counts(p, g);
    }
    return cm;
}

void accumulate(ConfusionMatrix& into, const ConfusionMatrix& from) {
    if (into.counts.rows() != from.counts.rows() || into.counts.cols() != from.counts.cols())
        throw ShapeMismatch("accumulate: confusion matrices disagree on shape");
    into.counts += from.counts;
}

Assignment hungarian_assign(const ConfusionMatrix& cm) {
    const int P = cm.P(), G = cm.G();
    Assignment out;
    out.mapping.assign(P, -1);
    if (P == 0 || G == 0) return out;

    std::vector<int> all_rows(P), all_cols(G);
    for (int i = 0; i < P; ++i) all_rows[i] = i;
    for (int j = 0; j < G; ++j) all_cols[j] = j;
    const long long best_total = max_total(cm.counts, all_rows, all_cols);
    out.matched_count = best_total;

    // Fix rows in order, choosing the smallest column that still allows an
    // optimal completion; a row may stay unmapped only when P > G and the
    // remaining rows still cover the remaining columns.
    std::vector<char> col_used(G, false);
    long long fixed_total = 0;
    int cols_left = std::min(P, G);
    for (int p = 0; p < P && cols_left > 0; ++p) {
        std::vector<int> rest_rows;
        for (int r = p + 1; r < P; ++r) rest_rows.push_back(r);
        bool assigned = false;
        for (int g = 0; g < G && !assigned; ++g) {
            if (col_used[g]) continue;
            std::vector<int> rest_cols;
            for (int c = 0; c < G; ++c)
                if (!col_used[c] && c != g) rest_cols.push_back(c);
            if (fixed_total + cm.counts(p, g) + max_total(cm.counts, rest_rows, rest_cols) ==
                best_total) {
                out.mapping[p] = g;
                col_used[g] = true;
                fixed_total += cm.counts(p, g);
                --cols_left;
                assigned = true;
            }
        }
        // Unassigned is always completable here: an optimal completion using
        // only the remaining rows exists by induction.
    }
    return out;
}

EvalReport miou(const ConfusionMatrix& cm, const Assignment& assignment, const ClassSplit* split) {
    if (cm.total() == 0) throw EmptyEval("miou: confusion matrix holds no pixels");
    if (static_cast<int>(assignment.mapping.size()) != cm.P())
        throw ShapeMismatch("miou: assignment does not cover the predicted rows");
    if (split && static_cast<int>(split->is_thing.size()) != cm.G())
        throw ShapeMismatch("miou: class split does not cover the ground-truth columns");

    const int P = cm.P(), G = cm.G();
    std::vector<int> col_to_row(G, -1);
    for (int p = 0; p < P; ++p)
        if (assignment.mapping[p] >= 0) col_to_row[assignment.mapping[p]] = p;

    const Eigen::VectorX<long long> row_totals = cm.counts.rowwise().sum();
    const Eigen::VectorX<long long> col_totals = cm.counts.colwise().sum();

    EvalReport rep;
    rep.gt_ids = cm.gt_ids;
    rep.per_class_iou.assign(G, kNaN);
    rep.total_pixels = cm.total();

    long long matched = 0;
    double sum_all = 0.0, sum_things = 0.0, sum_stuff = 0.0;
    int n_all = 0, n_things = 0, n_stuff = 0;
    for (int g = 0; g < G; ++g) {
        const int p = col_to_row[g];
        const long long tp = p >= 0 ? cm.counts(p, g) : 0;
        const long long pred_total = p >= 0 ? row_totals(p) : 0;
        const long long uni = pred_total + col_totals(g) - tp;
        matched += tp;
        if (uni == 0) continue;  // absent from both sides
        const double iou = static_cast<double>(tp) / static_cast<double>(uni);
        rep.per_class_iou[g] = iou;
        sum_all += iou;
        ++n_all;
        if (split) {
            if (split->is_thing[g]) {
                sum_things += iou;
                ++n_things;
            } else {
                sum_stuff += iou;
                ++n_stuff;
            }
        }
    }
    rep.miou_all = n_all > 0 ? sum_all / n_all : kNaN;
    rep.miou_things = split && n_things > 0 ? sum_things / n_things : kNaN;
    rep.miou_stuff = split && n_stuff > 0 ? sum_stuff / n_stuff : kNaN;
    rep.pixel_acc = static_cast<double>(matched) / static_cast<double>(rep.total_pixels);
    return rep;
}

Bsd500Scores bsd500_scores(const LabelMap& pred, const std::vector<LabelMap>& gt_variants,
                           int ignore_label) {
    if (gt_variants.empty()) throw NoGroundTruth("bsd500_scores: no ground-truth variants");
    Bsd500Scores out;
    int fine_idx = 0, coarse_idx = 0;
    for (std::size_t v = 0; v < gt_variants.size(); ++v) {
        const ConfusionMatrix cm = confusion(pred, gt_variants[v], ignore_label);
        const EvalReport rep = miou(cm, hungarian_assign(cm));
        out.per_variant.push_back(rep.miou_all);
        if (gt_variants[v].unique_count > gt_variants[fine_idx].unique_count)
            fine_idx = static_cast<int>(v);
        if (gt_variants[v].unique_count < gt_variants[coarse_idx].unique_count)
            coarse_idx = static_cast<int>(v);
    }
    out.all = 0.0;
    for (double s : out.per_variant) out.all += s;
    out.all /= static_cast<double>(out.per_variant.size());
    out.fine = out.per_variant[fine_idx];
    out.coarse = out.per_variant[coarse_idx];
    out.mean = (out.all + out.fine + out.coarse) / 3.0;
    return out;
}

std::string eval_report_json(const EvalReport& report) {
    nlohmann::json j;
    auto put = [&](const char* key, double v) {
        if (std::isfinite(v))
            j[key] = v;
        else
            j[key] = nullptr;
    };
    put("miou_all", report.miou_all);
    put("miou_things", report.miou_things);
    put("miou_stuff", report.miou_stuff);
    put("pixel_acc", report.pixel_acc);
    j["total_pixels"] = report.total_pixels;
    j["per_class"] = nlohmann::json::array();
    for (std::size_t g = 0; g < report.per_class_iou.size(); ++g) {
        nlohmann::json row;
        row["class_id"] = report.gt_ids[g];
        if (std::isfinite(report.per_class_iou[g]))
            row["iou"] = report.per_class_iou[g];
        else
            row["iou"] = nullptr;
        j["per_class"].push_back(row);
    }
    return j.dump(2);
}

std::string per_class_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "class_id,iou\n";
    for (std::size_t g = 0; g < report.per_class_iou.size(); ++g) {
        out << report.gt_ids[g] << ",";
        if (std::isfinite(report.per_class_iou[g]))
            out << report.per_class_iou[g];
        out << "\n";
    }
    return out.str();
}

}  // namespace dynaseg
