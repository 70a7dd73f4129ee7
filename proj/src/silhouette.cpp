#include "dynaseg/silhouette.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace dynaseg {

namespace {

// Pairwise Euclidean distances via the Gram matrix.
Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& points) {
    const Eigen::Index n = points.rows();
    const Eigen::VectorXd sq = points.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = sq.replicate(1, n) + sq.transpose().replicate(n, 1);
    d2.noalias() -= 2.0 * points * points.transpose();
    return d2.cwiseMax(0.0).cwiseSqrt();
}

int count_distinct(const std::vector<int>& assignment) {
    std::unordered_set<int> seen(assignment.begin(), assignment.end());
    return static_cast<int>(seen.size());
}

double silhouette_from_distances(const Eigen::MatrixXd& dists, const std::vector<int>& assignment,
                                 int k) {
    const Eigen::Index n = dists.rows();
    std::vector<Eigen::Index> cluster_size(k, 0);
    for (int a : assignment) ++cluster_size[a];

    double total = 0.0;
    std::vector<double> sum_to_cluster(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int own = assignment[i];
        if (cluster_size[own] <= 1) continue;  // singleton: s(i) = 0
        std::fill(sum_to_cluster.begin(), sum_to_cluster.end(), 0.0);
        for (Eigen::Index j = 0; j < n; ++j) sum_to_cluster[assignment[j]] += dists(i, j);

        const double a = sum_to_cluster[own] / static_cast<double>(cluster_size[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == own || cluster_size[c] == 0) continue;
            b = std::min(b, sum_to_cluster[c] / static_cast<double>(cluster_size[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

}  // namespace

double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& assignment) {
    if (static_cast<Eigen::Index>(assignment.size()) != points.rows())
        throw ShapeMismatch("silhouette_score: one label per point required");
    if (points.rows() == 0) throw InvalidArgument("silhouette_score: empty point set");
    if (count_distinct(assignment) < 2)
        throw SingleCluster("silhouette_score: needs at least 2 distinct labels");
    const int k = *std::max_element(assignment.begin(), assignment.end()) + 1;
    for (int a : assignment)
        if (a < 0) throw InvalidArgument("silhouette_score: negative label");
    return silhouette_from_distances(pairwise_distances(points), assignment, k);
}

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int restarts, int max_iters) {
    const Eigen::Index n = points.rows();
    if (k < 1 || static_cast<Eigen::Index>(k) > n)
        throw InvalidArgument("kmeans: k must be in [1, n]");
    if (restarts < 1) throw InvalidArgument("kmeans: restarts must be >= 1");

    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();

    Eigen::MatrixXd centers(k, points.cols());
    std::vector<int> assignment(n);
    Eigen::VectorXd min_d2(n);

    for (int restart = 0; restart < restarts; ++restart) {
        // k-means++ seeding.
        centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(n)));
        min_d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
        for (int c = 1; c < k; ++c) {
            const double total = min_d2.sum();
            Eigen::Index pick;
            if (total <= 0.0) {
                pick = static_cast<Eigen::Index>(rng.below(n));
            } else {
                double target = rng.uniform(0.0, total);
                pick = n - 1;
                for (Eigen::Index i = 0; i < n; ++i) {
                    target -= min_d2(i);
                    if (target <= 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
            centers.row(c) = points.row(pick);
            min_d2 = min_d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
        }

        // Lloyd iterations.
        std::fill(assignment.begin(), assignment.end(), -1);
        double inertia = 0.0;
        for (int iter = 0; iter < max_iters; ++iter) {
            // Assign: squared distances via the expanded inner product.
            Eigen::MatrixXd d2 = (-2.0 * points * centers.transpose());
            d2.rowwise() += centers.rowwise().squaredNorm().transpose();
            bool changed = false;
            inertia = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                Eigen::Index arg;
                const double v = d2.row(i).minCoeff(&arg);
                inertia += std::max(0.0, v + points.row(i).squaredNorm());
                if (assignment[i] != static_cast<int>(arg)) {
                    assignment[i] = static_cast<int>(arg);
                    changed = true;
                }
            }
            if (!changed) break;

            // Update means; an emptied cluster is reseeded at the point
            // farthest from its assigned center.
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
            std::vector<Eigen::Index> counts(k, 0);
            for (Eigen::Index i = 0; i < n; ++i) {
                sums.row(assignment[i]) += points.row(i);
                ++counts[assignment[i]];
            }
            for (int c = 0; c < k; ++c) {
                if (counts[c] > 0) {
                    centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
                } else {
                    Eigen::Index far_i = 0;
                    double far_d = -1.0;
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double d = (points.row(i) - centers.row(assignment[i])).squaredNorm();
                        if (d > far_d) {
                            far_d = d;
                            far_i = i;
                        }
                    }
                    centers.row(c) = points.row(far_i);
                }
            }
        }

        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.centers = centers;
            best.assignment = assignment;
        }
    }
    return best;
}

SilhouetteResult select_opt_nC(const ImageTensor& image, const ResponseMap& first_resp,
                               const std::vector<int>& candidate_ks, int sample_size, uint64_t seed,
                               SilhouetteFeatures features) {
    if (candidate_ks.empty()) throw InvalidArgument("select_opt_nC: empty candidate list");
    for (int k : candidate_ks)
        if (k < 2) throw InvalidArgument("select_opt_nC: candidate k must be >= 2");
    const Eigen::Index total_px = static_cast<Eigen::Index>(image.height) * image.width;
    if (sample_size < 2 || sample_size > total_px)
        throw InvalidArgument("select_opt_nC: sample_size must be in [2, H*W]");
    if (features == SilhouetteFeatures::RESPONSE) {
        if (first_resp.height != image.height || first_resp.width != image.width)
            throw ShapeMismatch("select_opt_nC: response and image disagree on H x W");
        if (!first_resp.normalized)
            throw InvalidArgument("select_opt_nC: first-iteration response must be normalized");
    }

    Rng rng(derive_seed(seed, "silhouette"));
    const std::vector<int> idx =
        rng.sample_without_replacement(static_cast<int>(total_px), sample_size);
    const PlaneMatrix& source =
        features == SilhouetteFeatures::RESPONSE ? first_resp.values : image.pixels;
    Eigen::MatrixXd points(sample_size, source.cols());
    for (int r = 0; r < sample_size; ++r) points.row(r) = source.row(idx[r]);

    const Eigen::MatrixXd dists = pairwise_distances(points);

    SilhouetteResult out;
    out.candidate_ks = candidate_ks;
    out.scores.assign(candidate_ks.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < candidate_ks.size(); ++i) {
        const int k = candidate_ks[i];
        if (k > sample_size) continue;
        const KMeansResult km = kmeans(points, k, rng);
        if (count_distinct(km.assignment) < 2) continue;
        out.scores[i] = silhouette_from_distances(dists, km.assignment, k);
    }

    // Argmax with ties to the smaller k; all-degenerate falls back to the
    // smallest candidate.
    int best_k = *std::min_element(candidate_ks.begin(), candidate_ks.end());
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidate_ks.size(); ++i) {
        const double s = out.scores[i];
        if (!std::isfinite(s)) continue;
        if (s > best_score || (s == best_score && candidate_ks[i] < best_k)) {
            best_score = s;
            best_k = candidate_ks[i];
        }
    }
    out.opt_nC = best_k;
    return out;
}

SilhouetteResult select_opt_nC(const ImageTensor& image, const ResponseMap& first_resp,
                               const SilhouetteConfig& cfg, uint64_t seed) {
    if (cfg.k_min < 2 || cfg.k_max < cfg.k_min)
        throw InvalidSpec("select_opt_nC: need 2 <= k_min <= k_max");
    // A threshold of q or more would stop every run at iteration 0, since q'
    // can never exceed the response depth. Candidates are capped below q
    // (moot at the stock settings: k_max 20 vs q 100).
    int k_hi = cfg.k_max;
    if (cfg.features == SilhouetteFeatures::RESPONSE && first_resp.q >= 3)
        k_hi = std::min(k_hi, first_resp.q - 1);
    k_hi = std::max(k_hi, cfg.k_min);
    std::vector<int> ks;
    for (int k = cfg.k_min; k <= k_hi; ++k) ks.push_back(k);
    const Eigen::Index total_px = static_cast<Eigen::Index>(image.height) * image.width;
    const int sample = static_cast<int>(std::min<Eigen::Index>(cfg.sample_size, total_px));
    return select_opt_nC(image, first_resp, ks, sample, seed, cfg.features);
}

StopDecision should_stop(int q_prime, int opt_nC, int iter, int T) {
    if (q_prime <= opt_nC) return StopDecision::STOP_THRESHOLD;
    if (iter >= T) return StopDecision::STOP_MAX_ITERS;
    return StopDecision::CONTINUE;
}

std::string to_string(StopDecision d) {
    switch (d) {
        case StopDecision::CONTINUE: return "CONTINUE";
        case StopDecision::STOP_THRESHOLD: return "STOP_THRESHOLD";
        case StopDecision::STOP_MAX_ITERS: return "STOP_MAX_ITERS";
    }
    return "?";
}

}  // namespace dynaseg
