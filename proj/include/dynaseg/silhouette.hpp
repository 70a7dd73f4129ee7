#pragma once

#include <vector>

#include "dynaseg/rng.hpp"
#include "dynaseg/types.hpp"

namespace dynaseg {

/// Candidate cluster counts with their silhouette scores. Candidates that
/// could not be scored (k exceeding the sample, or clustering collapsing to
/// one group) carry -infinity and are excluded from the argmax. When every
/// candidate is degenerate, opt_nC falls back to the smallest candidate.
struct SilhouetteResult {
    std::vector<int> candidate_ks;
    std::vector<double> scores;
    int opt_nC = 0;
};

/// Mean over points of (b - a) / max(a, b) under Euclidean distance.
/// Singleton clusters contribute 0, as do points where max(a, b) == 0.
/// Throws SingleCluster when fewer than 2 distinct labels are present.
double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& assignment);

struct KMeansResult {
    Eigen::MatrixXd centers;      // k x d
    std::vector<int> assignment;  // size n, values in [0, k)
    double inertia = 0.0;         // sum of squared distances to assigned centers
};

/// Lloyd iterations from k-means++ starts; the best of `restarts` runs by
/// inertia. Deterministic given the Rng state. Throws InvalidArgument when
/// k < 1 or k > n.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int restarts = 10,
                    int max_iters = 100);

/// Scores each candidate k on a seeded pixel sample of per-pixel features and
/// returns the argmax; ties break to the smaller k. Raw color is the default
/// feature source: an untrained backbone's padding halo manufactures tight
/// spurious clusters along borders, so first-iteration responses reward
/// ever-finer splits even on flat regions. Responses stay available as the
/// config alternative.
SilhouetteResult select_opt_nC(const ImageTensor& image, const ResponseMap& first_resp,
                               const std::vector<int>& candidate_ks, int sample_size,
                               uint64_t seed,
                               SilhouetteFeatures features = SilhouetteFeatures::COLOR);
SilhouetteResult select_opt_nC(const ImageTensor& image, const ResponseMap& first_resp,
                               const SilhouetteConfig& cfg, uint64_t seed);

enum class StopDecision { CONTINUE, STOP_THRESHOLD, STOP_MAX_ITERS };

// Threshold check takes precedence when both conditions hold.
StopDecision should_stop(int q_prime, int opt_nC, int iter, int T);

std::string to_string(StopDecision d);

}  // namespace dynaseg
