#include <cmath>
#include <random>

#include "doctest.h"
#include "dynaseg/silhouette.hpp"
#include "support.hpp"

using namespace dynaseg;

namespace {

// Brute-force oracle: textbook a/b loops with the singleton-zero and
// zero-denominator conventions, no shared code with the implementation.
double oracle_silhouette(const Eigen::MatrixXd& pts, const std::vector<int>& assign) {
    const int n = static_cast<int>(pts.rows());
    const int k = *std::max_element(assign.begin(), assign.end()) + 1;
    std::vector<int> size(k, 0);
    for (int a : assign) ++size[a];

    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (size[assign[i]] <= 1) continue;
        std::vector<double> sum(k, 0.0);
        for (int j = 0; j < n; ++j) sum[assign[j]] += (pts.row(i) - pts.row(j)).norm();
        const double a = sum[assign[i]] / (size[assign[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c)
            if (c != assign[i] && size[c] > 0) b = std::min(b, sum[c] / size[c]);
        if (std::max(a, b) > 0.0) total += (b - a) / std::max(a, b);
    }
    return total / n;
}

Eigen::MatrixXd blob_points(const std::vector<std::pair<double, double>>& centers, int per_blob,
                            double sigma, uint32_t seed, std::vector<int>* truth = nullptr) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(centers.size()) * per_blob, 2);
    Eigen::Index r = 0;
    for (size_t c = 0; c < centers.size(); ++c)
        for (int i = 0; i < per_blob; ++i, ++r) {
            pts(r, 0) = centers[c].first + noise(gen);
            pts(r, 1) = centers[c].second + noise(gen);
            if (truth) truth->push_back(static_cast<int>(c));
        }
    return pts;
}

// Vertical flat stripes; each stripe is one class, exact colors.
ImageTensor stripe_image(int h, int w, int stripes) {
    const double colors[5][3] = {{0.10, 0.20, 0.30},
                                 {0.50, 0.60, 0.70},
                                 {0.90, 0.80, 0.85},
                                 {0.05, 0.95, 0.50},
                                 {0.70, 0.10, 0.40}};
    PlaneMatrix px(static_cast<Eigen::Index>(h) * w, 3);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int s = j * stripes / w;
            for (int c = 0; c < 3; ++c) px(flat_index(i, j, w), c) = colors[s][c];
        }
    return ImageTensor(h, w, std::move(px));
}

}  // namespace

TEST_CASE("two tight 1-D clusters score close to one") {
    Eigen::MatrixXd pts(4, 1);
    pts << 0, 1, 10, 11;
    std::vector<int> assign{0, 0, 1, 1};
    // Point 0: a = 1, b = (10+11)/2 = 10.5 -> s = 9.5/10.5; point 1 mirrors
    // with b = 9.5; the far pair is symmetric. Mean:
    const double expect = ((10.5 - 1.0) / 10.5 + (9.5 - 1.0) / 9.5) / 2.0;
    const double got = silhouette_score(pts, assign);
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    CHECK(got == doctest::Approx(0.8997493734335839).epsilon(1e-10));
    CHECK(got == doctest::Approx(oracle_silhouette(pts, assign)).epsilon(1e-12));
}

TEST_CASE("implementation agrees with the brute-force oracle on random data") {
    std::mt19937 gen(404);
    std::uniform_int_distribution<int> pick_k(2, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 40 + trial;
        const int k = pick_k(gen);
        Eigen::MatrixXd pts(n, 3);
        std::normal_distribution<double> coord(0.0, 1.0);
        for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = coord(gen);
        std::vector<int> assign(n);
        for (int i = 0; i < n; ++i) assign[i] = i < k ? i : static_cast<int>(gen() % k);
        const double got = silhouette_score(pts, assign);
        const double want = oracle_silhouette(pts, assign);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
        CHECK(got >= -1.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("two fully overlapping clusters score about zero") {
    const int n = 100;
    std::mt19937 gen(11);
    std::normal_distribution<double> coord(0.0, 1.0);
    Eigen::MatrixXd pts(2 * n, 2);
    std::vector<int> assign(2 * n);
    for (int i = 0; i < n; ++i) {
        pts(i, 0) = coord(gen);
        pts(i, 1) = coord(gen);
        pts(n + i, 0) = pts(i, 0);  // exact duplicate carrying the other label
        pts(n + i, 1) = pts(i, 1);
        assign[i] = 0;
        assign[n + i] = 1;
    }
    CHECK(std::abs(silhouette_score(pts, assign)) < 0.05);
}

TEST_CASE("random labels on uniform noise score near zero") {
    const int n = 500;
    std::mt19937 gen(12);
    std::uniform_real_distribution<double> coord(0.0, 1.0);
    Eigen::MatrixXd pts(n, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = coord(gen);
    std::vector<int> assign(n);
    for (int i = 0; i < n; ++i) assign[i] = static_cast<int>(gen() % 4);
    const double s = silhouette_score(pts, assign);
    CHECK(std::abs(s) < 0.2);
}

TEST_CASE("silhouette input validation") {
    Eigen::MatrixXd pts(3, 1);
    pts << 0, 1, 2;
    CHECK_THROWS_AS(silhouette_score(pts, {0, 0, 0}), SingleCluster);
    CHECK_THROWS_AS(silhouette_score(pts, {0, 1}), ShapeMismatch);
    CHECK_THROWS_AS(silhouette_score(pts, {0, 1, -1}), InvalidArgument);
    CHECK_THROWS_AS(silhouette_score(Eigen::MatrixXd(0, 2), {}), InvalidArgument);
}

TEST_CASE("kmeans recovers well-separated blobs") {
    std::vector<int> truth;
    Eigen::MatrixXd pts = blob_points({{0, 0}, {10, 0}, {0, 10}}, 20, 0.2, 21, &truth);
    Rng rng(3);
    KMeansResult km = kmeans(pts, 3, rng);
    REQUIRE(km.assignment.size() == 60);
    // Same partition up to relabeling: the cluster of each blob's first
    // member must cover exactly that blob.
    for (int b = 0; b < 3; ++b) {
        const int label = km.assignment[b * 20];
        for (int i = 0; i < 60; ++i) CHECK((km.assignment[i] == label) == (truth[i] == b));
    }
    CHECK(km.inertia < 60 * 3 * 0.2 * 0.2 * 10);
}

TEST_CASE("kmeans is deterministic in the rng seed") {
    Eigen::MatrixXd pts = blob_points({{0, 0}, {4, 4}, {8, 0}, {0, 8}}, 15, 1.0, 31);
    Rng r1(9), r2(9);
    KMeansResult a = kmeans(pts, 4, r1);
    KMeansResult b = kmeans(pts, 4, r2);
    CHECK(a.assignment == b.assignment);
    CHECK((a.centers - b.centers).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.inertia == b.inertia);
}

TEST_CASE("kmeans edge cases") {
    Eigen::MatrixXd pts = blob_points({{0, 0}}, 5, 1.0, 41);
    Rng rng(1);
    CHECK_THROWS_AS(kmeans(pts, 0, rng), InvalidArgument);
    CHECK_THROWS_AS(kmeans(pts, 6, rng), InvalidArgument);
    KMeansResult km = kmeans(pts, 5, rng);  // k == n: every point its own center
    CHECK(km.inertia == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("color clustering finds the stripe count") {
    for (int stripes = 2; stripes <= 5; ++stripes) {
        ImageTensor img = stripe_image(12, 20, stripes);
        SilhouetteResult r = select_opt_nC(img, ResponseMap(), {2, 3, 4, 5}, 12 * 20, 7,
                                           SilhouetteFeatures::COLOR);
        INFO("stripes=" << stripes);
        CHECK(r.opt_nC == stripes);
    }
}

TEST_CASE("a single candidate is returned as-is") {
    ImageTensor img = stripe_image(8, 12, 3);
    SilhouetteResult r =
        select_opt_nC(img, ResponseMap(), {2}, 96, 0, SilhouetteFeatures::COLOR);
    CHECK(r.opt_nC == 2);
    REQUIRE(r.scores.size() == 1);
    CHECK(std::isfinite(r.scores[0]));
}

TEST_CASE("selection is deterministic in the seed") {
    ImageTensor img = stripe_image(10, 18, 3);
    SilhouetteResult a =
        select_opt_nC(img, ResponseMap(), {2, 3, 4}, 100, 5, SilhouetteFeatures::COLOR);
    SilhouetteResult b =
        select_opt_nC(img, ResponseMap(), {2, 3, 4}, 100, 5, SilhouetteFeatures::COLOR);
    CHECK(a.opt_nC == b.opt_nC);
    CHECK(a.scores == b.scores);
}

TEST_CASE("response-feature selection separates two response blobs") {
    // Half the pixels sit at one corner of response space, half at another.
    const int h = 8, w = 8;
    PlaneMatrix v(h * w, 3);
    for (int r = 0; r < h * w; ++r) {
        const bool left = (r % w) < w / 2;
        v(r, 0) = left ? 1.0 : -1.0;
        v(r, 1) = left ? -1.0 : 1.0;
        v(r, 2) = left ? 0.5 : -0.5;
    }
    ResponseMap resp(h, w, v, true);
    ImageTensor img = testsup::random_image(h, w, 1);
    SilhouetteResult r =
        select_opt_nC(img, resp, {2, 3, 4}, h * w, 0, SilhouetteFeatures::RESPONSE);
    CHECK(r.opt_nC == 2);
}

TEST_CASE("config-driven candidates stay below the response depth") {
    ImageTensor img = testsup::random_image(8, 8, 2);
    ResponseMap resp = normalize_response(testsup::random_response(8, 8, 4, 3, false));
    SilhouetteConfig cfg;  // k 2..20 by default
    cfg.features = SilhouetteFeatures::RESPONSE;
    SilhouetteResult r = select_opt_nC(img, resp, cfg, 0);
    REQUIRE_FALSE(r.candidate_ks.empty());
    CHECK(r.candidate_ks.front() == 2);
    CHECK(r.candidate_ks.back() == 3);  // q - 1 with q = 4
    CHECK(r.opt_nC <= 3);

    // Color features keep the full ladder: q does not bound color clusters.
    cfg.features = SilhouetteFeatures::COLOR;
    cfg.k_max = 6;
    SilhouetteResult rc = select_opt_nC(img, resp, cfg, 0);
    CHECK(rc.candidate_ks.back() == 6);
}

TEST_CASE("selection validates its inputs") {
    ImageTensor img = testsup::random_image(6, 6, 4);
    ResponseMap resp = normalize_response(testsup::random_response(6, 6, 5, 5, false));
    CHECK_THROWS_AS(select_opt_nC(img, resp, {}, 10, 0), InvalidArgument);
    CHECK_THROWS_AS(select_opt_nC(img, resp, {1, 2}, 10, 0), InvalidArgument);
    CHECK_THROWS_AS(select_opt_nC(img, resp, {2, 3}, 1, 0), InvalidArgument);
    CHECK_THROWS_AS(select_opt_nC(img, resp, {2, 3}, 37, 0), InvalidArgument);  // > H*W

    ResponseMap raw = testsup::random_response(6, 6, 5, 6, false);
    CHECK_THROWS_AS(select_opt_nC(img, raw, {2, 3}, 10, 0, SilhouetteFeatures::RESPONSE),
                    InvalidArgument);
    ResponseMap wrong = normalize_response(testsup::random_response(5, 6, 5, 7, false));
    CHECK_THROWS_AS(select_opt_nC(img, wrong, {2, 3}, 10, 0, SilhouetteFeatures::RESPONSE),
                    ShapeMismatch);
}

TEST_CASE("degenerate candidates fall back to the smallest k") {
    // Sample of 3 pixels: candidates 4 and 5 exceed the sample and carry the
    // -infinity sentinel; 2 and 3 are scored normally.
    ImageTensor img = stripe_image(4, 6, 2);
    SilhouetteResult r =
        select_opt_nC(img, ResponseMap(), {4, 5}, 3, 0, SilhouetteFeatures::COLOR);
    CHECK(r.opt_nC == 4);
    CHECK(std::isinf(r.scores[0]));
    CHECK(std::isinf(r.scores[1]));
}

TEST_CASE("stopping rules fire in the documented order") {
    CHECK(should_stop(3, 3, 10, 64) == StopDecision::STOP_THRESHOLD);
    CHECK(should_stop(2, 3, 10, 64) == StopDecision::STOP_THRESHOLD);
    CHECK(should_stop(40, 3, 64, 64) == StopDecision::STOP_MAX_ITERS);
    CHECK(should_stop(40, 3, 10, 64) == StopDecision::CONTINUE);
    // Both conditions true: the threshold wins.
    CHECK(should_stop(3, 3, 64, 64) == StopDecision::STOP_THRESHOLD);
    CHECK(to_string(StopDecision::STOP_THRESHOLD) == "STOP_THRESHOLD");
}
