#include "dynaseg/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "dynaseg/loss.hpp"
#include "dynaseg/nn/sgd.hpp"

namespace dynaseg {

namespace {

bool finite(const LossBreakdown& lb) {
    return std::isfinite(lb.sim) && std::isfinite(lb.con) && std::isfinite(lb.total);
}

SegmentationResult run_single(const ImageTensor& image, const RunConfig& config,
                              const IterCallback& on_iter) {
    const auto t_start = std::chrono::steady_clock::now();

    std::unique_ptr<Model> model = build_model(config);
    nn::Sgd opt(config.lr, config.momentum, config.weight_decay);
    opt.bind(model->params());
    const MuSchedule schedule = MuSchedule::from_config(config);

    SegmentationResult out;
    out.source_id = image.source_id;
    TrainState& st = out.state;

    int opt_nC = config.fixed_threshold;
    LabelMap prev_labels;

    for (int iter = 0;; ++iter) {
        model->forward(image);
        const ResponseMap resp = model->normalize();
        LabelMap labels = argmax_labels(resp);
        const int q_prime = labels.unique_count;

        if (iter == 0 && config.stop_mode == StopMode::SILHOUETTE && config.silhouette.enabled) {
            out.silhouette = select_opt_nC(image, resp, config.silhouette, config.seed);
            opt_nC = out.silhouette->opt_nC;
        }
        st.q_history.push_back(q_prime);

        if (should_stop(q_prime, opt_nC, iter, config.max_iters) == StopDecision::STOP_THRESHOLD) {
            st.stopped_by = StopReason::THRESHOLD;
            st.iters = iter;
            out.final_labels = (q_prime < opt_nC && iter > 0) ? prev_labels : std::move(labels);
            break;
        }

        // mu follows the previous iteration's cluster count; the first
        // iteration uses its own.
        const int q_for_mu = iter == 0 ? q_prime : st.q_history[iter - 1];
        const LossBreakdown lb = combined_loss(resp, labels, schedule, q_for_mu, config.reduction);
        if (!finite(lb)) {
            st.iters = iter;
            throw NonFiniteLoss("non-finite loss at iteration " + std::to_string(iter) +
                                    (image.source_id.empty() ? "" : " on " + image.source_id),
                                st);
        }
        const PlaneMatrix grad = combined_grad(resp, labels, schedule, q_for_mu, config.reduction);
        model->zero_grad();
        model->backward(grad);
        opt.step();

        st.mu_history.push_back(lb.mu);
        st.loss_history.push_back(lb);
        st.mu = lb.mu;
        st.loss_sim = lb.sim;
        st.loss_con = lb.con;
        st.loss_total = lb.total;
        if (on_iter) on_iter(iter, lb, q_prime);

        if (should_stop(q_prime, opt_nC, iter + 1, config.max_iters) ==
            StopDecision::STOP_MAX_ITERS) {
            st.stopped_by = StopReason::MAX_ITERS;
            st.iters = iter + 1;
            out.final_labels = std::move(labels);
            break;
        }
        prev_labels = std::move(labels);
    }

    out.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

BatchOutcome run_batch_per_image(const std::vector<ImageTensor>& images, const RunConfig& config,
                                 int parallelism, const IterCallbackFactory& make_callback) {
    const int n = static_cast<int>(images.size());
    std::vector<std::optional<SegmentationResult>> slots(n);
    std::vector<std::optional<BatchFailure>> fail_slots(n);

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            RunConfig per_image = config;
            per_image.seed = derive_seed(config.seed, "batch", static_cast<uint64_t>(i));
            try {
                slots[i] = run_single(images[i], per_image,
                                      make_callback ? make_callback(i) : IterCallback{});
            } catch (const std::exception& e) {
                fail_slots[i] = BatchFailure{i, images[i].source_id, e.what()};
            }
        }
    };

    const int jobs = std::max(1, std::min(parallelism, n));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    BatchOutcome out;
    for (int i = 0; i < n; ++i) {
        if (slots[i]) {
            out.results.push_back(std::move(*slots[i]));
            out.result_indices.push_back(i);
        } else if (fail_slots[i]) {
            out.failures.push_back(std::move(*fail_slots[i]));
        }
    }
    return out;
}

// One model across all images, exactly T epochs, then a labeling pass.
// The per-image gate does not apply; mu follows each image's own previous q'.
BatchOutcome run_batch_dataset(const std::vector<ImageTensor>& images, const RunConfig& config) {
    const auto t_start = std::chrono::steady_clock::now();
    const int n = static_cast<int>(images.size());

    std::unique_ptr<Model> model = build_model(config);
    nn::Sgd opt(config.lr, config.momentum, config.weight_decay);
    opt.bind(model->params());
    const MuSchedule schedule = MuSchedule::from_config(config);

    std::vector<TrainState> states(n);
    for (int epoch = 0; epoch < config.max_iters; ++epoch) {
        for (int i = 0; i < n; ++i) {
            TrainState& st = states[i];
            model->forward(images[i]);
            const ResponseMap resp = model->normalize();
            const LabelMap labels = argmax_labels(resp);
            const int q_prime = labels.unique_count;
            st.q_history.push_back(q_prime);

            const int q_for_mu = epoch == 0 ? q_prime : st.q_history[epoch - 1];
            const LossBreakdown lb =
                combined_loss(resp, labels, schedule, q_for_mu, config.reduction);
            if (!finite(lb)) {
                st.iters = epoch;
                throw NonFiniteLoss("non-finite loss in dataset-wide epoch " +
                                        std::to_string(epoch) + " on image " + std::to_string(i),
                                    st);
            }
            const PlaneMatrix grad =
                combined_grad(resp, labels, schedule, q_for_mu, config.reduction);
            model->zero_grad();
            model->backward(grad);
            opt.step();

            st.mu_history.push_back(lb.mu);
            st.loss_history.push_back(lb);
            st.mu = lb.mu;
            st.loss_sim = lb.sim;
            st.loss_con = lb.con;
            st.loss_total = lb.total;
        }
    }

    BatchOutcome out;
    for (int i = 0; i < n; ++i) {
        model->forward(images[i]);
        const ResponseMap resp = model->normalize();
        SegmentationResult r;
        r.final_labels = argmax_labels(resp);
        r.state = std::move(states[i]);
        r.state.iters = config.max_iters;
        r.state.stopped_by = StopReason::MAX_ITERS;
        r.source_id = images[i].source_id;
        r.wall_time_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        out.results.push_back(std::move(r));
        out.result_indices.push_back(i);
    }
    return out;
}

}  // namespace

SegmentationResult segment_image(const ImageTensor& image, const RunConfig& config,
                                 const IterCallback& on_iter) {
    config.validate();
    return run_single(image, config, on_iter);
}

BatchOutcome segment_batch(const std::vector<ImageTensor>& images, const RunConfig& config,
                           int parallelism, const IterCallbackFactory& make_callback) {
    config.validate();
    if (images.empty()) throw EmptyBatch("segment_batch: no images");
    if (config.train_mode == TrainMode::DATASET) return run_batch_dataset(images, config);
    return run_batch_per_image(images, config, parallelism, make_callback);
}

}  // namespace dynaseg
