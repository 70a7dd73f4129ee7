#include "dynaseg/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dynaseg/datasets.hpp"
#include "dynaseg/evaluation.hpp"
#include "dynaseg/io/image_io.hpp"
#include "dynaseg/rng.hpp"
#include "dynaseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dynaseg {

PaletteSpec PaletteSpec::make() {
    PaletteSpec p;
    for (int i = 0; i < 256; ++i) {
        const uint64_t h = splitmix64(0x5EEDC010Dull + static_cast<uint64_t>(i));
        const double hue = static_cast<double>(h & 0xFFFF) / 65536.0;
        const double sat = 0.55 + 0.45 * static_cast<double>((h >> 16) & 0xFF) / 255.0;
        const double val = 0.60 + 0.40 * static_cast<double>((h >> 24) & 0xFF) / 255.0;
        const auto rgb = io::hsv_to_rgb(hue, sat, val);
        for (int c = 0; c < 3; ++c)
            p.colors[i][c] = static_cast<uint8_t>(std::lround(rgb[c] * 255.0));
    }
    return p;
}

namespace {

const std::map<std::string, ScheduleKind> kScheduleNames{
    {"fsf", ScheduleKind::FSF}, {"scf", ScheduleKind::SCF}, {"fixed", ScheduleKind::FIXED}};
const std::map<std::string, BackboneKind> kBackboneNames{
    {"cnn", BackboneKind::CNN}, {"resnet_fpn", BackboneKind::RESNET_FPN}};
const std::map<std::string, LossReduction> kReductionNames{
    {"mean", LossReduction::MEAN}, {"sum", LossReduction::SUM}};
const std::map<std::string, TrainMode> kTrainModeNames{
    {"per_image", TrainMode::PER_IMAGE}, {"dataset", TrainMode::DATASET}};
const std::map<std::string, DatasetName> kDatasetNames{
    {"bsd500", DatasetName::BSD500},
    {"voc2012", DatasetName::VOC2012},
    {"coco-stuff", DatasetName::COCO_STUFF},
    {"coco_stuff", DatasetName::COCO_STUFF},
    {"synthetic", DatasetName::SYNTHETIC}};

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(15) << v;
    return ss.str();
}

// -- option bundles ----------------------------------------------------------

struct RunOpts {
    ScheduleKind schedule = ScheduleKind::FSF;
    double alpha = 0.0;
    CLI::Option* alpha_opt = nullptr;
    double mu = 5.0;
    int iters = 64;
    BackboneKind backbone = BackboneKind::CNN;
    std::string weights;
    bool require_weights = false;
    bool no_silhouette = false;
    int threshold = 3;
    CLI::Option* threshold_opt = nullptr;
    int p = 100;
    int q = 100;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    LossReduction reduction = LossReduction::MEAN;
    TrainMode train_mode = TrainMode::PER_IMAGE;
    int resize = 0;
    CLI::Option* resize_opt = nullptr;
    int components = 3;
    int fpn_width = 128;
    uint64_t seed = 0;
    int sample = 2000;
    int k_min = 2;
    int k_max = 20;
};

void add_run_options(CLI::App* sub, RunOpts& o) {
    sub->add_option("--schedule", o.schedule, "mu schedule: fsf, scf, or fixed")
        ->transform(CLI::CheckedTransformer(kScheduleNames, CLI::ignore_case));
    o.alpha_opt =
        sub->add_option("--alpha", o.alpha, "schedule coefficient (default: 15 fsf, 50 scf)");
    sub->add_option("--mu", o.mu, "constant weight, used only with --schedule fixed");
    sub->add_option("--iters", o.iters, "iteration cap T");
    sub->add_option("--backbone", o.backbone, "cnn or resnet_fpn")
        ->transform(CLI::CheckedTransformer(kBackboneNames, CLI::ignore_case));
    sub->add_option("--weights-path", o.weights, "pretrained trunk weights for resnet_fpn");
    sub->add_flag("--require-weights", o.require_weights,
                  "fail instead of random-initializing when weights are missing");
    sub->add_flag("--no-silhouette", o.no_silhouette,
                  "replace the silhouette gate with the fixed threshold");
    o.threshold_opt = sub->add_option(
        "--threshold", o.threshold, "fixed q' stopping threshold (implies --no-silhouette)");
    sub->add_option("--p", o.p, "feature channels");
    sub->add_option("--q", o.q, "cluster dimensions");
    sub->add_option("--lr", o.lr, "SGD learning rate");
    sub->add_option("--momentum", o.momentum, "SGD momentum");
    sub->add_option("--weight-decay", o.weight_decay, "SGD weight decay");
    sub->add_option("--reduction", o.reduction, "loss reduction: mean or sum")
        ->transform(CLI::CheckedTransformer(kReductionNames, CLI::ignore_case));
    sub->add_option("--train-mode", o.train_mode, "per_image or dataset")
        ->transform(CLI::CheckedTransformer(kTrainModeNames, CLI::ignore_case));
    o.resize_opt = sub->add_option(
        "--resize", o.resize, "shorter-side resize, 0 = native (dataset mode defaults to 320)");
    sub->add_option("--components", o.components, "CNN component count M");
    sub->add_option("--fpn-width", o.fpn_width, "pyramid channel width");
    sub->add_option("--seed", o.seed, "run seed");
    sub->add_option("--silhouette-sample", o.sample, "pixel sample cap for the gate");
    sub->add_option("--k-min", o.k_min, "smallest candidate cluster count");
    sub->add_option("--k-max", o.k_max, "largest candidate cluster count");
}

RunConfig resolve_config(const RunOpts& o) {
    RunConfig cfg;
    cfg.schedule = o.schedule;
    if (o.alpha_opt != nullptr && o.alpha_opt->count() > 0) cfg.alpha = o.alpha;
    cfg.fixed_mu = o.mu;
    cfg.max_iters = o.iters;
    cfg.backbone = o.backbone;
    cfg.weights_path = o.weights;
    cfg.allow_random_init = !o.require_weights;
    if ((o.threshold_opt != nullptr && o.threshold_opt->count() > 0) || o.no_silhouette) {
        cfg.stop_mode = StopMode::FIXED_K;
        cfg.silhouette.enabled = false;
        cfg.fixed_threshold = o.threshold;
    }
    cfg.p = o.p;
    cfg.q = o.q;
    cfg.lr = o.lr;
    cfg.momentum = o.momentum;
    cfg.weight_decay = o.weight_decay;
    cfg.reduction = o.reduction;
    cfg.train_mode = o.train_mode;
    if (o.resize_opt != nullptr && o.resize_opt->count() > 0 && o.resize > 0)
        cfg.dataset_resize = o.resize;
    cfg.cnn_components = o.components;
    cfg.fpn_width = o.fpn_width;
    cfg.seed = o.seed;
    cfg.silhouette.sample_size = o.sample;
    cfg.silhouette.k_min = o.k_min;
    cfg.silhouette.k_max = o.k_max;
    cfg.validate();
    return cfg;
}

// 0 = keep native resolution.
int resolve_resize(const RunOpts& o, const RunConfig& cfg) {
    if (o.resize_opt != nullptr && o.resize_opt->count() > 0) return std::max(0, o.resize);
    return cfg.train_mode == TrainMode::DATASET ? cfg.dataset_resize : 0;
}

struct InputOpts {
    std::vector<std::string> images;
    DatasetName dataset = DatasetName::SYNTHETIC;
    CLI::Option* dataset_opt = nullptr;
    std::string root;
    std::string split;
    int limit = 0;
};

void add_input_options(CLI::App* sub, InputOpts& o) {
    sub->add_option("--image", o.images, "image file(s) to process");
    o.dataset_opt =
        sub->add_option("--dataset", o.dataset, "bsd500, voc2012, coco-stuff, or synthetic")
            ->transform(CLI::CheckedTransformer(kDatasetNames, CLI::ignore_case));
    sub->add_option("--root", o.root, "dataset root directory");
    sub->add_option("--split", o.split,
                    "dataset split (defaults: bsd500 test, voc2012 val, coco-stuff val)");
    sub->add_option("--limit", o.limit, "use only the first N items");
}

bool dataset_given(const InputOpts& o) {
    return o.dataset_opt != nullptr && o.dataset_opt->count() > 0;
}

std::string default_split(DatasetName name) {
    switch (name) {
        case DatasetName::BSD500: return "test";
        case DatasetName::VOC2012: return "val";
        case DatasetName::COCO_STUFF: return "val";
        case DatasetName::SYNTHETIC: return "";
    }
    return "";
}

struct Loaded {
    std::vector<ImageTensor> images;
    std::vector<GroundTruth> gts;  // parallel to images; empty variants = no gt
    bool has_gt = false;
};

Loaded load_inputs(const InputOpts& in) {
    Loaded out;
    if (!in.images.empty() && dataset_given(in))
        throw InvalidArgument("pass --image or --dataset, not both");
    if (!in.images.empty()) {
        for (const auto& path : in.images) {
            ImageTensor img = io::load_image(path);
            img.source_id = fs::path(path).stem().string();
            out.images.push_back(std::move(img));
            out.gts.emplace_back();
        }
        return out;
    }
    if (dataset_given(in)) {
        if (in.root.empty()) throw InvalidArgument("--dataset requires --root");
        const std::string split = in.split.empty() ? default_split(in.dataset) : in.split;
        const DatasetManifest manifest = load_manifest(in.dataset, in.root, split);
        size_t n = manifest.item_ids.size();
        if (in.limit > 0) n = std::min(n, static_cast<size_t>(in.limit));
        for (size_t i = 0; i < n; ++i) {
            auto [img, gt] = load_item(manifest, manifest.item_ids[i]);
            out.images.push_back(std::move(img));
            out.gts.push_back(std::move(gt));
        }
        out.has_gt = true;
        return out;
    }
    throw InvalidArgument("no inputs: pass --image or --dataset with --root");
}

// -- provenance echo ---------------------------------------------------------

using KvList = std::vector<std::pair<std::string, std::string>>;

KvList config_kv(const RunConfig& cfg) {
    KvList kv;
    kv.emplace_back("schedule", to_string(cfg.schedule));
    kv.emplace_back("alpha", fmt(cfg.effective_alpha()));
    kv.emplace_back("mu", fmt(cfg.fixed_mu));
    kv.emplace_back("iters", std::to_string(cfg.max_iters));
    kv.emplace_back("p", std::to_string(cfg.p));
    kv.emplace_back("q", std::to_string(cfg.q));
    kv.emplace_back("lr", fmt(cfg.lr));
    kv.emplace_back("momentum", fmt(cfg.momentum));
    kv.emplace_back("weight_decay", fmt(cfg.weight_decay));
    kv.emplace_back("backbone", to_string(cfg.backbone));
    kv.emplace_back("components", std::to_string(cfg.cnn_components));
    kv.emplace_back("fpn_width", std::to_string(cfg.fpn_width));
    kv.emplace_back("weights_path", cfg.weights_path);
    kv.emplace_back("allow_random_init", cfg.allow_random_init ? "true" : "false");
    kv.emplace_back("stop_mode",
                    cfg.stop_mode == StopMode::SILHOUETTE ? "silhouette" : "fixed_k");
    kv.emplace_back("threshold", std::to_string(cfg.fixed_threshold));
    kv.emplace_back("silhouette_enabled", cfg.silhouette.enabled ? "true" : "false");
    kv.emplace_back("silhouette_sample", std::to_string(cfg.silhouette.sample_size));
    kv.emplace_back("k_min", std::to_string(cfg.silhouette.k_min));
    kv.emplace_back("k_max", std::to_string(cfg.silhouette.k_max));
    kv.emplace_back("reduction", cfg.reduction == LossReduction::MEAN ? "mean" : "sum");
    kv.emplace_back("train_mode",
                    cfg.train_mode == TrainMode::PER_IMAGE ? "per_image" : "dataset");
    kv.emplace_back("seed", std::to_string(cfg.seed));
    return kv;
}

void write_effective_config(const fs::path& dir, const std::string& command, const KvList& kv) {
    std::ofstream out(dir / "effective_config.txt");
    if (!out) throw InvalidArgument("cannot write to output directory: " + dir.string());
    out << "command=" << command << "\n";
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

// -- segment -----------------------------------------------------------------

struct SegmentArgs {
    RunOpts run;
    InputOpts in;
    std::string out = "out";
    int jobs = 1;
};

int run_segment(const SegmentArgs& a) {
    const RunConfig cfg = resolve_config(a.run);
    Loaded loaded = load_inputs(a.in);

    const int resize = resolve_resize(a.run, cfg);
    const int n = static_cast<int>(loaded.images.size());
    std::vector<std::pair<int, int>> native_dims(n);
    for (int i = 0; i < n; ++i) {
        auto& img = loaded.images[i];
        native_dims[i] = {img.height, img.width};
        if (resize > 0) {
            const auto [oh, ow] = shorter_side_size(img.height, img.width, resize);
            img = resize_image(img, oh, ow);
        }
    }

    fs::create_directories(a.out);
    KvList kv = config_kv(cfg);
    kv.emplace_back("resize", std::to_string(resize));
    kv.emplace_back("jobs", std::to_string(a.jobs));
    kv.emplace_back("inputs", std::to_string(n));
    write_effective_config(a.out, "segment", kv);

    std::vector<std::vector<std::string>> log_lines(n);
    auto factory = [&log_lines](int i) -> IterCallback {
        return [&log_lines, i](int iter, const LossBreakdown& lb, int q_prime) {
            const json j{{"iter", iter},         {"q", q_prime},
                         {"mu", lb.mu},          {"loss_sim", lb.sim},
                         {"loss_con", lb.con},   {"loss_total", lb.total}};
            log_lines[i].push_back(j.dump());
        };
    };

    const BatchOutcome outcome = segment_batch(loaded.images, cfg, a.jobs, factory);

    const PaletteSpec palette = PaletteSpec::make();
    for (size_t k = 0; k < outcome.results.size(); ++k) {
        const SegmentationResult& r = outcome.results[k];
        const int i = outcome.result_indices[k];
        const ImageTensor& img = loaded.images[i];
        const std::string id = r.source_id.empty() ? "input-" + std::to_string(i) : r.source_id;

        // The raw label map goes out at native resolution so it lines up with
        // the ground truth even when training ran on a resized copy.
        LabelMap labels = r.final_labels;
        if (labels.height != native_dims[i].first || labels.width != native_dims[i].second)
            labels = resize_labels_nearest(labels, native_dims[i].first, native_dims[i].second);
        io::save_label_map((fs::path(a.out) / (id + ".labels.png")).string(), labels);

        PlaneMatrix overlay(img.pixels.rows(), 3);
        for (Eigen::Index px = 0; px < overlay.rows(); ++px) {
            const auto& color = palette.color_for(r.final_labels.labels[px]);
            for (int c = 0; c < 3; ++c)
                overlay(px, c) = 0.5 * img.pixels(px, c) + 0.5 * color[c] / 255.0;
        }
        io::save_rgb_image((fs::path(a.out) / (id + ".overlay.png")).string(), img.height,
                           img.width, overlay);

        std::ofstream log(fs::path(a.out) / (id + ".log.jsonl"));
        for (const auto& line : log_lines[i]) log << line << "\n";
        json done{{"event", "done"},
                  {"iters", r.state.iters},
                  {"stopped_by", to_string(r.state.stopped_by)},
                  {"clusters", r.final_labels.unique_count},
                  {"q_history", r.state.q_history},
                  {"wall_sec", r.wall_time_sec}};
        if (r.silhouette) done["opt_nC"] = r.silhouette->opt_nC;
        log << done.dump() << "\n";

        std::cout << id << ": clusters=" << r.final_labels.unique_count
                  << " iters=" << r.state.iters << " stop=" << to_string(r.state.stopped_by)
                  << " loss=" << fmt(r.state.loss_total) << "\n";
    }

    for (const auto& f : outcome.failures)
        std::cerr << "error: " << (f.source_id.empty() ? "input " + std::to_string(f.index)
                                                       : f.source_id)
                  << ": " << f.message << "\n";
    return outcome.failures.empty() ? 0 : 3;
}

// -- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string pred;
    InputOpts in;
    std::string out;
    int q_rows = 100;
};

int run_eval(const EvalArgs& a) {
    if (!dataset_given(a.in)) throw InvalidArgument("eval requires --dataset and --root");
    if (a.in.root.empty()) throw InvalidArgument("eval requires --root");
    const std::string split =
        a.in.split.empty() ? default_split(a.in.dataset) : a.in.split;
    const DatasetManifest manifest = load_manifest(a.in.dataset, a.in.root, split);

    std::vector<std::string> ids = manifest.item_ids;
    if (a.in.limit > 0 && static_cast<int>(ids.size()) > a.in.limit) ids.resize(a.in.limit);

    const fs::path out_dir = a.out.empty() ? fs::path(a.pred) / "eval" : fs::path(a.out);
    fs::create_directories(out_dir);

    std::vector<std::string> missing;
    json per_image = json::array();
    json report;
    report["dataset"] = to_string(manifest.name);
    report["split"] = split;

    auto pred_path = [&](const std::string& id) {
        return (fs::path(a.pred) / (id + ".labels.png")).string();
    };

    if (manifest.name == DatasetName::BSD500) {
        double all = 0, fine = 0, coarse = 0, mean = 0;
        int counted = 0;
        for (const auto& id : ids) {
            if (!fs::is_regular_file(pred_path(id))) {
                missing.push_back(id);
                continue;
            }
            const LabelMap pred = io::load_label_image(pred_path(id));
            const auto [img, gt] = load_item(manifest, id);
            const Bsd500Scores s = bsd500_scores(pred, gt.variants, gt.ignore_label);
            all += s.all;
            fine += s.fine;
            coarse += s.coarse;
            mean += s.mean;
            ++counted;
            per_image.push_back({{"id", id},
                                 {"all", s.all},
                                 {"fine", s.fine},
                                 {"coarse", s.coarse},
                                 {"mean", s.mean}});
        }
        if (counted == 0) throw EmptyEval("no predictions found under " + a.pred);
        all /= counted;
        fine /= counted;
        coarse /= counted;
        mean /= counted;
        report["protocol"] = "bsd500";
        report["n"] = counted;
        report["metrics"] = {{"all", all}, {"fine", fine}, {"coarse", coarse}, {"mean", mean}};
        std::cout << "BSD500 (" << counted << " images): All " << fmt(all) << "  Fine "
                  << fmt(fine) << "  Coarse " << fmt(coarse) << "  Mean " << fmt(mean) << "\n";
    } else if (manifest.name == DatasetName::COCO_STUFF) {
        ConfusionMatrix total;
        bool first = true;
        int counted = 0;
        for (const auto& id : ids) {
            if (!fs::is_regular_file(pred_path(id))) {
                missing.push_back(id);
                continue;
            }
            const LabelMap pred = io::load_label_image(pred_path(id));
            const auto [img, gt] = load_item(manifest, id);
            const ConfusionMatrix cm =
                confusion_fixed(pred, gt.variants[0], a.q_rows, 27, gt.ignore_label);
            if (first) {
                total = cm;
                first = false;
            } else {
                accumulate(total, cm);
            }
            ++counted;
        }
        if (first) throw EmptyEval("no predictions found under " + a.pred);
        const Assignment assign = hungarian_assign(total);
        const ClassSplit split_tbl = coco_class_split(total.gt_ids);
        const EvalReport rep = miou(total, assign, &split_tbl);
        report["protocol"] = "coco27";
        report["n"] = counted;
        report["metrics"] = json::parse(eval_report_json(rep));
        std::ofstream csv(out_dir / "per_class.csv");
        csv << per_class_csv(rep);
        std::cout << "COCO-27 (" << counted << " images): mIoU " << fmt(rep.miou_all)
                  << "  things " << fmt(rep.miou_things) << "  stuff " << fmt(rep.miou_stuff)
                  << "  pAcc " << fmt(rep.pixel_acc) << "\n";
    } else {
        // Per-image protocol: each prediction is matched to the labels present
        // in its own ground truth.
        double sum = 0;
        int counted = 0;
        for (const auto& id : ids) {
            if (!fs::is_regular_file(pred_path(id))) {
                missing.push_back(id);
                continue;
            }
            const LabelMap pred = io::load_label_image(pred_path(id));
            const auto [img, gt] = load_item(manifest, id);
            const ConfusionMatrix cm = confusion(pred, gt.variants[0], gt.ignore_label);
            const EvalReport rep = miou(cm, hungarian_assign(cm));
            sum += rep.miou_all;
            ++counted;
            per_image.push_back({{"id", id}, {"miou", rep.miou_all}});
        }
        if (counted == 0) throw EmptyEval("no predictions found under " + a.pred);
        report["protocol"] = "per_image";
        report["n"] = counted;
        report["metrics"] = {{"miou", sum / counted}};
        std::cout << to_string(manifest.name) << " (" << counted << " images): mIoU "
                  << fmt(sum / counted) << "\n";
    }

    report["missing"] = missing;
    if (!per_image.empty()) report["per_image"] = per_image;
    std::ofstream rj(out_dir / "report.json");
    rj << report.dump(2) << "\n";

    if (!missing.empty()) {
        std::cerr << "error: " << missing.size() << " prediction(s) missing, first: "
                  << missing.front() << "\n";
        return 2;
    }
    return 0;
}

// -- sweep -------------------------------------------------------------------

struct SweepArgs {
    RunOpts run;
    InputOpts in;
    std::vector<double> values;
    std::string out = "out";
    int jobs = 1;
};

double entity_miou(const LabelMap& pred, const GroundTruth& gt) {
    const ConfusionMatrix cm = confusion(pred, gt.variants[0], gt.ignore_label);
    return miou(cm, hungarian_assign(cm)).miou_all;
}

int run_sweep(const SweepArgs& a) {
    const RunConfig base = resolve_config(a.run);
    if (a.values.empty()) {
        std::cerr << "error: empty sweep grid\n";
        return 2;
    }

    Loaded loaded;
    if (a.in.images.empty() && !dataset_given(a.in)) {
        SyntheticSpec spec;
        spec.seed = base.seed;
        for (auto& [img, gt] : synthetic_corpus(spec)) {
            loaded.images.push_back(std::move(img));
            loaded.gts.push_back(std::move(gt));
        }
        loaded.has_gt = true;
    } else {
        loaded = load_inputs(a.in);
    }
    const int n = static_cast<int>(loaded.images.size());

    const int resize = resolve_resize(a.run, base);
    std::vector<std::pair<int, int>> native_dims(n);
    for (int i = 0; i < n; ++i) {
        auto& img = loaded.images[i];
        native_dims[i] = {img.height, img.width};
        if (resize > 0) {
            const auto [oh, ow] = shorter_side_size(img.height, img.width, resize);
            img = resize_image(img, oh, ow);
        }
    }

    fs::create_directories(a.out);
    KvList kv = config_kv(base);
    kv.emplace_back("jobs", std::to_string(a.jobs));
    kv.emplace_back("inputs", std::to_string(n));
    {
        std::string grid;
        for (double v : a.values) grid += (grid.empty() ? "" : " ") + fmt(v);
        kv.emplace_back("grid", grid);
    }
    write_effective_config(a.out, "sweep", kv);

    // Resume by key: rows already present in the CSV are skipped.
    const fs::path csv_path = fs::path(a.out) / "sweep.csv";
    std::set<std::string> done;
    const bool existed = fs::is_regular_file(csv_path);
    if (existed) {
        std::ifstream in(csv_path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            const auto c1 = line.find(',');
            if (c1 == std::string::npos) continue;
            const auto c2 = line.find(',', c1 + 1);
            if (c2 == std::string::npos) continue;
            done.insert(line.substr(0, c2));
        }
    }

    std::ofstream csv(csv_path, std::ios::app);
    if (!existed) csv << "schedule,value,images,failed,miou,mean_final_q,mean_final_loss,wall_sec\n";

    for (double v : a.values) {
        const std::string key = to_string(base.schedule) + "," + fmt(v);
        if (done.count(key)) {
            std::cout << key << ": already done, skipping\n";
            continue;
        }
        RunConfig cfg = base;
        if (cfg.schedule == ScheduleKind::FIXED)
            cfg.fixed_mu = v;
        else
            cfg.alpha = v;
        cfg.validate();

        const BatchOutcome outcome = segment_batch(loaded.images, cfg, a.jobs);

        double miou_sum = 0, q_sum = 0, loss_sum = 0, wall = 0;
        int scored = 0;
        for (size_t k = 0; k < outcome.results.size(); ++k) {
            const SegmentationResult& r = outcome.results[k];
            const int i = outcome.result_indices[k];
            if (loaded.has_gt && !loaded.gts[i].variants.empty()) {
                LabelMap pred = r.final_labels;
                const auto [nh, nw] = native_dims[i];
                if (pred.height != nh || pred.width != nw)
                    pred = resize_labels_nearest(pred, nh, nw);
                miou_sum += entity_miou(pred, loaded.gts[i]);
                ++scored;
            }
            q_sum += r.state.q_history.empty() ? 0 : r.state.q_history.back();
            loss_sum += r.state.loss_history.empty()
                            ? std::numeric_limits<double>::quiet_NaN()
                            : r.state.loss_total;
            wall += r.wall_time_sec;
        }
        const size_t ok = outcome.results.size();
        const size_t failed = outcome.failures.size();
        csv << key << "," << ok << "," << failed << ","
            << (scored > 0 ? fmt(miou_sum / scored) : "nan") << ","
            << (ok > 0 ? fmt(q_sum / ok) : "nan") << ","
            << (ok > 0 ? fmt(loss_sum / ok) : "nan") << "," << fmt(wall) << "\n";
        csv.flush();
        std::cout << key << ": images=" << ok << " failed=" << failed;
        if (scored > 0) std::cout << " miou=" << fmt(miou_sum / scored);
        std::cout << "\n";
    }
    return 0;
}

// -- synth -------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    int count = 5;
    int blocks = 3;
    int height = 64;
    int width = 64;
    double noise = 0.02;
    uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
    SyntheticSpec spec;
    spec.count = a.count;
    spec.blocks = a.blocks;
    spec.height = a.height;
    spec.width = a.width;
    spec.noise = a.noise;
    spec.seed = a.seed;
    const auto corpus = synthetic_corpus(spec);

    const fs::path images = fs::path(a.out) / "images";
    const fs::path labels = fs::path(a.out) / "labels";
    fs::create_directories(images);
    fs::create_directories(labels);
    for (const auto& [img, gt] : corpus) {
        io::save_rgb_image((images / (img.source_id + ".png")).string(), img.height, img.width,
                           img.pixels);
        io::save_label_map((labels / (img.source_id + ".png")).string(), gt.variants[0]);
    }

    KvList kv{{"count", std::to_string(a.count)},   {"blocks", std::to_string(a.blocks)},
              {"height", std::to_string(a.height)}, {"width", std::to_string(a.width)},
              {"noise", fmt(a.noise)},              {"seed", std::to_string(a.seed)}};
    write_effective_config(a.out, "synth", kv);
    std::cout << "wrote " << corpus.size() << " images to " << a.out << "\n";
    return 0;
}

// CLI11 only processes set_config on the app it parses directly, so a config
// attached to a subcommand never fires. Applied by hand instead: each file key
// fills its option only when the command line left it untouched.
void apply_config_file(CLI::App* sub, const std::string& path) {
    if (path.empty()) return;
    const CLI::ConfigTOML fmt;
    for (const CLI::ConfigItem& item : fmt.from_file(path)) {
        if (!item.parents.empty() || item.name == "++" || item.name == "--")
            throw InvalidArgument("config file " + path + ": sections are not supported");
        CLI::Option* op = sub->get_option_no_throw("--" + item.name);
        if (op == nullptr) op = sub->get_option_no_throw(item.name);
        if (op == nullptr)
            throw InvalidArgument("config file " + path + ": unknown key '" + item.name + "'");
        if (op->count() > 0) continue;
        if (op->get_expected_min() == 0) {
            const std::string raw = item.inputs.empty() ? std::string("true") : item.inputs.front();
            op->add_result(op->get_flag_value(item.name, raw));
        } else {
            for (const std::string& v : item.inputs) op->add_result(v);
        }
        op->run_callback();
    }
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"unsupervised segmentation with a dynamically weighted clustering loss"};
    app.require_subcommand(1);

    SegmentArgs seg_args;
    std::string seg_config, eval_config, sweep_config;
    CLI::App* seg = app.add_subcommand("segment", "optimize per-image clusters and write label maps");
    seg->add_option("--config", seg_config, "flat key=value config file (CLI flags win)");
    add_run_options(seg, seg_args.run);
    add_input_options(seg, seg_args.in);
    seg->add_option("--out", seg_args.out, "output directory");
    seg->add_option("--jobs", seg_args.jobs, "parallel image workers");

    EvalArgs eval_args;
    CLI::App* ev = app.add_subcommand("eval", "score label maps against dataset ground truth");
    ev->add_option("--config", eval_config, "flat key=value config file (CLI flags win)");
    ev->add_option("--pred", eval_args.pred, "directory of <id>.labels.png predictions")
        ->required();
    add_input_options(ev, eval_args.in);
    ev->add_option("--out", eval_args.out, "report directory (default <pred>/eval)");
    ev->add_option("--q", eval_args.q_rows, "prediction label range for the dataset-wide protocol");

    SweepArgs sweep_args;
    CLI::App* sw = app.add_subcommand("sweep", "run a grid of alpha (or fixed-mu) values");
    sw->add_option("--config", sweep_config, "flat key=value config file (CLI flags win)");
    add_run_options(sw, sweep_args.run);
    add_input_options(sw, sweep_args.in);
    sw->add_option("--values", sweep_args.values, "grid values (alpha, or mu when --schedule fixed)")
        ->required();
    sw->add_option("--out", sweep_args.out, "output directory");
    sw->add_option("--jobs", sweep_args.jobs, "parallel image workers");

    SynthArgs synth_args;
    CLI::App* sy = app.add_subcommand("synth", "write a synthetic stripe corpus to disk");
    sy->add_option("--out", synth_args.out, "corpus directory")->required();
    sy->add_option("--count", synth_args.count, "number of images");
    sy->add_option("--blocks", synth_args.blocks, "stripes per image");
    sy->add_option("--height", synth_args.height, "image height");
    sy->add_option("--width", synth_args.width, "image width");
    sy->add_option("--noise", synth_args.noise, "per-channel Gaussian sigma");
    sy->add_option("--seed", synth_args.seed, "corpus seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (seg->parsed()) {
            apply_config_file(seg, seg_config);
            return run_segment(seg_args);
        }
        if (ev->parsed()) {
            apply_config_file(ev, eval_config);
            return run_eval(eval_args);
        }
        if (sw->parsed()) {
            apply_config_file(sw, sweep_config);
            return run_sweep(sweep_args);
        }
        if (sy->parsed()) return run_synth(synth_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace dynaseg
