#include "dynaseg/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "dynaseg/errors.hpp"
#include "dynaseg/io/image_io.hpp"
#include "dynaseg/io/mat5.hpp"
#include "dynaseg/nn/layers.hpp"
#include "dynaseg/rng.hpp"

namespace fs = std::filesystem;

namespace dynaseg {

using io::load_image;
using io::load_label_image;
using io::read_bsd500_ground_truth;

namespace {

#include "coco_merge_table.inc"

constexpr int kCocoIgnore = 255;
constexpr int kVocIgnore = 255;

const char* const kVocClassNames[21] = {
    "background", "aeroplane", "bicycle",     "bird",  "boat",
    "bottle",     "bus",       "car",         "cat",   "chair",
    "cow",        "diningtable", "dog",       "horse", "motorbike",
    "person",     "pottedplant", "sheep",     "sofa",  "train",
    "tvmonitor",
};

const char* const kCocoCoarseNames[27] = {
    "accessory", "animal", "appliance", "electronic", "food", "furniture",
    "indoor", "kitchen", "outdoor", "person", "sports", "vehicle",
    "building", "ceiling", "floor", "food-stuff", "furniture-stuff",
    "ground", "plant", "rawmaterial", "sky", "solid", "structural",
    "textile", "wall", "water", "window",
};
constexpr int kCocoThings = 12;

std::string stem_of(const fs::path& p) { return p.stem().string(); }

std::vector<std::string> sorted_stems(const fs::path& dir, const std::string& ext) {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() == ext) out.push_back(stem_of(entry.path()));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> read_id_list(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw CorruptLayout("cannot read id list: " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string id;
        if (ss >> id) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

void require_dir(const fs::path& p, const std::string& what) {
    if (!fs::is_directory(p))
        throw CorruptLayout("missing " + what + " directory: " + p.string());
}

int expected_split_count(DatasetName name, const std::string& split, bool curated) {
    switch (name) {
        case DatasetName::BSD500:
            if (split == "test") return 200;
            if (split == "train") return 200;
            if (split == "val") return 100;
            return 0;
        case DatasetName::VOC2012:
            if (split == "trainval") return 2913;
            if (split == "train") return 1464;
            if (split == "val") return 1449;
            return 0;
        case DatasetName::COCO_STUFF:
            return curated ? 2175 : 0;
        default:
            return 0;
    }
}

void warn_on_count(const DatasetManifest& m) {
    if (m.expected_count > 0 &&
        static_cast<int>(m.item_ids.size()) != m.expected_count) {
        std::cerr << "warning: " << to_string(m.name) << " " << m.split
                  << ": found " << m.item_ids.size() << " items, expected "
                  << m.expected_count << "\n";
    }
}

int count_unique(const Eigen::VectorXi& labels) {
    std::set<int> seen(labels.data(), labels.data() + labels.size());
    return static_cast<int>(seen.size());
}

void require_same_shape(const ImageTensor& image, const LabelMap& labels,
                        const std::string& id) {
    if (labels.height != image.height || labels.width != image.width) {
        throw ShapeMismatch("ground truth for " + id + " is " +
                            std::to_string(labels.height) + "x" +
                            std::to_string(labels.width) + " but image is " +
                            std::to_string(image.height) + "x" +
                            std::to_string(image.width));
    }
}

}  // namespace

DatasetManifest load_manifest(DatasetName name, const std::string& root,
                              const std::string& split) {
    const fs::path base(root);
    if (!fs::is_directory(base)) throw MissingRoot("dataset root not found: " + root);

    DatasetManifest m;
    m.name = name;
    m.root = root;
    m.split = split;

    switch (name) {
        case DatasetName::BSD500: {
            const fs::path images = base / "images" / split;
            const fs::path gt = base / "groundTruth" / split;
            require_dir(images, "images/" + split);
            require_dir(gt, "groundTruth/" + split);
            m.item_ids = sorted_stems(images, ".jpg");
            m.expected_count = expected_split_count(name, split, false);
            break;
        }
        case DatasetName::VOC2012: {
            require_dir(base / "JPEGImages", "JPEGImages");
            require_dir(base / "SegmentationClass", "SegmentationClass");
            const fs::path list = base / "ImageSets" / "Segmentation" / (split + ".txt");
            if (!fs::is_regular_file(list))
                throw CorruptLayout("missing split list: " + list.string());
            m.item_ids = read_id_list(list);
            for (int c = 0; c < 21; ++c)
                m.class_table[c] = ClassInfo{kVocClassNames[c], c != 0};
            m.ignore_label = kVocIgnore;
            m.expected_count = expected_split_count(name, split, false);
            break;
        }
        case DatasetName::COCO_STUFF: {
            const fs::path images = base / "images" / split;
            const fs::path ann = base / "annotations" / split;
            require_dir(images, "images/" + split);
            require_dir(ann, "annotations/" + split);
            const fs::path subset = base / ("subset_" + split + ".txt");
            const bool curated = fs::is_regular_file(subset);
            m.item_ids = curated ? read_id_list(subset) : sorted_stems(images, ".jpg");
            m.class_table = coco_coarse_classes();
            m.merge_table = builtin_coco_merge_table();
            m.ignore_label = kCocoIgnore;
            m.expected_count = expected_split_count(name, split, curated);
            break;
        }
        case DatasetName::SYNTHETIC: {
            require_dir(base / "images", "images");
            require_dir(base / "labels", "labels");
            m.item_ids = sorted_stems(base / "images", ".png");
            break;
        }
    }
    if (m.item_ids.empty())
        throw CorruptLayout("no items found for " + to_string(name) + " " + split +
                            " under " + root);
    warn_on_count(m);
    return m;
}

std::pair<ImageTensor, GroundTruth> load_item(const DatasetManifest& manifest,
                                              const std::string& id) {
    const fs::path base(manifest.root);
    GroundTruth gt;
    ImageTensor image;
    switch (manifest.name) {
        case DatasetName::BSD500: {
            image = load_image((base / "images" / manifest.split / (id + ".jpg")).string());
            gt.variants = read_bsd500_ground_truth(
                (base / "groundTruth" / manifest.split / (id + ".mat")).string());
            break;
        }
        case DatasetName::VOC2012: {
            image = load_image((base / "JPEGImages" / (id + ".jpg")).string());
            gt.variants.push_back(
                load_label_image((base / "SegmentationClass" / (id + ".png")).string()));
            gt.ignore_label = kVocIgnore;
            break;
        }
        case DatasetName::COCO_STUFF: {
            image = load_image((base / "images" / manifest.split / (id + ".jpg")).string());
            LabelMap fine = load_label_image(
                (base / "annotations" / manifest.split / (id + ".png")).string());
            const auto& table =
                manifest.merge_table.empty() ? builtin_coco_merge_table() : manifest.merge_table;
            for (int idx = 0; idx < fine.labels.size(); ++idx) {
                const int f = fine.labels[idx];
                if (f == kCocoIgnore) continue;
                const auto it = table.find(f);
                if (it == table.end())
                    throw DecodeError("annotation for " + id + " has fine id " +
                                      std::to_string(f) + " with no coarse mapping");
                fine.labels[idx] = it->second;
            }
            fine.unique_count = count_unique(fine.labels);
            gt.variants.push_back(std::move(fine));
            gt.ignore_label = kCocoIgnore;
            break;
        }
        case DatasetName::SYNTHETIC: {
            image = load_image((base / "images" / (id + ".png")).string());
            gt.variants.push_back(load_label_image((base / "labels" / (id + ".png")).string()));
            break;
        }
    }
    image.source_id = id;
    for (const auto& variant : gt.variants) require_same_shape(image, variant, id);
    return {std::move(image), std::move(gt)};
}

std::map<int, int> load_merge_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open merge table: " + path);
    std::map<int, int> table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        long long fine = 0, coarse = 0;
        if (!(ss >> fine)) continue;  // blank or comment-only line
        std::string tail;
        if (!(ss >> coarse) || (ss >> tail) || fine < 0 || coarse < 0)
            throw CorruptLayout("merge table " + path + " line " +
                                std::to_string(line_no) + ": expected \"fine coarse\"");
        table[static_cast<int>(fine)] = static_cast<int>(coarse);
    }
    if (table.empty()) throw CorruptLayout("merge table " + path + " is empty");
    return table;
}

const std::map<int, int>& builtin_coco_merge_table() {
    static const std::map<int, int> table = [] {
        std::map<int, int> t;
        for (int fine = 0; fine < 182; ++fine) t[fine] = kCocoFineToCoarse[fine];
        return t;
    }();
    return table;
}

const std::map<int, ClassInfo>& coco_coarse_classes() {
    static const std::map<int, ClassInfo> table = [] {
        std::map<int, ClassInfo> t;
        for (int c = 0; c < 27; ++c) t[c] = ClassInfo{kCocoCoarseNames[c], c < kCocoThings};
        return t;
    }();
    return table;
}

ClassSplit coco_class_split(const std::vector<int>& gt_ids) {
    const auto& classes = coco_coarse_classes();
    ClassSplit split;
    split.is_thing.reserve(gt_ids.size());
    for (int id : gt_ids) {
        const auto it = classes.find(id);
        if (it == classes.end())
            throw InvalidArgument("unknown coarse class id " + std::to_string(id));
        split.is_thing.push_back(it->second.is_thing);
    }
    return split;
}

std::vector<std::pair<ImageTensor, GroundTruth>> synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.count < 1) throw InvalidSpec("synthetic count must be >= 1");
    if (spec.blocks < 1) throw InvalidSpec("synthetic blocks must be >= 1");
    if (spec.height < 2 || spec.width < spec.blocks)
        throw InvalidSpec("synthetic images must be at least 2 tall and one column per block wide");
    if (spec.noise < 0.0) throw InvalidSpec("synthetic noise must be >= 0");

    std::vector<std::pair<ImageTensor, GroundTruth>> out;
    out.reserve(spec.count);
    for (int idx = 0; idx < spec.count; ++idx) {
        Rng rng(derive_seed(spec.seed, "synth", static_cast<uint64_t>(idx)));
        const double hue_offset = rng.uniform(0.0, 1.0);
        std::vector<std::array<double, 3>> colors(spec.blocks);
        for (int b = 0; b < spec.blocks; ++b) {
            const double hue = std::fmod(hue_offset + static_cast<double>(b) / spec.blocks, 1.0);
            colors[b] = io::hsv_to_rgb(hue, 0.75, 0.9);
        }

        ImageTensor image;
        image.height = spec.height;
        image.width = spec.width;
        image.pixels.resize(spec.height * spec.width, 3);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth-%03d", idx);
        image.source_id = buf;

        LabelMap labels;
        labels.height = spec.height;
        labels.width = spec.width;
        labels.labels.resize(spec.height * spec.width);

        for (int i = 0; i < spec.height; ++i) {
            for (int j = 0; j < spec.width; ++j) {
                const int block = static_cast<int>(
                    static_cast<long long>(j) * spec.blocks / spec.width);
                const int row = flat_index(i, j, spec.width);
                labels.labels[row] = block;
                for (int ch = 0; ch < 3; ++ch) {
                    double v = colors[block][ch];
                    if (spec.noise > 0.0) v += rng.normal(0.0, spec.noise);
                    image.pixels(row, ch) = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        labels.unique_count = spec.blocks;

        GroundTruth gt;
        gt.variants.push_back(std::move(labels));
        out.emplace_back(std::move(image), std::move(gt));
    }
    return out;
}

std::pair<int, int> shorter_side_size(int height, int width, int target) {
    if (height < 1 || width < 1) throw InvalidArgument("image sides must be positive");
    if (target < 1) throw InvalidArgument("resize target must be positive");
    double scale;
    if (height <= width) {
        scale = static_cast<double>(target) / height;
        return {target, std::max(1, static_cast<int>(std::lround(width * scale)))};
    }
    scale = static_cast<double>(target) / width;
    return {std::max(1, static_cast<int>(std::lround(height * scale))), target};
}

ImageTensor resize_image(const ImageTensor& image, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InvalidArgument("resize target must be positive");
    ImageTensor out;
    out.height = out_h;
    out.width = out_w;
    out.source_id = image.source_id;
    if (out_h == image.height && out_w == image.width) {
        out.pixels = image.pixels;
        return out;
    }
    nn::Upsample up(nn::Interp::BILINEAR);
    nn::Tensor t(image.height, image.width, image.pixels);
    out.pixels = up.forward(t, out_h, out_w).m;
    return out;
}

LabelMap resize_labels_nearest(const LabelMap& labels, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InvalidArgument("resize target must be positive");
    LabelMap out;
    out.height = out_h;
    out.width = out_w;
    out.labels.resize(out_h * out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        const int iy = std::clamp(
            static_cast<int>(std::floor((oy + 0.5) * labels.height / out_h)), 0,
            labels.height - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            const int ix = std::clamp(
                static_cast<int>(std::floor((ox + 0.5) * labels.width / out_w)), 0,
                labels.width - 1);
            out.labels[flat_index(oy, ox, out_w)] = labels.at(iy, ix);
        }
    }
    out.unique_count = count_unique(out.labels);
    return out;
}

std::string to_string(DatasetName name) {
    switch (name) {
        case DatasetName::BSD500: return "bsd500";
        case DatasetName::VOC2012: return "voc2012";
        case DatasetName::COCO_STUFF: return "coco-stuff";
        case DatasetName::SYNTHETIC: return "synthetic";
    }
    return "unknown";
}

}  // namespace dynaseg
