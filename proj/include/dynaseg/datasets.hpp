#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dynaseg/evaluation.hpp"
#include "dynaseg/types.hpp"

namespace dynaseg {

enum class DatasetName { BSD500, VOC2012, COCO_STUFF, SYNTHETIC };

struct ClassInfo {
    std::string name;
    bool is_thing = false;
};

struct GroundTruth {
    std::vector<LabelMap> variants;  // BSD500: one per annotator; others: one
    int ignore_label = -1;           // -1 = nothing ignored
};

/// Deterministic dataset index: sorted item ids plus the class metadata
/// needed for scoring. Count mismatches against the expected split size warn
/// on stderr but do not fail.
struct DatasetManifest {
    DatasetName name = DatasetName::SYNTHETIC;
    std::string root;
    std::string split;
    std::vector<std::string> item_ids;
    std::map<int, ClassInfo> class_table;  // empty for BSD500/SYNTHETIC (per-image entities)
    std::map<int, int> merge_table;        // COCO only: fine id -> coarse id
    int ignore_label = -1;
    int expected_count = 0;  // 0 = no expectation
};

/// Expected layouts (relative to root):
///   BSD500:     images/<split>/*.jpg, groundTruth/<split>/*.mat
///   VOC2012:    JPEGImages/, SegmentationClass/, ImageSets/Segmentation/<split>.txt
///   COCO_STUFF: images/<split>/*.jpg, annotations/<split>/*.png,
///               optional subset_<split>.txt pinning the curated id list
///   SYNTHETIC:  images/*.png, labels/*.png (as written by the synth command)
/// Throws MissingRoot when root is absent, CorruptLayout when the expected
/// structure is not there.
DatasetManifest load_manifest(DatasetName name, const std::string& root, const std::string& split);

std::pair<ImageTensor, GroundTruth> load_item(const DatasetManifest& manifest,
                                              const std::string& id);

/// Two-column text file "fine_id coarse_id" (# comments allowed). The repo
/// ships the pinned copy at data/coco_fine_to_coarse.txt; an identical table
/// is compiled in and used when no file is given.
std::map<int, int> load_merge_table(const std::string& path);
const std::map<int, int>& builtin_coco_merge_table();

/// The 27 coarse classes (12 things then 15 stuff).
const std::map<int, ClassInfo>& coco_coarse_classes();

/// Thing/stuff flags for the ground-truth columns of a COCO confusion matrix.
ClassSplit coco_class_split(const std::vector<int>& gt_ids);

struct SyntheticSpec {
    int count = 5;
    int blocks = 3;  // vertical stripes, each its own class
    int height = 64;
    int width = 64;
    double noise = 0.02;  // per-channel Gaussian sigma; 0 = exact flats
    uint64_t seed = 0;
};

/// Piecewise-constant stripe images with exact ground truth; deterministic
/// in (spec, seed).
std::vector<std::pair<ImageTensor, GroundTruth>> synthetic_corpus(const SyntheticSpec& spec);

// Resize helpers for the dataset-wide protocol: bilinear for images,
// center-aligned nearest for label maps.
std::pair<int, int> shorter_side_size(int height, int width, int target);
ImageTensor resize_image(const ImageTensor& image, int out_h, int out_w);
LabelMap resize_labels_nearest(const LabelMap& labels, int out_h, int out_w);

std::string to_string(DatasetName name);

}  // namespace dynaseg
