#pragma once

#include <map>
#include <string>
#include <vector>

#include "dynaseg/types.hpp"

namespace dynaseg::io {

/// One MATLAB level-5 variable, decoded into the few shapes the dataset
/// loaders need. Numeric arrays are 2-D, column-major, widened to double.
struct MatVar {
    enum class Kind { NUMERIC, CHAR, CELL, STRUCT, OTHER };

    Kind kind = Kind::OTHER;
    std::string name;
    std::vector<int> dims;
    Eigen::MatrixXd numeric;                             // NUMERIC: dims[0] x dims[1]
    std::string text;                                    // CHAR, best effort
    std::vector<MatVar> cells;                           // CELL, column-major order
    std::vector<std::map<std::string, MatVar>> structs;  // STRUCT, one map per element
};

/// Little-endian level-5 files, plain or zlib-compressed elements.
/// Throws DecodeError on anything malformed.
std::vector<MatVar> read_mat5(const std::string& path);

/// The segmentation variants of one BSD500 annotation file: the
/// `groundTruth` cell array's per-annotator Segmentation matrices, remapped
/// to dense zero-based labels.
std::vector<LabelMap> read_bsd500_ground_truth(const std::string& path);

}  // namespace dynaseg::io
