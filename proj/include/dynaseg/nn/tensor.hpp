#pragma once

#include <Eigen/Dense>
#include <string>

#include "dynaseg/errors.hpp"

namespace dynaseg::nn {

// Single-image feature map, stored as an (H*W) x C matrix: one column per
// channel (contiguous plane), row index = i*W + j. All layer math runs on
// this layout so convolutions reduce to GEMMs on channel blocks.
struct Tensor {
    int h = 0;
    int w = 0;
    Eigen::MatrixXd m;  // (h*w) x c

    Tensor() = default;
    Tensor(int h_, int w_, int c_) : h(h_), w(w_), m(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h_) * w_, c_)) {}
    Tensor(int h_, int w_, Eigen::MatrixXd mat) : h(h_), w(w_), m(std::move(mat)) {
        if (m.rows() != static_cast<Eigen::Index>(h) * w)
            throw ShapeMismatch("nn::Tensor: matrix rows must equal h*w");
    }

    int c() const { return static_cast<int>(m.cols()); }
    double& at(int i, int j, int ch) { return m(static_cast<Eigen::Index>(i) * w + j, ch); }
    double at(int i, int j, int ch) const { return m(static_cast<Eigen::Index>(i) * w + j, ch); }

    std::string shape_str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c());
    }
};

}  // namespace dynaseg::nn
