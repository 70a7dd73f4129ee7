#pragma once

#include <string>
#include <vector>

#include "dynaseg/nn/tensor.hpp"
#include "dynaseg/rng.hpp"

namespace dynaseg::nn {

// A named view onto one parameter matrix and its gradient. Layers own the
// storage; optimizers and parameter counting work through these slots.
struct ParamSlot {
    std::string name;
    Eigen::MatrixXd* value = nullptr;
    Eigen::MatrixXd* grad = nullptr;
};

/// 2D convolution on single-image tensors, im2col + GEMM, processed in
/// output-row strips so patch buffers stay bounded on large images.
class Conv2d {
public:
    Conv2d(int in_c, int out_c, int kernel, int stride, int pad, bool bias);

    // Fan-in scaled uniform init for weights, zero biases.
    void init(Rng& rng);

    Tensor forward(const Tensor& x);
    // Returns grad w.r.t. input; accumulates weight/bias grads.
    Tensor backward(const Tensor& dy);

    void collect_params(const std::string& prefix, std::vector<ParamSlot>& out);
    void zero_grad();

    int out_size(int in) const { return (in + 2 * pad_ - kernel_) / stride_ + 1; }

    int in_c() const { return in_c_; }
    int out_c() const { return out_c_; }
    int kernel() const { return kernel_; }

    // Row-major torch layout [out][in][ky][kx]; used by the weight loader.
    void set_weights_from_oikk(const std::vector<double>& w);
    void set_bias(const std::vector<double>& b);

    Eigen::MatrixXd& weight() { return weight_; }
    Eigen::MatrixXd& bias() { return bias_; }

private:
    void im2col_strip(const Tensor& x, int oy0, int oy1, Eigen::MatrixXd& patches) const;

    int in_c_, out_c_, kernel_, stride_, pad_;
    bool has_bias_;
    Eigen::MatrixXd weight_;   // (in_c*k*k) x out_c, row = (ci*k + ky)*k + kx
    Eigen::MatrixXd bias_;     // out_c x 1
    Eigen::MatrixXd dweight_, dbias_;
    Tensor cached_input_;
};

/// Batch normalization over the spatial positions of a single image
/// (training statistics every call; population variance).
class BatchNorm2d {
public:
    explicit BatchNorm2d(int channels, double eps = 1e-5);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

    void collect_params(const std::string& prefix, std::vector<ParamSlot>& out);
    void zero_grad();

    void set_affine(const std::vector<double>& gamma, const std::vector<double>& beta);

private:
    int channels_;
    double eps_;
    Eigen::MatrixXd gamma_, beta_;    // c x 1
    Eigen::MatrixXd dgamma_, dbeta_;
    Eigen::MatrixXd cached_xhat_;     // (h*w) x c
    Eigen::VectorXd cached_inv_std_;  // c
    int cached_h_ = 0, cached_w_ = 0;
};

class ReLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    Eigen::MatrixXd mask_;
};

/// Max pooling with argmax bookkeeping for the backward scatter.
class MaxPool2d {
public:
    MaxPool2d(int kernel, int stride, int pad);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

    int out_size(int in) const { return (in + 2 * pad_ - kernel_) / stride_ + 1; }

private:
    int kernel_, stride_, pad_;
    Eigen::MatrixXi argmax_;  // (oh*ow) x c, flat input row index of the max
    int in_h_ = 0, in_w_ = 0;
};

enum class Interp { BILINEAR, NEAREST };

/// Resize to an explicit target size (half-pixel centers for bilinear).
/// Stateless apart from the cached source size needed by backward.
class Upsample {
public:
    explicit Upsample(Interp mode) : mode_(mode) {}

    Tensor forward(const Tensor& x, int out_h, int out_w);
    Tensor backward(const Tensor& dy) const;

private:
    Interp mode_;
    int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

}  // namespace dynaseg::nn
