#pragma once

#include <vector>

#include "dynaseg/nn/layers.hpp"

namespace dynaseg::nn {

/// SGD with momentum and decoupled-from-nothing weight decay (decay folded
/// into the gradient before the momentum update, matching the common
/// deep-learning convention):
///   g = grad + wd * theta
///   v = momentum * v + g      (v starts as g on the first step)
///   theta -= lr * v
class Sgd {
public:
    Sgd(double lr, double momentum, double weight_decay)
        : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

    // Rebinds to a parameter set and resets momentum buffers.
    void bind(std::vector<ParamSlot> slots);

    void step();

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, momentum_, weight_decay_;
    std::vector<ParamSlot> slots_;
    std::vector<Eigen::MatrixXd> velocity_;
    std::vector<bool> initialized_;
};

}  // namespace dynaseg::nn
