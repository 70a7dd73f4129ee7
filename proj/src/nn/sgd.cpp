#include "dynaseg/nn/sgd.hpp"

namespace dynaseg::nn {

void Sgd::bind(std::vector<ParamSlot> slots) {
    slots_ = std::move(slots);
    velocity_.assign(slots_.size(), Eigen::MatrixXd());
    initialized_.assign(slots_.size(), false);
}

void Sgd::step() {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        auto& slot = slots_[i];
        Eigen::MatrixXd g = *slot.grad;
        if (weight_decay_ != 0.0) g.noalias() += weight_decay_ * (*slot.value);
        if (momentum_ != 0.0) {
            if (!initialized_[i]) {
                velocity_[i] = g;
                initialized_[i] = true;
            } else {
                velocity_[i] = momentum_ * velocity_[i] + g;
            }
            *slot.value -= lr_ * velocity_[i];
        } else {
            *slot.value -= lr_ * g;
        }
    }
}

}  // namespace dynaseg::nn
