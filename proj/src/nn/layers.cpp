#include "dynaseg/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dynaseg::nn {

namespace {
// Patch buffer budget per strip; keeps im2col memory bounded on large images.
constexpr Eigen::Index kStripBudgetBytes = 32ll << 20;
}

Conv2d::Conv2d(int in_c, int out_c, int kernel, int stride, int pad, bool bias)
    : in_c_(in_c), out_c_(out_c), kernel_(kernel), stride_(stride), pad_(pad), has_bias_(bias) {
    if (in_c < 1 || out_c < 1 || kernel < 1 || stride < 1 || pad < 0)
        throw InvalidSpec("Conv2d: bad layer spec");
    weight_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(in_c) * kernel * kernel, out_c);
    bias_ = Eigen::MatrixXd::Zero(has_bias_ ? out_c : 0, 1);
    dweight_ = Eigen::MatrixXd::Zero(weight_.rows(), weight_.cols());
    dbias_ = Eigen::MatrixXd::Zero(bias_.rows(), 1);
}

void Conv2d::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(weight_.rows()));
    for (Eigen::Index j = 0; j < weight_.cols(); ++j)
        for (Eigen::Index i = 0; i < weight_.rows(); ++i)
            weight_(i, j) = rng.uniform(-bound, bound);
    bias_.setZero();
}

void Conv2d::im2col_strip(const Tensor& x, int oy0, int oy1, Eigen::MatrixXd& patches) const {
    const int ow = out_size(x.w);
    patches.setZero();
    for (int ci = 0; ci < in_c_; ++ci) {
        for (int ky = 0; ky < kernel_; ++ky) {
            for (int kx = 0; kx < kernel_; ++kx) {
                const Eigen::Index col = (static_cast<Eigen::Index>(ci) * kernel_ + ky) * kernel_ + kx;
                for (int oy = oy0; oy < oy1; ++oy) {
                    const int iy = oy * stride_ - pad_ + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    const Eigen::Index prow_base = static_cast<Eigen::Index>(oy - oy0) * ow;
                    if (stride_ == 1) {
                        const int shift = kx - pad_;
                        const int ox_lo = std::max(0, -shift);
                        const int ox_hi = std::min(ow, x.w - shift);
                        if (ox_hi > ox_lo) {
                            patches.col(col).segment(prow_base + ox_lo, ox_hi - ox_lo) =
                                x.m.col(ci).segment(static_cast<Eigen::Index>(iy) * x.w + ox_lo + shift,
                                                    ox_hi - ox_lo);
                        }
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix < 0 || ix >= x.w) continue;
                            patches(prow_base + ox, col) = x.m(static_cast<Eigen::Index>(iy) * x.w + ix, ci);
                        }
                    }
                }
            }
        }
    }
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.c() != in_c_)
        throw ShapeMismatch("Conv2d: expected " + std::to_string(in_c_) + " input channels, got " +
                            std::to_string(x.c()));
    cached_input_ = x;
    const int oh = out_size(x.h), ow = out_size(x.w);
    Tensor y(oh, ow, out_c_);

    const Eigen::Index patch_cols = weight_.rows();
    const int strip = std::max<int>(1, static_cast<int>(kStripBudgetBytes / (static_cast<Eigen::Index>(ow) * patch_cols * 8 + 1)));
    Eigen::MatrixXd patches;
    for (int oy0 = 0; oy0 < oh; oy0 += strip) {
        const int oy1 = std::min(oh, oy0 + strip);
        patches.resize(static_cast<Eigen::Index>(oy1 - oy0) * ow, patch_cols);
        im2col_strip(x, oy0, oy1, patches);
        y.m.middleRows(static_cast<Eigen::Index>(oy0) * ow, static_cast<Eigen::Index>(oy1 - oy0) * ow).noalias() =
            patches * weight_;
    }
    if (has_bias_) y.m.rowwise() += bias_.col(0).transpose();
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = cached_input_;
    const int oh = out_size(x.h), ow = out_size(x.w);
    if (dy.h != oh || dy.w != ow || dy.c() != out_c_)
        throw ShapeMismatch("Conv2d::backward: upstream gradient shape mismatch");

    Tensor dx(x.h, x.w, in_c_);
    const Eigen::Index patch_cols = weight_.rows();
    const int strip = std::max<int>(1, static_cast<int>(kStripBudgetBytes / (static_cast<Eigen::Index>(ow) * patch_cols * 8 + 1)));
    Eigen::MatrixXd patches, dpatches;
    for (int oy0 = 0; oy0 < oh; oy0 += strip) {
        const int oy1 = std::min(oh, oy0 + strip);
        const Eigen::Index row0 = static_cast<Eigen::Index>(oy0) * ow;
        const Eigen::Index nrows = static_cast<Eigen::Index>(oy1 - oy0) * ow;
        patches.resize(nrows, patch_cols);
        im2col_strip(x, oy0, oy1, patches);
        const auto dy_strip = dy.m.middleRows(row0, nrows);
        dweight_.noalias() += patches.transpose() * dy_strip;
        dpatches.resize(nrows, patch_cols);
        dpatches.noalias() = dy_strip * weight_.transpose();

        // col2im: scatter-add the patch gradients back onto the input grid.
        for (int ci = 0; ci < in_c_; ++ci) {
            for (int ky = 0; ky < kernel_; ++ky) {
                for (int kx = 0; kx < kernel_; ++kx) {
                    const Eigen::Index col = (static_cast<Eigen::Index>(ci) * kernel_ + ky) * kernel_ + kx;
                    for (int oy = oy0; oy < oy1; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= x.h) continue;
                        const Eigen::Index prow_base = static_cast<Eigen::Index>(oy - oy0) * ow;
                        if (stride_ == 1) {
                            const int shift = kx - pad_;
                            const int ox_lo = std::max(0, -shift);
                            const int ox_hi = std::min(ow, x.w - shift);
                            if (ox_hi > ox_lo) {
                                dx.m.col(ci).segment(static_cast<Eigen::Index>(iy) * x.w + ox_lo + shift,
                                                     ox_hi - ox_lo) +=
                                    dpatches.col(col).segment(prow_base + ox_lo, ox_hi - ox_lo);
                            }
                        } else {
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix < 0 || ix >= x.w) continue;
                                dx.m(static_cast<Eigen::Index>(iy) * x.w + ix, ci) += dpatches(prow_base + ox, col);
                            }
                        }
                    }
                }
            }
        }
    }
    if (has_bias_) dbias_.col(0) += dy.m.colwise().sum().transpose();
    return dx;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<ParamSlot>& out) {
    out.push_back({prefix + ".weight", &weight_, &dweight_});
    if (has_bias_) out.push_back({prefix + ".bias", &bias_, &dbias_});
}

void Conv2d::zero_grad() {
    dweight_.setZero();
    dbias_.setZero();
}

void Conv2d::set_weights_from_oikk(const std::vector<double>& w) {
    const Eigen::Index expect = static_cast<Eigen::Index>(out_c_) * in_c_ * kernel_ * kernel_;
    if (static_cast<Eigen::Index>(w.size()) != expect)
        throw ShapeMismatch("Conv2d: weight blob has wrong element count");
    Eigen::Index idx = 0;
    for (int oc = 0; oc < out_c_; ++oc)
        for (int ci = 0; ci < in_c_; ++ci)
            for (int ky = 0; ky < kernel_; ++ky)
                for (int kx = 0; kx < kernel_; ++kx)
                    weight_((static_cast<Eigen::Index>(ci) * kernel_ + ky) * kernel_ + kx, oc) = w[idx++];
}

void Conv2d::set_bias(const std::vector<double>& b) {
    if (!has_bias_ || static_cast<int>(b.size()) != out_c_)
        throw ShapeMismatch("Conv2d: bias blob has wrong element count");
    for (int oc = 0; oc < out_c_; ++oc) bias_(oc, 0) = b[oc];
}

// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels, double eps) : channels_(channels), eps_(eps) {
    gamma_ = Eigen::MatrixXd::Ones(channels, 1);
    beta_ = Eigen::MatrixXd::Zero(channels, 1);
    dgamma_ = Eigen::MatrixXd::Zero(channels, 1);
    dbeta_ = Eigen::MatrixXd::Zero(channels, 1);
}

Tensor BatchNorm2d::forward(const Tensor& x) {
    if (x.c() != channels_) throw ShapeMismatch("BatchNorm2d: channel mismatch");
    const Eigen::Index n = x.m.rows();
    cached_h_ = x.h;
    cached_w_ = x.w;
    cached_xhat_.resize(n, channels_);
    cached_inv_std_.resize(channels_);
    Tensor y(x.h, x.w, channels_);
    for (int c = 0; c < channels_; ++c) {
        const double mean = x.m.col(c).mean();
        const double var = (x.m.col(c).array() - mean).square().sum() / static_cast<double>(n);
        const double inv_std = 1.0 / std::sqrt(var + eps_);
        cached_inv_std_(c) = inv_std;
        cached_xhat_.col(c) = (x.m.col(c).array() - mean) * inv_std;
        y.m.col(c) = cached_xhat_.col(c) * gamma_(c, 0) + Eigen::VectorXd::Constant(n, beta_(c, 0));
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    const Eigen::Index n = dy.m.rows();
    if (dy.c() != channels_ || n != cached_xhat_.rows())
        throw ShapeMismatch("BatchNorm2d::backward: shape mismatch");
    Tensor dx(cached_h_, cached_w_, channels_);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int c = 0; c < channels_; ++c) {
        const auto dyc = dy.m.col(c);
        const auto xhat = cached_xhat_.col(c);
        const double sum_dy = dyc.sum();
        const double sum_dy_xhat = dyc.dot(xhat);
        dgamma_(c, 0) += sum_dy_xhat;
        dbeta_(c, 0) += sum_dy;
        dx.m.col(c) = (gamma_(c, 0) * cached_inv_std_(c)) *
                      (dyc.array() - inv_n * sum_dy - xhat.array() * (inv_n * sum_dy_xhat));
    }
    return dx;
}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<ParamSlot>& out) {
    out.push_back({prefix + ".weight", &gamma_, &dgamma_});
    out.push_back({prefix + ".bias", &beta_, &dbeta_});
}

void BatchNorm2d::zero_grad() {
    dgamma_.setZero();
    dbeta_.setZero();
}

void BatchNorm2d::set_affine(const std::vector<double>& gamma, const std::vector<double>& beta) {
    if (static_cast<int>(gamma.size()) != channels_ || static_cast<int>(beta.size()) != channels_)
        throw ShapeMismatch("BatchNorm2d: affine blob has wrong element count");
    for (int c = 0; c < channels_; ++c) {
        gamma_(c, 0) = gamma[c];
        beta_(c, 0) = beta[c];
    }
}

// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x) {
    mask_ = (x.m.array() > 0.0).cast<double>();
    Tensor y(x.h, x.w, x.c());
    y.m = x.m.cwiseProduct(mask_);
    return y;
}

Tensor ReLU::backward(const Tensor& dy) const {
    Tensor dx(dy.h, dy.w, dy.c());
    dx.m = dy.m.cwiseProduct(mask_);
    return dx;
}

// ---------------------------------------------------------------------------

MaxPool2d::MaxPool2d(int kernel, int stride, int pad) : kernel_(kernel), stride_(stride), pad_(pad) {}

Tensor MaxPool2d::forward(const Tensor& x) {
    const int oh = out_size(x.h), ow = out_size(x.w);
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor y(oh, ow, x.c());
    argmax_.resize(static_cast<Eigen::Index>(oh) * ow, x.c());
    for (int c = 0; c < x.c(); ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                Eigen::Index best_idx = -1;
                for (int ky = 0; ky < kernel_; ++ky) {
                    const int iy = oy * stride_ - pad_ + ky;
                    if (iy < 0 || iy >= x.h) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        const int ix = ox * stride_ - pad_ + kx;
                        if (ix < 0 || ix >= x.w) continue;
                        const double v = x.m(static_cast<Eigen::Index>(iy) * x.w + ix, c);
                        if (v > best) {
                            best = v;
                            best_idx = static_cast<Eigen::Index>(iy) * x.w + ix;
                        }
                    }
                }
                const Eigen::Index orow = static_cast<Eigen::Index>(oy) * ow + ox;
                y.m(orow, c) = best_idx >= 0 ? best : 0.0;
                argmax_(orow, c) = static_cast<int>(best_idx);
            }
        }
    }
    return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) const {
    Tensor dx(in_h_, in_w_, dy.c());
    for (int c = 0; c < dy.c(); ++c) {
        for (Eigen::Index r = 0; r < dy.m.rows(); ++r) {
            const int idx = argmax_(r, c);
            if (idx >= 0) dx.m(idx, c) += dy.m(r, c);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------

Tensor Upsample::forward(const Tensor& x, int out_h, int out_w) {
    in_h_ = x.h;
    in_w_ = x.w;
    out_h_ = out_h;
    out_w_ = out_w;
    Tensor y(out_h, out_w, x.c());
    if (mode_ == Interp::NEAREST) {
        for (int oy = 0; oy < out_h; ++oy) {
            const int iy = std::min(in_h_ - 1, oy * in_h_ / out_h);
            for (int ox = 0; ox < out_w; ++ox) {
                const int ix = std::min(in_w_ - 1, ox * in_w_ / out_w);
                y.m.row(static_cast<Eigen::Index>(oy) * out_w + ox) =
                    x.m.row(static_cast<Eigen::Index>(iy) * in_w_ + ix);
            }
        }
        return y;
    }
    // Bilinear with half-pixel centers.
    const double sy = static_cast<double>(in_h_) / out_h;
    const double sx = static_cast<double>(in_w_) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        const double fy = (oy + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        const int y0c = std::clamp(y0, 0, in_h_ - 1);
        const int y1c = std::clamp(y0 + 1, 0, in_h_ - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            const double fx = (ox + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            const int x0c = std::clamp(x0, 0, in_w_ - 1);
            const int x1c = std::clamp(x0 + 1, 0, in_w_ - 1);
            y.m.row(static_cast<Eigen::Index>(oy) * out_w + ox) =
                (1.0 - wy) * (1.0 - wx) * x.m.row(static_cast<Eigen::Index>(y0c) * in_w_ + x0c) +
                (1.0 - wy) * wx * x.m.row(static_cast<Eigen::Index>(y0c) * in_w_ + x1c) +
                wy * (1.0 - wx) * x.m.row(static_cast<Eigen::Index>(y1c) * in_w_ + x0c) +
                wy * wx * x.m.row(static_cast<Eigen::Index>(y1c) * in_w_ + x1c);
        }
    }
    return y;
}

Tensor Upsample::backward(const Tensor& dy) const {
    if (dy.h != out_h_ || dy.w != out_w_) throw ShapeMismatch("Upsample::backward: shape mismatch");
    Tensor dx(in_h_, in_w_, dy.c());
    if (mode_ == Interp::NEAREST) {
        for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = std::min(in_h_ - 1, oy * in_h_ / out_h_);
            for (int ox = 0; ox < out_w_; ++ox) {
                const int ix = std::min(in_w_ - 1, ox * in_w_ / out_w_);
                dx.m.row(static_cast<Eigen::Index>(iy) * in_w_ + ix) +=
                    dy.m.row(static_cast<Eigen::Index>(oy) * out_w_ + ox);
            }
        }
        return dx;
    }
    const double sy = static_cast<double>(in_h_) / out_h_;
    const double sx = static_cast<double>(in_w_) / out_w_;
    for (int oy = 0; oy < out_h_; ++oy) {
        const double fy = (oy + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        const int y0c = std::clamp(y0, 0, in_h_ - 1);
        const int y1c = std::clamp(y0 + 1, 0, in_h_ - 1);
        for (int ox = 0; ox < out_w_; ++ox) {
            const double fx = (ox + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            const int x0c = std::clamp(x0, 0, in_w_ - 1);
            const int x1c = std::clamp(x0 + 1, 0, in_w_ - 1);
            const auto g = dy.m.row(static_cast<Eigen::Index>(oy) * out_w_ + ox);
            dx.m.row(static_cast<Eigen::Index>(y0c) * in_w_ + x0c) += (1.0 - wy) * (1.0 - wx) * g;
            dx.m.row(static_cast<Eigen::Index>(y0c) * in_w_ + x1c) += (1.0 - wy) * wx * g;
            dx.m.row(static_cast<Eigen::Index>(y1c) * in_w_ + x0c) += wy * (1.0 - wx) * g;
            dx.m.row(static_cast<Eigen::Index>(y1c) * in_w_ + x1c) += wy * wx * g;
        }
    }
    return dx;
}

}  // namespace dynaseg::nn
