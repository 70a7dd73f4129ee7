#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dynaseg/nn/layers.hpp"
#include "dynaseg/rng.hpp"
#include "dynaseg/types.hpp"

namespace dynaseg {

/// M stride-1 conv components (conv -> ReLU -> batch-norm), all
/// resolution-preserving, followed by the 1x1 classifier head.
struct CnnBackboneSpec {
    int components = 3;        // M
    int channels = 100;        // p
    int out_channels = 100;    // q
    std::vector<int> kernels;  // per-component kernel size; empty = all 3x3

    int kernel_for(int idx) const {
        return idx < static_cast<int>(kernels.size()) ? kernels[idx] : 3;
    }
    // Closed-form trainable parameter count (backbone + head + head BN).
    long long expected_params() const;
    void validate() const;

    static CnnBackboneSpec from_config(const RunConfig& cfg);
};

/// 18-layer residual trunk (classifier head and global pooling absent) with a
/// fixed-width feature pyramid decoder; dense q-channel output at input
/// resolution.
struct ResNetFpnSpec {
    int width = 128;         // pyramid channel width (the p of this backbone)
    int out_channels = 100;  // q
    std::string weights_path;
    bool allow_random_init = true;
    UpsampleMode upsample = UpsampleMode::BILINEAR;

    void validate() const;

    static ResNetFpnSpec from_config(const RunConfig& cfg);
};

/// One segmentation network: backbone + linear classifier head + head
/// batch-norm. forward() produces the raw response; normalize() applies the
/// head batch-norm (the response-normalization step, kept inside the model so
/// its scale/shift stay in the gradient graph); backward() takes the gradient
/// w.r.t. the normalized response. One instance is owned by one trainer; no
/// concurrent forward/backward on the same instance.
class Model {
public:
    virtual ~Model() = default;

    // Seeded random initialization: fan-in-scaled conv weights, zero biases,
    // identity batch-norm affine.
    virtual void init(Rng& rng) = 0;

    // Raw (pre-normalization) response at input resolution.
    virtual ResponseMap forward(const ImageTensor& image) = 0;
    // Head batch-norm over the last forward's raw response.
    virtual ResponseMap normalize() = 0;
    // Backprop from the gradient w.r.t. the normalized response
    // ((H*W) x q plane matrix); accumulates parameter gradients.
    virtual void backward(const PlaneMatrix& d_normalized) = 0;

    virtual std::vector<nn::ParamSlot> params() = 0;
    virtual BackboneKind kind() const = 0;
    virtual int q() const = 0;

    void zero_grad();
    long long param_count();
};

class CnnModel : public Model {
public:
    explicit CnnModel(CnnBackboneSpec spec);

    void init(Rng& rng) override;
    ResponseMap forward(const ImageTensor& image) override;
    ResponseMap normalize() override;
    void backward(const PlaneMatrix& d_normalized) override;
    std::vector<nn::ParamSlot> params() override;
    BackboneKind kind() const override { return BackboneKind::CNN; }
    int q() const override { return spec_.out_channels; }

    // Backbone output of the last forward; lets tests compare the head's
    // response against the feature map directly.
    const nn::Tensor& last_features() const { return features_; }
    nn::Conv2d& head_conv() { return head_conv_; }

private:
    CnnBackboneSpec spec_;
    std::vector<nn::Conv2d> convs_;
    std::vector<nn::ReLU> relus_;
    std::vector<nn::BatchNorm2d> bns_;
    nn::Conv2d head_conv_;
    nn::BatchNorm2d head_bn_;
    nn::Tensor features_;  // backbone output cache
    nn::Tensor raw_;       // head conv output cache
    bool have_forward_ = false;
};

namespace detail {

/// Two 3x3 convs with batch-norm and a residual connection; the first conv
/// may stride and the skip may carry a 1x1 projection.
struct BasicBlock {
    BasicBlock(int in_c, int out_c, int stride);

    nn::Tensor forward(const nn::Tensor& x);
    nn::Tensor backward(const nn::Tensor& dy);
    void collect_params(const std::string& prefix, std::vector<nn::ParamSlot>& out);
    void init(Rng& rng);

    nn::Conv2d conv1, conv2;
    nn::BatchNorm2d bn1, bn2;
    nn::ReLU relu1, relu2;
    std::optional<nn::Conv2d> down_conv;
    std::optional<nn::BatchNorm2d> down_bn;
};

}  // namespace detail

class ResNetFpnModel : public Model {
public:
    explicit ResNetFpnModel(ResNetFpnSpec spec);

    void init(Rng& rng) override;
    ResponseMap forward(const ImageTensor& image) override;
    ResponseMap normalize() override;
    void backward(const PlaneMatrix& d_normalized) override;
    std::vector<nn::ParamSlot> params() override;
    BackboneKind kind() const override { return BackboneKind::RESNET_FPN; }
    int q() const override { return spec_.out_channels; }

    // Loads trunk weights from the named-tensor file written by
    // scripts/export_resnet18_weights.py. Decoder and head stay at their
    // current (randomly initialized) values. Throws WeightsUnavailable on a
    // missing file or missing tensor, ShapeMismatch on a bad blob.
    void load_trunk_weights(const std::string& path);

private:
    nn::Tensor trunk_and_pyramid(const nn::Tensor& x0);

    ResNetFpnSpec spec_;
    // trunk
    nn::Conv2d conv1_;
    nn::BatchNorm2d bn1_;
    nn::ReLU relu0_;
    nn::MaxPool2d pool_;
    std::vector<detail::BasicBlock> blocks_;  // layer1.0 .. layer4.1
    // pyramid
    nn::Conv2d lat2_, lat3_, lat4_, lat5_;
    nn::Conv2d smooth2_, smooth3_, smooth4_, smooth5_;
    nn::Upsample up_p4_, up_p3_, up_p2_;      // top-down pathway
    nn::Upsample up_s3_, up_s4_, up_s5_;      // merge to stride 4
    nn::Upsample up_resp_;                    // response to input resolution
    // head
    nn::Conv2d head_conv_;
    nn::BatchNorm2d head_bn_;

    nn::Tensor raw_;  // upsampled head output cache
    bool have_forward_ = false;
    int in_h_ = 0, in_w_ = 0;
};

// Documented parameter counts for the default configurations. The CNN count
// is exact; the residual+pyramid count is the exact count of this
// implementation at width 128, q=100, which sits within 2% of the published
// 12,046,272.
inline constexpr long long kCnnDefaultParams = 193'900;
inline constexpr long long kResNetFpnDefaultParams = 11'903'340;
inline constexpr long long kResNetFpnPublishedParams = 12'046'272;

std::unique_ptr<Model> build_cnn_backbone(const CnnBackboneSpec& spec, uint64_t seed);
std::unique_ptr<Model> build_resnet_fpn_backbone(const ResNetFpnSpec& spec, uint64_t seed);
// Dispatches on cfg.backbone; seeds weight init from derive_seed(cfg.seed, "weights").
std::unique_ptr<Model> build_model(const RunConfig& cfg);

}  // namespace dynaseg
