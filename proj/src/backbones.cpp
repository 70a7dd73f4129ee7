#include "dynaseg/backbones.hpp"

#include <utility>

#include "dynaseg/io/weights_io.hpp"

namespace dynaseg {

namespace {

nn::Interp to_interp(UpsampleMode m) {
    return m == UpsampleMode::BILINEAR ? nn::Interp::BILINEAR : nn::Interp::NEAREST;
}

// Channel statistics the pretrained trunk was trained with (RGB order).
constexpr double kImageNetMean[3] = {0.485, 0.456, 0.406};
constexpr double kImageNetStd[3] = {0.229, 0.224, 0.225};

}  // namespace

// ---------------------------------------------------------------------------
// specs

void CnnBackboneSpec::validate() const {
    if (components < 1) throw InvalidSpec("CnnBackboneSpec: M must be >= 1");
    if (channels < 1) throw InvalidSpec("CnnBackboneSpec: p must be >= 1");
    if (out_channels < 1) throw InvalidSpec("CnnBackboneSpec: q must be >= 1");
    for (int i = 0; i < components; ++i) {
        const int k = kernel_for(i);
        if (k < 1 || k % 2 == 0)
            throw InvalidSpec("CnnBackboneSpec: kernels must be odd so padding preserves resolution");
    }
}

long long CnnBackboneSpec::expected_params() const {
    long long total = 0;
    for (int i = 0; i < components; ++i) {
        const long long in_c = i == 0 ? 3 : channels;
        const long long k = kernel_for(i);
        total += in_c * channels * k * k + channels;  // conv weight + bias
        total += 2ll * channels;                      // batch-norm affine
    }
    total += static_cast<long long>(channels) * out_channels + out_channels;  // 1x1 head
    total += 2ll * out_channels;                                              // head batch-norm
    return total;
}

CnnBackboneSpec CnnBackboneSpec::from_config(const RunConfig& cfg) {
    CnnBackboneSpec s;
    s.components = cfg.cnn_components;
    s.channels = cfg.p;
    s.out_channels = cfg.q;
    return s;
}

void ResNetFpnSpec::validate() const {
    if (width < 1) throw InvalidSpec("ResNetFpnSpec: pyramid width must be >= 1");
    if (out_channels < 1) throw InvalidSpec("ResNetFpnSpec: q must be >= 1");
}

ResNetFpnSpec ResNetFpnSpec::from_config(const RunConfig& cfg) {
    ResNetFpnSpec s;
    s.width = cfg.fpn_width;
    s.out_channels = cfg.q;
    s.weights_path = cfg.weights_path;
    s.allow_random_init = cfg.allow_random_init;
    s.upsample = cfg.upsample;
    return s;
}

// ---------------------------------------------------------------------------
// Model base

void Model::zero_grad() {
    for (auto& slot : params()) slot.grad->setZero();
}

long long Model::param_count() {
    long long total = 0;
    for (auto& slot : params()) total += static_cast<long long>(slot.value->size());
    return total;
}

// ---------------------------------------------------------------------------
// CnnModel

CnnModel::CnnModel(CnnBackboneSpec spec)
    : spec_((spec.validate(), std::move(spec))),
      head_conv_(spec_.channels, spec_.out_channels, 1, 1, 0, true),
      head_bn_(spec_.out_channels) {
    convs_.reserve(spec_.components);
    for (int i = 0; i < spec_.components; ++i) {
        const int in_c = i == 0 ? 3 : spec_.channels;
        const int k = spec_.kernel_for(i);
        convs_.emplace_back(in_c, spec_.channels, k, 1, (k - 1) / 2, true);
        relus_.emplace_back();
        bns_.emplace_back(spec_.channels);
    }
}

void CnnModel::init(Rng& rng) {
    for (auto& c : convs_) c.init(rng);
    head_conv_.init(rng);
}

ResponseMap CnnModel::forward(const ImageTensor& image) {
    if (image.channels() != 3) throw ShapeMismatch("CnnModel::forward: expected a 3-channel image");
    nn::Tensor x(image.height, image.width, image.pixels);
    for (int i = 0; i < spec_.components; ++i) {
        x = convs_[i].forward(x);
        x = relus_[i].forward(x);
        x = bns_[i].forward(x);
    }
    features_ = x;
    raw_ = head_conv_.forward(x);
    have_forward_ = true;
    return ResponseMap(image.height, image.width, raw_.m, false);
}

ResponseMap CnnModel::normalize() {
    if (!have_forward_) throw InvalidArgument("CnnModel::normalize: no forward pass cached");
    nn::Tensor y = head_bn_.forward(raw_);
    return ResponseMap(raw_.h, raw_.w, std::move(y.m), true);
}

void CnnModel::backward(const PlaneMatrix& d_normalized) {
    if (!have_forward_) throw InvalidArgument("CnnModel::backward: no forward pass cached");
    nn::Tensor d(raw_.h, raw_.w, d_normalized);
    d = head_bn_.backward(d);
    d = head_conv_.backward(d);
    for (int i = spec_.components - 1; i >= 0; --i) {
        d = bns_[i].backward(d);
        d = relus_[i].backward(d);
        d = convs_[i].backward(d);
    }
}

std::vector<nn::ParamSlot> CnnModel::params() {
    std::vector<nn::ParamSlot> out;
    for (int i = 0; i < spec_.components; ++i) {
        const std::string prefix = "comp" + std::to_string(i + 1);
        convs_[i].collect_params(prefix + ".conv", out);
        bns_[i].collect_params(prefix + ".bn", out);
    }
    head_conv_.collect_params("head.conv", out);
    head_bn_.collect_params("head.bn", out);
    return out;
}

// ---------------------------------------------------------------------------
// BasicBlock

namespace detail {

BasicBlock::BasicBlock(int in_c, int out_c, int stride)
    : conv1(in_c, out_c, 3, stride, 1, false),
      conv2(out_c, out_c, 3, 1, 1, false),
      bn1(out_c),
      bn2(out_c) {
    if (stride != 1 || in_c != out_c) {
        down_conv.emplace(in_c, out_c, 1, stride, 0, false);
        down_bn.emplace(out_c);
    }
}

nn::Tensor BasicBlock::forward(const nn::Tensor& x) {
    nn::Tensor t = conv1.forward(x);
    t = bn1.forward(t);
    t = relu1.forward(t);
    t = conv2.forward(t);
    t = bn2.forward(t);
    if (down_conv) {
        nn::Tensor id = down_bn->forward(down_conv->forward(x));
        t.m += id.m;
    } else {
        t.m += x.m;
    }
    return relu2.forward(t);
}

nn::Tensor BasicBlock::backward(const nn::Tensor& dy) {
    nn::Tensor d = relu2.backward(dy);
    nn::Tensor dmain = bn2.backward(d);
    dmain = conv2.backward(dmain);
    dmain = relu1.backward(dmain);
    dmain = bn1.backward(dmain);
    dmain = conv1.backward(dmain);
    if (down_conv) {
        nn::Tensor did = down_bn->backward(d);
        did = down_conv->backward(did);
        dmain.m += did.m;
    } else {
        dmain.m += d.m;
    }
    return dmain;
}

void BasicBlock::collect_params(const std::string& prefix, std::vector<nn::ParamSlot>& out) {
    conv1.collect_params(prefix + ".conv1", out);
    bn1.collect_params(prefix + ".bn1", out);
    conv2.collect_params(prefix + ".conv2", out);
    bn2.collect_params(prefix + ".bn2", out);
    if (down_conv) {
        down_conv->collect_params(prefix + ".downsample.0", out);
        down_bn->collect_params(prefix + ".downsample.1", out);
    }
}

void BasicBlock::init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    if (down_conv) down_conv->init(rng);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ResNetFpnModel

ResNetFpnModel::ResNetFpnModel(ResNetFpnSpec spec)
    : spec_((spec.validate(), std::move(spec))),
      conv1_(3, 64, 7, 2, 3, false),
      bn1_(64),
      pool_(3, 2, 1),
      lat2_(64, spec_.width, 1, 1, 0, true),
      lat3_(128, spec_.width, 1, 1, 0, true),
      lat4_(256, spec_.width, 1, 1, 0, true),
      lat5_(512, spec_.width, 1, 1, 0, true),
      smooth2_(spec_.width, spec_.width, 3, 1, 1, true),
      smooth3_(spec_.width, spec_.width, 3, 1, 1, true),
      smooth4_(spec_.width, spec_.width, 3, 1, 1, true),
      smooth5_(spec_.width, spec_.width, 3, 1, 1, true),
      up_p4_(to_interp(spec_.upsample)),
      up_p3_(to_interp(spec_.upsample)),
      up_p2_(to_interp(spec_.upsample)),
      up_s3_(to_interp(spec_.upsample)),
      up_s4_(to_interp(spec_.upsample)),
      up_s5_(to_interp(spec_.upsample)),
      up_resp_(to_interp(spec_.upsample)),
      head_conv_(spec_.width, spec_.out_channels, 1, 1, 0, true),
      head_bn_(spec_.out_channels) {
    // layer1..layer4, two blocks each; first block of layers 2..4 strides.
    blocks_.reserve(8);
    blocks_.emplace_back(64, 64, 1);
    blocks_.emplace_back(64, 64, 1);
    blocks_.emplace_back(64, 128, 2);
    blocks_.emplace_back(128, 128, 1);
    blocks_.emplace_back(128, 256, 2);
    blocks_.emplace_back(256, 256, 1);
    blocks_.emplace_back(256, 512, 2);
    blocks_.emplace_back(512, 512, 1);
}

void ResNetFpnModel::init(Rng& rng) {
    conv1_.init(rng);
    for (auto& b : blocks_) b.init(rng);
    lat2_.init(rng);
    lat3_.init(rng);
    lat4_.init(rng);
    lat5_.init(rng);
    smooth2_.init(rng);
    smooth3_.init(rng);
    smooth4_.init(rng);
    smooth5_.init(rng);
    head_conv_.init(rng);
}

nn::Tensor ResNetFpnModel::trunk_and_pyramid(const nn::Tensor& x0) {
    nn::Tensor t = conv1_.forward(x0);
    t = bn1_.forward(t);
    t = relu0_.forward(t);
    t = pool_.forward(t);
    t = blocks_[0].forward(t);
    nn::Tensor c2 = blocks_[1].forward(t);
    t = blocks_[2].forward(c2);
    nn::Tensor c3 = blocks_[3].forward(t);
    t = blocks_[4].forward(c3);
    nn::Tensor c4 = blocks_[5].forward(t);
    t = blocks_[6].forward(c4);
    nn::Tensor c5 = blocks_[7].forward(t);

    nn::Tensor p5 = lat5_.forward(c5);
    nn::Tensor p4 = lat4_.forward(c4);
    p4.m += up_p4_.forward(p5, p4.h, p4.w).m;
    nn::Tensor p3 = lat3_.forward(c3);
    p3.m += up_p3_.forward(p4, p3.h, p3.w).m;
    nn::Tensor p2 = lat2_.forward(c2);
    p2.m += up_p2_.forward(p3, p2.h, p2.w).m;

    nn::Tensor f = smooth2_.forward(p2);
    f.m += up_s3_.forward(smooth3_.forward(p3), f.h, f.w).m;
    f.m += up_s4_.forward(smooth4_.forward(p4), f.h, f.w).m;
    f.m += up_s5_.forward(smooth5_.forward(p5), f.h, f.w).m;
    return f;
}

ResponseMap ResNetFpnModel::forward(const ImageTensor& image) {
    if (image.channels() != 3) throw ShapeMismatch("ResNetFpnModel::forward: expected a 3-channel image");
    nn::Tensor x0(image.height, image.width, image.pixels);
    for (int c = 0; c < 3; ++c)
        x0.m.col(c) = (x0.m.col(c).array() - kImageNetMean[c]) / kImageNetStd[c];

    nn::Tensor f = trunk_and_pyramid(x0);
    nn::Tensor r4 = head_conv_.forward(f);
    raw_ = up_resp_.forward(r4, image.height, image.width);
    in_h_ = image.height;
    in_w_ = image.width;
    have_forward_ = true;
    return ResponseMap(image.height, image.width, raw_.m, false);
}

ResponseMap ResNetFpnModel::normalize() {
    if (!have_forward_) throw InvalidArgument("ResNetFpnModel::normalize: no forward pass cached");
    nn::Tensor y = head_bn_.forward(raw_);
    return ResponseMap(in_h_, in_w_, std::move(y.m), true);
}

void ResNetFpnModel::backward(const PlaneMatrix& d_normalized) {
    if (!have_forward_) throw InvalidArgument("ResNetFpnModel::backward: no forward pass cached");
    nn::Tensor d(in_h_, in_w_, d_normalized);
    d = head_bn_.backward(d);
    d = up_resp_.backward(d);
    nn::Tensor df = head_conv_.backward(d);

    nn::Tensor ds3 = up_s3_.backward(df);
    nn::Tensor ds4 = up_s4_.backward(df);
    nn::Tensor ds5 = up_s5_.backward(df);

    nn::Tensor dp2 = smooth2_.backward(df);
    nn::Tensor dp3 = smooth3_.backward(ds3);
    dp3.m += up_p2_.backward(dp2).m;
    nn::Tensor dp4 = smooth4_.backward(ds4);
    dp4.m += up_p3_.backward(dp3).m;
    nn::Tensor dp5 = smooth5_.backward(ds5);
    dp5.m += up_p4_.backward(dp4).m;

    nn::Tensor dtrunk = blocks_[7].backward(lat5_.backward(dp5));
    dtrunk = blocks_[6].backward(dtrunk);
    dtrunk.m += lat4_.backward(dp4).m;
    dtrunk = blocks_[5].backward(dtrunk);
    dtrunk = blocks_[4].backward(dtrunk);
    dtrunk.m += lat3_.backward(dp3).m;
    dtrunk = blocks_[3].backward(dtrunk);
    dtrunk = blocks_[2].backward(dtrunk);
    dtrunk.m += lat2_.backward(dp2).m;
    dtrunk = blocks_[1].backward(dtrunk);
    dtrunk = blocks_[0].backward(dtrunk);
    dtrunk = pool_.backward(dtrunk);
    dtrunk = relu0_.backward(dtrunk);
    dtrunk = bn1_.backward(dtrunk);
    conv1_.backward(dtrunk);
}

std::vector<nn::ParamSlot> ResNetFpnModel::params() {
    std::vector<nn::ParamSlot> out;
    conv1_.collect_params("conv1", out);
    bn1_.collect_params("bn1", out);
    static const char* kLayerNames[4] = {"layer1", "layer2", "layer3", "layer4"};
    for (int i = 0; i < 8; ++i) {
        const std::string prefix = std::string(kLayerNames[i / 2]) + "." + std::to_string(i % 2);
        blocks_[i].collect_params(prefix, out);
    }
    lat2_.collect_params("fpn.lateral2", out);
    lat3_.collect_params("fpn.lateral3", out);
    lat4_.collect_params("fpn.lateral4", out);
    lat5_.collect_params("fpn.lateral5", out);
    smooth2_.collect_params("fpn.smooth2", out);
    smooth3_.collect_params("fpn.smooth3", out);
    smooth4_.collect_params("fpn.smooth4", out);
    smooth5_.collect_params("fpn.smooth5", out);
    head_conv_.collect_params("head.conv", out);
    head_bn_.collect_params("head.bn", out);
    return out;
}

void ResNetFpnModel::load_trunk_weights(const std::string& path) {
    const io::TensorFile file = io::load_tensor_file(path);
    auto get = [&](const std::string& name) -> const io::NamedTensor& {
        auto it = file.find(name);
        if (it == file.end())
            throw WeightsUnavailable("tensor file " + path + " is missing " + name);
        return it->second;
    };
    auto load_conv = [&](nn::Conv2d& conv, const std::string& name) {
        conv.set_weights_from_oikk(get(name + ".weight").data);
    };
    auto load_bn = [&](nn::BatchNorm2d& bn, const std::string& name) {
        // Running statistics in the file are ignored: every batch-norm runs on
        // per-image statistics here, so only the affine terms transfer.
        bn.set_affine(get(name + ".weight").data, get(name + ".bias").data);
    };

    load_conv(conv1_, "conv1");
    load_bn(bn1_, "bn1");
    static const char* kLayerNames[4] = {"layer1", "layer2", "layer3", "layer4"};
    for (int i = 0; i < 8; ++i) {
        const std::string prefix = std::string(kLayerNames[i / 2]) + "." + std::to_string(i % 2);
        auto& b = blocks_[i];
        load_conv(b.conv1, prefix + ".conv1");
        load_bn(b.bn1, prefix + ".bn1");
        load_conv(b.conv2, prefix + ".conv2");
        load_bn(b.bn2, prefix + ".bn2");
        if (b.down_conv) {
            load_conv(*b.down_conv, prefix + ".downsample.0");
            load_bn(*b.down_bn, prefix + ".downsample.1");
        }
    }
}

// ---------------------------------------------------------------------------
// factories

std::unique_ptr<Model> build_cnn_backbone(const CnnBackboneSpec& spec, uint64_t seed) {
    auto model = std::make_unique<CnnModel>(spec);
    Rng rng(derive_seed(seed, "weights"));
    model->init(rng);
    return model;
}

std::unique_ptr<Model> build_resnet_fpn_backbone(const ResNetFpnSpec& spec, uint64_t seed) {
    auto model = std::make_unique<ResNetFpnModel>(spec);
    Rng rng(derive_seed(seed, "weights"));
    model->init(rng);
    if (!spec.weights_path.empty()) {
        try {
            model->load_trunk_weights(spec.weights_path);
        } catch (const WeightsUnavailable&) {
            if (!spec.allow_random_init) throw;
        }
    } else if (!spec.allow_random_init) {
        throw WeightsUnavailable("no pretrained weights configured and random init not allowed");
    }
    return model;
}

std::unique_ptr<Model> build_model(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.backbone == BackboneKind::CNN)
        return build_cnn_backbone(CnnBackboneSpec::from_config(cfg), cfg.seed);
    return build_resnet_fpn_backbone(ResNetFpnSpec::from_config(cfg), cfg.seed);
}

}  // namespace dynaseg
