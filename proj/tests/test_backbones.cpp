#include <cmath>
#include <random>

#include "doctest.h"
#include "dynaseg/backbones.hpp"
#include "dynaseg/io/weights_io.hpp"
#include "support.hpp"

using namespace dynaseg;

namespace {

// Closed-form parameter count, written out independently of the model code:
// trainable weights of an 18-layer residual trunk (no classifier, no running
// stats) plus a width-w pyramid decoder and a q-channel head.
long long fpn_param_oracle(int width, int q) {
    auto conv = [](long long in, long long out, long long k, bool bias) {
        return in * out * k * k + (bias ? out : 0);
    };
    auto bn = [](long long c) { return 2 * c; };
    auto block = [&](long long in, long long out, bool down) {
        long long t = conv(in, out, 3, false) + bn(out) + conv(out, out, 3, false) + bn(out);
        if (down) t += conv(in, out, 1, false) + bn(out);
        return t;
    };
    long long total = conv(3, 64, 7, false) + bn(64);
    total += 2 * block(64, 64, false);
    total += block(64, 128, true) + block(128, 128, false);
    total += block(128, 256, true) + block(256, 256, false);
    total += block(256, 512, true) + block(512, 512, false);
    for (long long c : {64, 128, 256, 512}) total += conv(c, width, 1, true);
    total += 4 * conv(width, width, 3, true);
    total += conv(width, q, 1, true) + bn(q);
    return total;
}

long long cnn_param_oracle(int m, int p, int q) {
    long long total = 0;
    for (int i = 0; i < m; ++i) total += (i == 0 ? 3ll : p) * p * 9 + p + 2ll * p;
    return total + static_cast<long long>(p) * q + q + 2ll * q;
}

PlaneMatrix random_grad(int h, int w, int q, uint32_t seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    PlaneMatrix g(static_cast<Eigen::Index>(h) * w, q);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = dist(gen);
    return g;
}

// A complete trunk tensor file with near-identity batch norms and small
// deterministic conv kernels.
io::TensorFile make_trunk_file() {
    io::TensorFile file;
    uint64_t tick = 0;
    auto conv = [&](const std::string& name, uint64_t out, uint64_t in, uint64_t k) {
        io::NamedTensor t;
        t.dims = {out, in, k, k};
        t.data.resize(out * in * k * k);
        for (auto& v : t.data) v = 0.05 * std::sin(static_cast<double>(++tick));
        file[name + ".weight"] = std::move(t);
    };
    auto bn = [&](const std::string& name, uint64_t c) {
        io::NamedTensor w, b;
        w.dims = {c};
        b.dims = {c};
        w.data.assign(c, 1.0);
        b.data.resize(c);
        for (auto& v : b.data) v = 0.01 * std::cos(static_cast<double>(++tick));
        file[name + ".weight"] = std::move(w);
        file[name + ".bias"] = std::move(b);
    };
    conv("conv1", 64, 3, 7);
    bn("bn1", 64);
    struct B {
        const char* prefix;
        uint64_t in, out;
        bool down;
    };
    const B layout[] = {
        {"layer1.0", 64, 64, false},   {"layer1.1", 64, 64, false},
        {"layer2.0", 64, 128, true},   {"layer2.1", 128, 128, false},
        {"layer3.0", 128, 256, true},  {"layer3.1", 256, 256, false},
        {"layer4.0", 256, 512, true},  {"layer4.1", 512, 512, false},
    };
    for (const B& blk : layout) {
        const std::string p = blk.prefix;
        conv(p + ".conv1", blk.out, blk.in, 3);
        bn(p + ".bn1", blk.out);
        conv(p + ".conv2", blk.out, blk.out, 3);
        bn(p + ".bn2", blk.out);
        if (blk.down) {
            conv(p + ".downsample.0", blk.out, blk.in, 1);
            bn(p + ".downsample.1", blk.out);
        }
    }
    return file;
}

}  // namespace

TEST_CASE("default compact backbone has exactly 193,900 trainable parameters") {
    CnnBackboneSpec spec;
    CHECK(spec.expected_params() == 193'900);
    CHECK(spec.expected_params() == kCnnDefaultParams);
    CHECK(spec.expected_params() == cnn_param_oracle(3, 100, 100));

    auto model = build_cnn_backbone(spec, 0);
    CHECK(model->param_count() == 193'900);
}

TEST_CASE("single-component backbone counts out by hand") {
    // conv 3->4 (112) + bn (8) = 120, head 1x1 4->4 (20) + head bn (8) = 148.
    CnnBackboneSpec spec;
    spec.components = 1;
    spec.channels = 4;
    spec.out_channels = 4;
    CHECK(spec.expected_params() == 148);
    auto model = build_cnn_backbone(spec, 1);
    CHECK(model->param_count() == 148);
}

TEST_CASE("residual+pyramid default lands within 2% of 12,046,272") {
    ResNetFpnSpec spec;
    auto model = build_resnet_fpn_backbone(spec, 0);
    const long long n = model->param_count();
    CHECK(n == kResNetFpnDefaultParams);
    CHECK(n == fpn_param_oracle(128, 100));
    const double rel =
        std::abs(static_cast<double>(n - kResNetFpnPublishedParams)) / kResNetFpnPublishedParams;
    CHECK(rel <= 0.02);
}

TEST_CASE("narrow pyramid width still matches the closed form") {
    ResNetFpnSpec spec;
    spec.width = 8;
    spec.out_channels = 4;
    auto model = build_resnet_fpn_backbone(spec, 3);
    CHECK(model->param_count() == fpn_param_oracle(8, 4));
}

TEST_CASE("compact backbone preserves resolution at both parities") {
    CnnBackboneSpec spec;
    spec.components = 2;
    spec.channels = 6;
    spec.out_channels = 5;
    auto model = build_cnn_backbone(spec, 5);
    for (auto [h, w] : {std::pair{8, 8}, {9, 13}, {31, 32}, {2, 256}}) {
        ImageTensor img = testsup::random_image(h, w, static_cast<uint32_t>(h * 1000 + w));
        ResponseMap r = model->forward(img);
        CHECK(r.height == h);
        CHECK(r.width == w);
        CHECK(r.q == 5);
        CHECK(r.pixel_count() == static_cast<Eigen::Index>(h) * w);
        CHECK_FALSE(r.normalized);
    }
}

TEST_CASE("pyramid backbone returns input-resolution responses") {
    ResNetFpnSpec spec;
    spec.width = 8;
    spec.out_channels = 4;
    auto model = build_resnet_fpn_backbone(spec, 7);
    for (auto [h, w] : {std::pair{16, 16}, {33, 47}}) {
        ImageTensor img = testsup::random_image(h, w, static_cast<uint32_t>(h * 100 + w));
        ResponseMap r = model->forward(img);
        CHECK(r.height == h);
        CHECK(r.width == w);
        CHECK(r.q == 4);
    }
}

TEST_CASE("pyramid backbone handles the standard 224x224 input") {
    ResNetFpnSpec spec;
    spec.width = 16;
    spec.out_channels = 8;
    auto model = build_resnet_fpn_backbone(spec, 11);
    ImageTensor img = testsup::random_image(224, 224, 2024);
    ResponseMap r = model->forward(img);
    CHECK(r.height == 224);
    CHECK(r.width == 224);
    CHECK(r.q == 8);
    CHECK(r.values.allFinite());
}

TEST_CASE("a zeroed head silences the response") {
    CnnBackboneSpec spec;
    spec.channels = 5;
    spec.out_channels = 4;
    CnnModel model(spec);
    Rng rng(13);
    model.init(rng);
    model.head_conv().weight().setZero();
    model.head_conv().bias().setZero();
    ImageTensor img = testsup::random_image(6, 6, 77);
    ResponseMap raw = model.forward(img);
    CHECK(raw.values.cwiseAbs().maxCoeff() == 0.0);
    // Head batch-norm of a dead map stays dead.
    CHECK(model.normalize().values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("an identity head passes the backbone features through") {
    CnnBackboneSpec spec;
    spec.channels = 3;
    spec.out_channels = 3;
    CnnModel model(spec);
    Rng rng(17);
    model.init(rng);
    model.head_conv().weight() = Eigen::MatrixXd::Identity(3, 3);
    model.head_conv().bias().setZero();
    ImageTensor img = testsup::random_image(5, 7, 88);
    ResponseMap raw = model.forward(img);
    CHECK((raw.values - model.last_features().m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward refuses non-RGB input") {
    ImageTensor bad;  // assembled by hand to dodge the validating constructor
    bad.height = 4;
    bad.width = 4;
    bad.pixels = PlaneMatrix::Constant(16, 4, 0.5);
    auto model = build_cnn_backbone(CnnBackboneSpec{1, 4, 4, {}}, 0);
    CHECK_THROWS_AS(model->forward(bad), ShapeMismatch);
}

TEST_CASE("normalize and backward require a cached forward pass") {
    auto model = build_cnn_backbone(CnnBackboneSpec{1, 4, 4, {}}, 0);
    CHECK_THROWS_AS(model->normalize(), InvalidArgument);
    CHECK_THROWS_AS(model->backward(PlaneMatrix::Zero(16, 4)), InvalidArgument);
}

TEST_CASE("same seed, same network; different seed, different network") {
    CnnBackboneSpec spec;
    spec.channels = 8;
    spec.out_channels = 6;
    ImageTensor img = testsup::random_image(10, 10, 5);

    auto a = build_cnn_backbone(spec, 42);
    auto b = build_cnn_backbone(spec, 42);
    auto c = build_cnn_backbone(spec, 43);
    ResponseMap ra = a->forward(img);
    ResponseMap rb = b->forward(img);
    ResponseMap rc = c->forward(img);
    CHECK((ra.values - rb.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ra.values - rc.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("every parameter slot receives gradient") {
    CnnBackboneSpec spec;
    spec.channels = 8;
    spec.out_channels = 6;
    auto model = build_cnn_backbone(spec, 21);
    ImageTensor img = testsup::random_image(16, 16, 33);
    model->forward(img);
    model->normalize();
    model->zero_grad();
    model->backward(random_grad(16, 16, 6, 34));

    long long nonzero = 0, total = 0;
    for (auto& slot : model->params()) {
        CHECK(slot.grad->cwiseAbs().maxCoeff() > 0.0);
        nonzero += (slot.grad->array() != 0.0).count();
        total += slot.grad->size();
    }
    CHECK(static_cast<double>(nonzero) / static_cast<double>(total) > 0.9);
}

TEST_CASE("gradient reaches the whole pyramid network") {
    ResNetFpnSpec spec;
    spec.width = 8;
    spec.out_channels = 4;
    auto model = build_resnet_fpn_backbone(spec, 19);
    ImageTensor img = testsup::random_image(64, 64, 55);
    model->forward(img);
    model->normalize();
    model->zero_grad();
    model->backward(random_grad(64, 64, 4, 56));
    for (auto& slot : model->params()) {
        INFO(slot.name);
        CHECK(slot.grad->cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("model backward agrees with finite differences end to end") {
    CnnBackboneSpec spec;
    spec.components = 2;
    spec.channels = 4;
    spec.out_channels = 3;
    auto model = build_cnn_backbone(spec, 29);
    ImageTensor img = testsup::random_image(6, 6, 66);
    PlaneMatrix r = random_grad(6, 6, 3, 67);

    auto eval = [&]() {
        model->forward(img);
        return (model->normalize().values.array() * r.array()).sum();
    };
    eval();
    model->zero_grad();
    model->backward(r);

    auto slots = model->params();
    for (auto& slot : slots) {
        for (Eigen::Index i = 0; i < slot.value->size(); i += 7) {
            double* v = &slot.value->data()[i];
            const double saved = *v;
            *v = saved + 1e-5;
            const double hi = eval();
            *v = saved - 1e-5;
            const double lo = eval();
            *v = saved;
            const double want = (hi - lo) / 2e-5;
            const double got = slot.grad->data()[i];
            const double scale = std::max({1.0, std::abs(got), std::abs(want)});
            INFO(slot.name << "[" << i << "]");
            CHECK(std::abs(got - want) / scale < 1e-4);
        }
    }
}

TEST_CASE("build_model dispatches on the configured backbone") {
    RunConfig cfg;
    cfg.p = 4;
    cfg.q = 4;
    cfg.cnn_components = 1;
    auto cnn = build_model(cfg);
    CHECK(cnn->kind() == BackboneKind::CNN);
    CHECK(cnn->q() == 4);

    cfg.backbone = BackboneKind::RESNET_FPN;
    cfg.fpn_width = 8;
    auto fpn = build_model(cfg);
    CHECK(fpn->kind() == BackboneKind::RESNET_FPN);
    CHECK(fpn->q() == 4);
}

TEST_CASE("pretrained trunk weights load, shift the output, and stay deterministic") {
    testsup::TempDir tmp("weights");
    const std::string path = (tmp.path() / "trunk.dswt").string();
    io::save_tensor_file(path, make_trunk_file());

    ResNetFpnSpec random_spec;
    random_spec.width = 8;
    random_spec.out_channels = 4;
    ResNetFpnSpec loaded_spec = random_spec;
    loaded_spec.weights_path = path;

    ImageTensor img = testsup::random_image(32, 32, 91);
    ResponseMap r_random = build_resnet_fpn_backbone(random_spec, 3)->forward(img);
    ResponseMap r_loaded1 = build_resnet_fpn_backbone(loaded_spec, 3)->forward(img);
    ResponseMap r_loaded2 = build_resnet_fpn_backbone(loaded_spec, 3)->forward(img);

    CHECK((r_loaded1.values - r_loaded2.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r_loaded1.values - r_random.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("missing tensors and bad shapes are refused") {
    testsup::TempDir tmp("badweights");

    io::TensorFile partial = make_trunk_file();
    partial.erase("layer4.1.bn2.bias");
    const std::string missing_path = (tmp.path() / "missing.dswt").string();
    io::save_tensor_file(missing_path, partial);

    ResNetFpnSpec spec;
    spec.width = 8;
    spec.out_channels = 4;
    ResNetFpnModel model(spec);
    Rng rng(1);
    model.init(rng);
    CHECK_THROWS_AS(model.load_trunk_weights(missing_path), WeightsUnavailable);
    CHECK_THROWS_AS(model.load_trunk_weights((tmp.path() / "nope.dswt").string()),
                    WeightsUnavailable);

    // Self-consistent file, wrong shape for the model's first conv.
    io::TensorFile bad = make_trunk_file();
    bad["conv1.weight"].dims = {10};
    bad["conv1.weight"].data.assign(10, 0.0);
    const std::string bad_path = (tmp.path() / "bad.dswt").string();
    io::save_tensor_file(bad_path, bad);
    CHECK_THROWS_AS(model.load_trunk_weights(bad_path), ShapeMismatch);
}

TEST_CASE("random init is refusable") {
    ResNetFpnSpec spec;
    spec.width = 8;
    spec.out_channels = 4;
    spec.allow_random_init = false;
    CHECK_THROWS_AS(build_resnet_fpn_backbone(spec, 0), WeightsUnavailable);

    spec.weights_path = "/definitely/not/there.dswt";
    CHECK_THROWS_AS(build_resnet_fpn_backbone(spec, 0), WeightsUnavailable);

    spec.allow_random_init = true;  // same missing file now degrades gracefully
    CHECK_NOTHROW(build_resnet_fpn_backbone(spec, 0));
}
