#include <fstream>

#include "doctest.h"
#include "dynaseg/io/image_io.hpp"
#include "dynaseg/io/mat5.hpp"
#include "dynaseg/io/weights_io.hpp"
#include "support.hpp"

using namespace dynaseg;

TEST_CASE("jpeg photos decode to RGB planes in [0,1]") {
    ImageTensor img = io::load_image(testsup::data_file("tiny.jpg"));
    CHECK(img.height == 6);
    CHECK(img.width == 8);
    CHECK(img.channels() == 3);
    CHECK(img.pixels.minCoeff() >= 0.0);
    CHECK(img.pixels.maxCoeff() <= 1.0);
    // Source pattern: red = i*40, green = j*30, blue = 128. JPEG is lossy,
    // so compare loosely; channel order proves the BGR->RGB swap.
    CHECK(img.at(5, 0, 0) == doctest::Approx(200.0 / 255).epsilon(0.15));
    CHECK(img.at(0, 7, 1) == doctest::Approx(210.0 / 255).epsilon(0.15));
    CHECK(img.at(0, 0, 0) < 0.2);
    CHECK(img.at(3, 3, 2) == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("a missing image path raises a decode error") {
    CHECK_THROWS_AS(io::load_image(testsup::data_file("no_such.jpg")), DecodeError);
}

TEST_CASE("palette labels come back as palette indices") {
    LabelMap lab = io::load_label_image(testsup::data_file("voc_palette.png"));
    CHECK(lab.height == 4);
    CHECK(lab.width == 6);
    const int expect[4] = {0, 1, 15, 255};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) CHECK(lab.at(i, j) == expect[i]);
    CHECK(lab.unique_count == 4);
}

TEST_CASE("8-bit grayscale labels come back as values") {
    LabelMap lab = io::load_label_image(testsup::data_file("coco_gray8.png"));
    CHECK(lab.height == 4);
    CHECK(lab.width == 6);
    CHECK(lab.at(0, 0) == 0);
    CHECK(lab.at(1, 0) == 91);
    CHECK(lab.at(2, 5) == 180);
    CHECK(lab.at(3, 3) == 255);
}

TEST_CASE("16-bit grayscale labels keep their full range") {
    LabelMap lab = io::load_label_image(testsup::data_file("gray16.png"));
    CHECK(lab.height == 2);
    CHECK(lab.width == 3);
    CHECK(lab.at(0, 0) == 0);
    CHECK(lab.at(0, 1) == 1);
    CHECK(lab.at(0, 2) == 2);
    CHECK(lab.at(1, 0) == 300);
    CHECK(lab.at(1, 1) == 40000);
    CHECK(lab.at(1, 2) == 65535);
}

TEST_CASE("RGB content is not a label map") {
    CHECK_THROWS_AS(io::load_label_image(testsup::data_file("rgb.png")), DecodeError);
    CHECK_THROWS_AS(io::load_label_image(testsup::data_file("missing.png")), DecodeError);
    // A non-PNG byte stream is refused up front.
    CHECK_THROWS_AS(io::load_label_image(testsup::data_file("tiny.jpg")), DecodeError);
}

TEST_CASE("label maps round-trip through 16-bit PNG") {
    testsup::TempDir tmp("labelio");
    Eigen::VectorXi v(6);
    v << 0, 7, 300, 65535, 7, 12000;
    LabelMap lab(2, 3, v);
    const std::string path = (tmp.path() / "labels.png").string();
    io::save_label_map(path, lab);
    LabelMap back = io::load_label_image(path);
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    CHECK(back.labels == lab.labels);
    CHECK(back.unique_count == 5);

    Eigen::VectorXi bad(4);
    bad << 0, 1, -1, 2;
    CHECK_THROWS_AS(io::save_label_map((tmp.path() / "bad.png").string(), LabelMap(2, 2, bad)),
                    InvalidArgument);
}

TEST_CASE("RGB planes round-trip through 8-bit PNG") {
    testsup::TempDir tmp("rgbio");
    ImageTensor img = testsup::random_image(5, 9, 606);
    const std::string path = (tmp.path() / "img.png").string();
    io::save_rgb_image(path, img.height, img.width, img.pixels);
    ImageTensor back = io::load_image(path);
    CHECK(back.height == 5);
    CHECK(back.width == 9);
    // 8-bit quantization: half a step either way.
    CHECK((back.pixels - img.pixels).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-9);
}

TEST_CASE("plain and compressed MAT files decode the same variable") {
    for (const char* name : {"simple.mat", "simple_compressed.mat"}) {
        std::vector<io::MatVar> vars = io::read_mat5(testsup::data_file(name));
        REQUIRE(vars.size() == 1);
        const io::MatVar& a = vars[0];
        CHECK(a.name == "A");
        CHECK(a.kind == io::MatVar::Kind::NUMERIC);
        REQUIRE(a.dims == std::vector<int>{2, 2});
        CHECK(a.numeric(0, 0) == 1.0);
        CHECK(a.numeric(0, 1) == 2.0);
        CHECK(a.numeric(1, 0) == 3.0);
        CHECK(a.numeric(1, 1) == 4.0);
    }
}

TEST_CASE("annotation bundles expose every variant with dense labels") {
    std::vector<LabelMap> variants =
        io::read_bsd500_ground_truth(testsup::data_file("bsdlike.mat"));
    REQUIRE(variants.size() == 2);

    const LabelMap& a = variants[0];  // columns 1 1 2 2 3 3 -> 0 0 1 1 2 2
    CHECK(a.height == 4);
    CHECK(a.width == 6);
    CHECK(a.unique_count == 3);
    CHECK(a.at(0, 0) == a.at(3, 1));
    CHECK(a.at(0, 0) != a.at(0, 2));
    CHECK(a.at(0, 2) != a.at(0, 4));
    CHECK(a.labels.minCoeff() == 0);
    CHECK(a.labels.maxCoeff() == 2);

    const LabelMap& b = variants[1];
    CHECK(b.unique_count == 2);
    CHECK(b.labels.minCoeff() == 0);
    CHECK(b.labels.maxCoeff() == 1);
}

TEST_CASE("garbage bytes are not a MAT file") {
    testsup::TempDir tmp("matio");
    const std::string path = (tmp.path() / "junk.mat").string();
    std::ofstream(path) << "this is not a level-5 container";
    CHECK_THROWS_AS(io::read_mat5(path), DecodeError);
    CHECK_THROWS_AS(io::read_bsd500_ground_truth(path), DecodeError);
    CHECK_THROWS_AS(io::read_mat5((tmp.path() / "absent.mat").string()), DecodeError);
}

TEST_CASE("a MAT file without the expected cell is refused") {
    CHECK_THROWS_AS(io::read_bsd500_ground_truth(testsup::data_file("simple.mat")), DecodeError);
}

TEST_CASE("named tensors round-trip byte for byte") {
    testsup::TempDir tmp("weights");
    io::TensorFile file;
    io::NamedTensor a;
    a.dims = {2, 3};
    a.data = {1.5, -2.25, 3.0, 0.0, 1e-300, 6.5};
    file["alpha"] = a;
    io::NamedTensor b;
    b.dims = {4};
    b.data = {9, 8, 7, 6};
    file["beta.weight"] = b;

    const std::string path = (tmp.path() / "t.dswt").string();
    io::save_tensor_file(path, file);
    io::TensorFile back = io::load_tensor_file(path);
    REQUIRE(back.size() == 2);
    CHECK(back.at("alpha").dims == std::vector<uint64_t>{2, 3});
    CHECK(back.at("alpha").data == a.data);
    CHECK(back.at("alpha").element_count() == 6);
    CHECK(back.at("beta.weight").data == b.data);

    // Round-trip again: identical bytes.
    const std::string path2 = (tmp.path() / "t2.dswt").string();
    io::save_tensor_file(path2, back);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK_FALSE(s1.empty());
}

TEST_CASE("tensor container failures raise one error type") {
    testsup::TempDir tmp("badtensors");
    CHECK_THROWS_AS(io::load_tensor_file((tmp.path() / "absent.dswt").string()),
                    WeightsUnavailable);

    const std::string bad_magic = (tmp.path() / "magic.dswt").string();
    std::ofstream(bad_magic, std::ios::binary) << "NOPE" << std::string(16, '\0');
    CHECK_THROWS_AS(io::load_tensor_file(bad_magic), WeightsUnavailable);

    // A valid file cut short mid-payload.
    io::TensorFile file;
    io::NamedTensor t;
    t.dims = {8};
    t.data.assign(8, 1.0);
    file["x"] = t;
    const std::string whole = (tmp.path() / "whole.dswt").string();
    io::save_tensor_file(whole, file);
    std::ifstream in(whole, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string cut = (tmp.path() / "cut.dswt").string();
    std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() - 10);
    CHECK_THROWS_AS(io::load_tensor_file(cut), WeightsUnavailable);
}
