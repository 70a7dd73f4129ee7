#include "dynaseg/io/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <opencv2/imgcodecs.hpp>
#include <vector>

namespace dynaseg::io {

ImageTensor load_image(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw DecodeError("cannot decode image: " + path);
    const int h = bgr.rows, w = bgr.cols;
    PlaneMatrix px(static_cast<Eigen::Index>(h) * w, 3);
    for (int i = 0; i < h; ++i) {
        const auto* row = bgr.ptr<cv::Vec3b>(i);
        for (int j = 0; j < w; ++j) {
            const Eigen::Index r = flat_index(i, j, w);
            px(r, 0) = row[j][2] / 255.0;
            px(r, 1) = row[j][1] / 255.0;
            px(r, 2) = row[j][0] / 255.0;
        }
    }
    return ImageTensor(h, w, std::move(px), path);
}

namespace {

struct PngReader {
    std::FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;

    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

}  // namespace

LabelMap load_label_image(const std::string& path) {
    PngReader r;
    r.fp = std::fopen(path.c_str(), "rb");
    if (!r.fp) throw DecodeError("cannot open label image: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, r.fp) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw DecodeError("not a PNG label image: " + path);

    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw DecodeError("libpng init failed: " + path);
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw DecodeError("libpng init failed: " + path);
    if (setjmp(png_jmpbuf(r.png))) throw DecodeError("corrupt PNG label image: " + path);

    png_init_io(r.png, r.fp);
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);

    const png_uint_32 w = png_get_image_width(r.png, r.info);
    const png_uint_32 h = png_get_image_height(r.png, r.info);
    const int color = png_get_color_type(r.png, r.info);
    const int depth = png_get_bit_depth(r.png, r.info);

    if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY)
        throw DecodeError("label image must be palette or grayscale: " + path);

    // Palette stays as indices; sub-byte packing expands to one byte per
    // pixel; 16-bit grayscale comes back in host order.
    if (depth < 8) png_set_packing(r.png);
    if (depth == 16) png_set_swap(r.png);
    png_read_update_info(r.png, r.info);

    const png_size_t rowbytes = png_get_rowbytes(r.png, r.info);
    std::vector<png_byte> data(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 i = 0; i < h; ++i) rows[i] = data.data() + i * rowbytes;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);

    Eigen::VectorXi labels(static_cast<Eigen::Index>(h) * w);
    if (depth == 16) {
        for (png_uint_32 i = 0; i < h; ++i) {
            const auto* row16 = reinterpret_cast<const uint16_t*>(rows[i]);
            for (png_uint_32 j = 0; j < w; ++j)
                labels(flat_index(static_cast<int>(i), static_cast<int>(j), static_cast<int>(w))) =
                    row16[j];
        }
    } else {
        for (png_uint_32 i = 0; i < h; ++i)
            for (png_uint_32 j = 0; j < w; ++j)
                labels(flat_index(static_cast<int>(i), static_cast<int>(j), static_cast<int>(w))) =
                    rows[i][j];
    }
    return LabelMap(static_cast<int>(h), static_cast<int>(w), std::move(labels));
}

void save_label_map(const std::string& path, const LabelMap& labels) {
    cv::Mat img(labels.height, labels.width, CV_16UC1);
    for (int i = 0; i < labels.height; ++i) {
        auto* row = img.ptr<uint16_t>(i);
        for (int j = 0; j < labels.width; ++j) {
            const int v = labels.at(i, j);
            if (v < 0 || v > 65535)
                throw InvalidArgument("save_label_map: label outside [0, 65535]");
            row[j] = static_cast<uint16_t>(v);
        }
    }
    if (!cv::imwrite(path, img)) throw DecodeError("cannot write label map: " + path);
}

void save_rgb_image(const std::string& path, int height, int width, const PlaneMatrix& rgb) {
    if (rgb.rows() != static_cast<Eigen::Index>(height) * width || rgb.cols() != 3)
        throw ShapeMismatch("save_rgb_image: planes must be (H*W) x 3");
    cv::Mat img(height, width, CV_8UC3);
    for (int i = 0; i < height; ++i) {
        auto* row = img.ptr<cv::Vec3b>(i);
        for (int j = 0; j < width; ++j) {
            const Eigen::Index r = flat_index(i, j, width);
            auto clamp8 = [](double v) {
                return static_cast<uint8_t>(std::min(255.0, std::max(0.0, v * 255.0 + 0.5)));
            };
            row[j][2] = clamp8(rgb(r, 0));
            row[j][1] = clamp8(rgb(r, 1));
            row[j][0] = clamp8(rgb(r, 2));
        }
    }
    if (!cv::imwrite(path, img)) throw DecodeError("cannot write image: " + path);
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    const double h6 = (h - std::floor(h)) * 6.0;
    const int sector = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

}  // namespace dynaseg::io
