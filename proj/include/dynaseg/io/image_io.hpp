#pragma once

#include <array>
#include <string>

#include "dynaseg/types.hpp"

namespace dynaseg::io {

/// h in [0,1) (wraps), s and v in [0,1]; returns RGB in [0,1].
std::array<double, 3> hsv_to_rgb(double h, double s, double v);

/// Photo decode via OpenCV: any common format, returned as RGB in [0,1].
/// Throws DecodeError with the path on failure.
ImageTensor load_image(const std::string& path);

/// Label-map decode via libpng. Palette images yield their palette indices
/// (never expanded colors); 8- and 16-bit grayscale yield pixel values.
/// RGB content is refused: a label file must carry indices.
LabelMap load_label_image(const std::string& path);

/// Lossless single-channel 16-bit PNG. Labels must fit [0, 65535].
void save_label_map(const std::string& path, const LabelMap& labels);

/// RGB [0,1] planes to an 8-bit image file (palette overlays, debug dumps).
void save_rgb_image(const std::string& path, int height, int width, const PlaneMatrix& rgb);

}  // namespace dynaseg::io
