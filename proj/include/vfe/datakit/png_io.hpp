#pragma once

#include <filesystem>

#include "vfe/datakit/image.hpp"

namespace vfe::datakit {

/// Reads an 8-bit PNG as RGB in [-1, 1]. Grayscale files are expanded to three channels.
ImageTensor read_png_rgb(const std::filesystem::path& path);

/// Reads an 8-bit grayscale PNG; nonzero pixels are true.
BinaryMask read_png_mask(const std::filesystem::path& path);

/// Writes a 3-channel image as 8-bit RGB PNG using the to_u8 quantization.
void write_png_rgb(const std::filesystem::path& path, const ImageTensor& image);

void write_png_mask(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace vfe::datakit
