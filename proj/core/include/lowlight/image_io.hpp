#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lowlight/image.hpp"

namespace lowlight {

// 8-bit RGB (or gray) PNG of an image in [0,1]; values are clipped and
// rounded.
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

// Decodes an 8-bit PNG into [0,1] planar floats. Used by tests and tools.
Image decode_png(const std::vector<std::uint8_t>& bytes);

}  // namespace lowlight
