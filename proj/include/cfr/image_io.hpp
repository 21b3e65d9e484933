#pragma once

#include "cfr/backends/types.hpp"

#include <filesystem>

namespace cfr {

// 8-bit PNG; 1 channel -> gray, 3 -> RGB. Values are quantised to 1/255.
void write_png(const ImageTensor& image, const std::filesystem::path& path);
// Image id is the file stem.
ImageTensor read_png(const std::filesystem::path& path);

// Round every value to the nearest 1/255 step, matching what a PNG stores.
ImageTensor quantize8(const ImageTensor& image);

}  // namespace cfr
