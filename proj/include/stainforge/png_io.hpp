#pragma once

#include <filesystem>

#include "stainforge/image.hpp"

namespace stainforge {

// Minimal PNG codec backed by zlib. Writes 8-bit RGB, non-interlaced,
// filter type 0 on every row; reads 8-bit gray/RGB/RGBA non-interlaced
// (alpha is dropped, gray is replicated). Pixels map to [0, 1] as v / 255.
ImagePatch read_png(const std::filesystem::path& path);

// `img` must be in unit range; values are rounded to the nearest 8-bit code.
void write_png(const std::filesystem::path& path, const ImagePatch& img);

}  // namespace stainforge
