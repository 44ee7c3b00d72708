#pragma once

// Binary PPM (P6) / PGM (P5) rasters, 8-bit only. Planes read and written
// here carry raw 0..255 values; callers normalize or scale.

#include <array>
#include <filesystem>

#include "lupi/geometry.hpp"

namespace lupi::pnm {

std::array<ImagePlane, 3> read_ppm(const std::filesystem::path& path);
ImagePlane read_pgm(const std::filesystem::path& path);

/// Values are rounded to nearest and clamped to [0, 255].
void write_ppm(const std::filesystem::path& path, const std::array<ImagePlane, 3>& planes);
void write_pgm(const std::filesystem::path& path, const ImagePlane& plane);

}  // namespace lupi::pnm
