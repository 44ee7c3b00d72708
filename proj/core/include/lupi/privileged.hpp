#pragma once

// Ground-truth boxes rendered as the grayscale privileged plane that only
// the teacher sees.

#include <filesystem>
#include <span>

#include "lupi/geometry.hpp"

namespace lupi {

/// Gray level of class k: round(255 * (k+1) / num_classes) / 255.
/// Throws std::invalid_argument unless 0 <= k < num_classes <= 255.
double class_shade(ClassId k, int num_classes);

/// Inverse of class_shade for a nonzero mask value: round(v * num_classes) - 1.
ClassId decode_shade(double value, int num_classes);

/// Pixel (px, py) is covered by a box when x_min <= px+0.5 < x_max and
/// y_min <= py+0.5 < y_max. Covered pixels take the maximum shade over the
/// covering boxes; uncovered pixels are 0.
ImagePlane encode_mask(std::span<const Annotation> annotations, int width, int height,
                       int num_classes);

/// Copy of s with privileged = encode_mask(s.annotations, ...).
/// Throws std::invalid_argument if s already has a privileged plane.
ImageSample attach_privileged_channel(const ImageSample& s, int num_classes);

/// "<sample_id>_priv.pgm"
std::filesystem::path mask_file_name(const std::string& sample_id);

/// Writes the plane as 8-bit PGM (value * 255).
void write_mask(const std::filesystem::path& path, const ImagePlane& mask);

/// Attaches mask_dir/<id>_priv.pgm to every sample (value / 255).
/// Throws DataError if a mask is missing or mis-sized.
void load_privileged_masks(Dataset& dataset, const std::filesystem::path& mask_dir);

}  // namespace lupi
