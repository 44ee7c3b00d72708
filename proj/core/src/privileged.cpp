#include "lupi/privileged.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lupi/errors.hpp"
#include "lupi/pnm.hpp"

namespace lupi {

double class_shade(ClassId k, int num_classes) {
  if (num_classes < 1 || num_classes > 255) {
    throw std::invalid_argument("num_classes must lie in [1,255] for distinct 8-bit shades");
  }
  if (k.value < 0 || k.value >= num_classes) {
    throw std::invalid_argument("class id " + std::to_string(k.value) + " out of range for " +
                                std::to_string(num_classes) + " classes");
  }
  const double shade = static_cast<double>(k.value + 1) / num_classes;
  return static_cast<double>(std::lround(255.0 * shade)) / 255.0;
}

ClassId decode_shade(double value, int num_classes) {
  return ClassId{static_cast<int>(std::lround(value * num_classes)) - 1};
}

ImagePlane encode_mask(std::span<const Annotation> annotations, int width, int height,
                       int num_classes) {
  ImagePlane mask(width, height, 0.0);
  for (const auto& a : annotations) {
    const double shade = class_shade(a.class_id, num_classes);
    // Pixel centers px+0.5 in [x_min, x_max) <=> px in [ceil(x_min-0.5), ceil(x_max-0.5)).
    const int x0 = std::max(0, static_cast<int>(std::ceil(a.box.x_min() - 0.5)));
    const int x1 = std::min(width, static_cast<int>(std::ceil(a.box.x_max() - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(a.box.y_min() - 0.5)));
    const int y1 = std::min(height, static_cast<int>(std::ceil(a.box.y_max() - 0.5)));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) mask.at(x, y) = std::max(mask.at(x, y), shade);
    }
  }
  return mask;
}

ImageSample attach_privileged_channel(const ImageSample& s, int num_classes) {
  if (s.privileged) {
    throw std::invalid_argument("sample '" + s.id + "' already carries a privileged plane");
  }
  ImageSample out = s;
  out.privileged = encode_mask(s.annotations, s.width(), s.height(), num_classes);
  return out;
}

std::filesystem::path mask_file_name(const std::string& sample_id) {
  return sample_id + "_priv.pgm";
}

void write_mask(const std::filesystem::path& path, const ImagePlane& mask) {
  std::vector<double> scaled(mask.values().size());
  std::transform(mask.values().begin(), mask.values().end(), scaled.begin(),
                 [](double v) { return v * 255.0; });
  pnm::write_pgm(path, ImagePlane(mask.width(), mask.height(), std::move(scaled)));
}

void load_privileged_masks(Dataset& dataset, const std::filesystem::path& mask_dir) {
  for (auto& s : dataset.samples) {
    const auto path = mask_dir / mask_file_name(s.id);
    if (!std::filesystem::exists(path)) {
      throw DataError("missing privileged mask '" + path.string() + "'");
    }
    ImagePlane raw = pnm::read_pgm(path);
    if (raw.width() != s.width() || raw.height() != s.height()) {
      throw DataError("mask '" + path.string() + "' does not match its image size");
    }
    for (auto& v : raw.values()) v /= 255.0;
    s.privileged = std::move(raw);
  }
}

}  // namespace lupi
