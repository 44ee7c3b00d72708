#pragma once

// COCO-style manifests and dataset loading.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lupi/geometry.hpp"

namespace lupi {

struct CocoImage {
  std::int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  /// Optional "split" extension field; images without one count as test.
  std::optional<Split> split;
};

struct CocoAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  /// [x, y, width, height] in pixels.
  std::array<double, 4> bbox{};
};

struct CocoCategory {
  std::int64_t id = 0;
  std::string name;
};

struct CocoManifest {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  std::vector<CocoCategory> categories;  // sorted by ascending id

  /// Dense class index of an original category id.
  ClassId class_of(std::int64_t category_id) const;
  /// Category names in dense class order.
  std::vector<std::string> category_names() const;
};

/// Parses and validates manifest JSON. Throws DataError on malformed JSON,
/// dangling image/category references, or non-positive bbox sizes.
CocoManifest parse_coco(std::string_view json_text);

/// Stable serialization (fixed key order); parse_coco round-trips it.
std::string serialize_coco(const CocoManifest& manifest);

CocoManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const CocoManifest& manifest);

/// Per-plane min-max rescale to [0,1]; a constant plane maps to zeros.
ImagePlane normalize_image(const ImagePlane& plane);

struct LoadOptions {
  /// Restrict to images tagged with this split.
  std::optional<Split> split;
  /// Apply normalize_image to each RGB plane; false keeps raw 0..255 values.
  bool normalize = true;
};

/// Reads every referenced PPM under image_dir in manifest order. Sample ids
/// are file-name stems. No privileged plane is attached.
Dataset load_dataset(const CocoManifest& manifest, const std::filesystem::path& image_dir,
                     const LoadOptions& options = {});

}  // namespace lupi
