#pragma once

// Core value types shared by every stage of the pipeline: boxes, labels,
// raster planes, samples and datasets.

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lupi {

/// Axis-aligned box in continuous pixel coordinates, corner form, origin
/// top-left. Construction rejects zero-area and non-finite boxes.
class BoundingBox {
 public:
  BoundingBox(double x_min, double y_min, double x_max, double y_max);

  /// Converts COCO [x, y, width, height].
  static BoundingBox from_xywh(double x, double y, double w, double h);

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }
  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double center_x() const noexcept { return 0.5 * (x_min_ + x_max_); }
  double center_y() const noexcept { return 0.5 * (y_min_ + y_max_); }

  /// Translated copy.
  BoundingBox shifted(double dx, double dy) const;
  /// Copy with x coordinates multiplied by sx and y by sy (sx, sy > 0).
  BoundingBox scaled(double sx, double sy) const;

  bool operator==(const BoundingBox&) const = default;

 private:
  double x_min_;
  double y_min_;
  double x_max_;
  double y_max_;
};

double box_area(const BoundingBox& b) noexcept;

/// Intersection over union, 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

/// Intersection of b with region; empty when the overlap has zero area.
std::optional<BoundingBox> clip_box(const BoundingBox& b, const BoundingBox& region);

/// True when inner lies entirely inside outer.
bool contains(const BoundingBox& outer, const BoundingBox& inner) noexcept;

/// Dense 0-based index into a dataset's category table.
struct ClassId {
  int value = 0;
  auto operator<=>(const ClassId&) const = default;
};

struct Annotation {
  BoundingBox box;
  ClassId class_id;

  bool operator==(const Annotation&) const = default;
};

class Detection {
 public:
  /// Throws std::invalid_argument when score is outside [0, 1].
  Detection(BoundingBox box, ClassId class_id, double score);

  const BoundingBox& box() const noexcept { return box_; }
  ClassId class_id() const noexcept { return class_id_; }
  double score() const noexcept { return score_; }

  bool operator==(const Detection&) const = default;

 private:
  BoundingBox box_;
  ClassId class_id_;
  double score_;
};

/// Single-channel raster, row-major.
class ImagePlane {
 public:
  ImagePlane(int width, int height, double fill = 0.0);
  ImagePlane(int width, int height, std::vector<double> values);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  bool operator==(const ImagePlane&) const = default;

 private:
  int width_;
  int height_;
  std::vector<double> values_;
};

/// The (x, x*, y) training triplet: RGB planes, optional privileged plane,
/// ground-truth annotations.
struct ImageSample {
  std::string id;
  std::array<ImagePlane, 3> rgb;
  std::optional<ImagePlane> privileged;
  std::vector<Annotation> annotations;

  int width() const noexcept { return rgb[0].width(); }
  int height() const noexcept { return rgb[0].height(); }

  /// Throws std::invalid_argument if planes disagree in size, boxes leave
  /// the image, or privileged values fall outside [0, 1].
  void validate() const;
};

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
/// Throws DataError on unknown names.
Split split_from_string(std::string_view name);

struct Dataset {
  std::vector<ImageSample> samples;
  std::vector<std::string> categories;
  Split split = Split::kTrain;

  int num_classes() const noexcept { return static_cast<int>(categories.size()); }

  /// Checks class ids against categories, unique sample ids and every
  /// sample's own invariants.
  void validate() const;
};

}  // namespace lupi
