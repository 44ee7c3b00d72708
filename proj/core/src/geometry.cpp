#include "lupi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "lupi/errors.hpp"

namespace lupi {

BoundingBox::BoundingBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
  if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
      !std::isfinite(y_max)) {
    throw std::invalid_argument("bounding box coordinates must be finite");
  }
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw std::invalid_argument("degenerate bounding box [" + std::to_string(x_min) + ", " +
                                std::to_string(y_min) + ", " + std::to_string(x_max) + ", " +
                                std::to_string(y_max) + "]");
  }
}

BoundingBox BoundingBox::from_xywh(double x, double y, double w, double h) {
  return BoundingBox(x, y, x + w, y + h);
}

BoundingBox BoundingBox::shifted(double dx, double dy) const {
  return BoundingBox(x_min_ + dx, y_min_ + dy, x_max_ + dx, y_max_ + dy);
}

BoundingBox BoundingBox::scaled(double sx, double sy) const {
  return BoundingBox(x_min_ * sx, y_min_ * sy, x_max_ * sx, y_max_ * sy);
}

double box_area(const BoundingBox& b) noexcept { return b.width() * b.height(); }

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::optional<BoundingBox> clip_box(const BoundingBox& b, const BoundingBox& region) {
  const double x0 = std::max(b.x_min(), region.x_min());
  const double y0 = std::max(b.y_min(), region.y_min());
  const double x1 = std::min(b.x_max(), region.x_max());
  const double y1 = std::min(b.y_max(), region.y_max());
  if (!(x0 < x1) || !(y0 < y1)) return std::nullopt;
  return BoundingBox(x0, y0, x1, y1);
}

bool contains(const BoundingBox& outer, const BoundingBox& inner) noexcept {
  return inner.x_min() >= outer.x_min() && inner.y_min() >= outer.y_min() &&
         inner.x_max() <= outer.x_max() && inner.y_max() <= outer.y_max();
}

Detection::Detection(BoundingBox box, ClassId class_id, double score)
    : box_(box), class_id_(class_id), score_(score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw std::invalid_argument("detection score outside [0,1]: " + std::to_string(score));
  }
  if (class_id.value < 0) throw std::invalid_argument("negative class id");
}

ImagePlane::ImagePlane(int width, int height, double fill)
    : ImagePlane(width, height,
                 std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) *
                                         static_cast<std::size_t>(std::max(height, 0)),
                                     fill)) {}

ImagePlane::ImagePlane(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image plane dims must be positive");
  if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("image plane value count does not match width*height");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw std::invalid_argument("image plane holds a non-finite value");
  }
}

void ImageSample::validate() const {
  const int w = width();
  const int h = height();
  for (const auto& p : rgb) {
    if (p.width() != w || p.height() != h) {
      throw std::invalid_argument("sample '" + id + "': rgb planes differ in size");
    }
  }
  if (privileged) {
    if (privileged->width() != w || privileged->height() != h) {
      throw std::invalid_argument("sample '" + id + "': privileged plane size mismatch");
    }
    for (double v : privileged->values()) {
      if (v < 0.0 || v > 1.0) {
        throw std::invalid_argument("sample '" + id + "': privileged value outside [0,1]");
      }
    }
  }
  const BoundingBox frame(0.0, 0.0, w, h);
  for (const auto& a : annotations) {
    if (!contains(frame, a.box)) {
      throw std::invalid_argument("sample '" + id + "': annotation outside image bounds");
    }
  }
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(name) + "'");
}

void Dataset::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
    for (const auto& a : s.annotations) {
      if (a.class_id.value < 0 || a.class_id.value >= num_classes()) {
        throw DataError("sample '" + s.id + "' references class " +
                        std::to_string(a.class_id.value) + " outside the category table");
      }
    }
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
  }
}

}  // namespace lupi
