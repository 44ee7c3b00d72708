#include "lupi/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lupi {
namespace {

ImagePlane crop(const ImagePlane& p, int x0, int y0, int w, int h) {
  std::vector<double> v(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const auto row = p.values().begin() + static_cast<std::ptrdiff_t>(y0 + y) * p.width() + x0;
    std::copy(row, row + w, v.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return ImagePlane(w, h, std::move(v));
}

ImagePlane resample(const ImagePlane& p, int out_w, int out_h) {
  if (out_w == p.width() && out_h == p.height()) return p;
  const double sx = static_cast<double>(p.width()) / out_w;
  const double sy = static_cast<double>(p.height()) / out_h;
  std::vector<double> v(static_cast<std::size_t>(out_w) * out_h);
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, p.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, p.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, p.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, p.width() - 1);
      const double wx = fx - x0;
      const double top = p.at(x0, y0) * (1.0 - wx) + p.at(x1, y0) * wx;
      const double bot = p.at(x0, y1) * (1.0 - wx) + p.at(x1, y1) * wx;
      v[static_cast<std::size_t>(y) * out_w + x] = top * (1.0 - wy) + bot * wy;
    }
  }
  return ImagePlane(out_w, out_h, std::move(v));
}

}  // namespace

void TileSpec::validate() const {
  if (grid < 1) throw std::invalid_argument("tile grid must be >= 1");
  if (!(min_visibility > 0.0 && min_visibility <= 1.0)) {
    throw std::invalid_argument("tile min_visibility must lie in (0,1]");
  }
  if (!(min_side_px > 0.0)) throw std::invalid_argument("tile min_side_px must be positive");
}

std::vector<ImageSample> tile_image(const ImageSample& s, const TileSpec& spec) {
  spec.validate();
  const int k = spec.grid;
  if (s.width() < k || s.height() < k) {
    throw std::invalid_argument("image '" + s.id + "' is smaller than the " + std::to_string(k) +
                                "x" + std::to_string(k) + " tile grid");
  }
  if (s.privileged) {
    throw std::invalid_argument("image '" + s.id + "' already has a privileged plane; tile first");
  }
  const int tw = s.width() / k;
  const int th = s.height() / k;

  std::vector<ImageSample> tiles;
  tiles.reserve(static_cast<std::size_t>(k) * k);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      const int x0 = c * tw;
      const int y0 = r * th;
      const int w = (c == k - 1) ? s.width() - x0 : tw;
      const int h = (r == k - 1) ? s.height() - y0 : th;
      const BoundingBox region(x0, y0, x0 + w, y0 + h);

      ImageSample t{s.id + "_r" + std::to_string(r) + "_c" + std::to_string(c),
                    {crop(s.rgb[0], x0, y0, w, h), crop(s.rgb[1], x0, y0, w, h),
                     crop(s.rgb[2], x0, y0, w, h)},
                    std::nullopt,
                    {}};
      for (const auto& a : s.annotations) {
        const auto clipped = clip_box(a.box, region);
        if (!clipped) continue;
        if (box_area(*clipped) / box_area(a.box) < spec.min_visibility) continue;
        if (clipped->width() < spec.min_side_px || clipped->height() < spec.min_side_px) continue;
        t.annotations.push_back({clipped->shifted(-x0, -y0), a.class_id});
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

ImageSample resize_sample(const ImageSample& s, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize target must be at least 1x1");
  const int w = s.width();
  const int h = s.height();
  ImageSample out{s.id,
                  {resample(s.rgb[0], out_w, out_h), resample(s.rgb[1], out_w, out_h),
                   resample(s.rgb[2], out_w, out_h)},
                  std::nullopt,
                  {}};
  if (s.privileged) out.privileged = resample(*s.privileged, out_w, out_h);
  // Multiply before dividing so frame-aligned coordinates map exactly.
  auto sx = [&](double x) { return std::clamp(x * out_w / w, 0.0, static_cast<double>(out_w)); };
  auto sy = [&](double y) { return std::clamp(y * out_h / h, 0.0, static_cast<double>(out_h)); };
  for (const auto& a : s.annotations) {
    const double x0 = sx(a.box.x_min());
    const double y0 = sy(a.box.y_min());
    const double x1 = sx(a.box.x_max());
    const double y1 = sy(a.box.y_max());
    if (x1 - x0 < 1.0 || y1 - y0 < 1.0) continue;
    out.annotations.push_back({BoundingBox(x0, y0, x1, y1), a.class_id});
  }
  return out;
}

}  // namespace lupi
