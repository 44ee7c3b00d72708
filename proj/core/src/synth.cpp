#include "lupi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "lupi/errors.hpp"
#include "lupi/pnm.hpp"
#include "lupi/privileged.hpp"
#include "lupi/random.hpp"

namespace lupi {
namespace {

constexpr int kFineNoiseScale = 6;
constexpr double kMaxOcclusion = 0.4;

// Base colour per class; per-object jitter is added on top.
constexpr std::array<std::array<double, 3>, 6> kPalette{{{0.90, 0.35, 0.30},
                                                         {0.30, 0.75, 0.90},
                                                         {0.95, 0.85, 0.30},
                                                         {0.85, 0.85, 0.85},
                                                         {0.55, 0.30, 0.80},
                                                         {0.25, 0.25, 0.25}}};

// Smoothstep-interpolated lattice noise in [0,1].
class ValueNoise {
 public:
  ValueNoise(int size, int spacing, Rng& rng) : spacing_(spacing), n_(size / spacing + 2) {
    lattice_.resize(static_cast<std::size_t>(n_) * n_);
    for (auto& v : lattice_) v = rng.uniform();
  }

  double at(int x, int y) const {
    const double fx = static_cast<double>(x) / spacing_;
    const double fy = static_cast<double>(y) / spacing_;
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const double tx = smooth(fx - x0);
    const double ty = smooth(fy - y0);
    const double a = node(x0, y0) * (1 - tx) + node(x0 + 1, y0) * tx;
    const double b = node(x0, y0 + 1) * (1 - tx) + node(x0 + 1, y0 + 1) * tx;
    return a * (1 - ty) + b * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double node(int x, int y) const { return lattice_[static_cast<std::size_t>(y) * n_ + x]; }

  int spacing_;
  int n_;
  std::vector<double> lattice_;
};

// u, v are pixel-center coordinates normalised to the object box.
bool shape_covers(int archetype, double u, double v) {
  const double du = u - 0.5;
  const double dv = v - 0.5;
  const double r2 = du * du + dv * dv;
  switch (archetype) {
    case 0: return r2 <= 0.25;
    case 1: return true;
    case 2: return std::abs(du) <= 0.5 * v;
    case 3: return r2 <= 0.25 && r2 >= 0.09;
    case 4: return std::abs(du) <= 0.17 || std::abs(dv) <= 0.17;
    case 5: return true;
  }
  return false;
}

std::string image_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04zu", index);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_images < 1) throw std::invalid_argument("num_images must be >= 1");
  if (num_classes < 1 || num_classes > static_cast<int>(kSynthClassNames.size())) {
    throw std::invalid_argument("num_classes must lie in [1,6]");
  }
  if (objects_min < 0 || objects_max < objects_min) throw std::invalid_argument("empty objects_per_image range");
  if (side_min < 1 || side_max < side_min) throw std::invalid_argument("empty object_side range");
  if (!(side_max < image_size / 2)) throw std::invalid_argument("object_side max must be < image_size/2");
  if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) {
    throw std::invalid_argument("occlusion_rate must lie in [0,1]");
  }
  if (noise_scale < 1) throw std::invalid_argument("noise_scale must be >= 1");
}

SynthDataset generate_dataset(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int size = config.image_size;
  SynthDataset out;
  for (int c = 0; c < config.num_classes; ++c) {
    out.manifest.categories.push_back({c + 1, kSynthClassNames[c]});
  }

  std::int64_t next_ann = 1;
  for (int img = 0; img < config.num_images; ++img) {
    std::array<std::vector<double>, 3> bg;
    for (auto& ch : bg) {
      const ValueNoise coarse(size, config.noise_scale, rng);
      const ValueNoise fine(size, kFineNoiseScale, rng);
      ch.resize(static_cast<std::size_t>(size) * size);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          ch[static_cast<std::size_t>(y) * size + x] = 0.2 + 0.45 * coarse.at(x, y) + 0.2 * fine.at(x, y);
        }
      }
    }
    std::array<std::vector<double>, 3> px = bg;

    const int count = config.objects_min + static_cast<int>(rng.below(
                                               static_cast<std::uint64_t>(config.objects_max - config.objects_min + 1)));
    for (int o = 0; o < count; ++o) {
      const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.num_classes)));
      const int side = config.side_min + static_cast<int>(rng.below(
                                             static_cast<std::uint64_t>(config.side_max - config.side_min + 1)));
      int w = side;
      int h = side;
      if (cls == 5) {
        h = std::max(config.side_min, side / 2);
        if (rng.bernoulli(0.5)) std::swap(w, h);
      }
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - w + 1)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - h + 1)));
      const double bright = rng.uniform(-0.1, 0.1);
      std::array<double, 3> colour{};
      for (int c = 0; c < 3; ++c) {
        colour[c] = std::clamp(kPalette[cls][c] + bright + rng.uniform(-0.12, 0.12), 0.0, 1.0);
      }
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          const double u = (x + 0.5 - x0) / w;
          const double v = (y + 0.5 - y0) / h;
          if (!shape_covers(cls, u, v)) continue;
          for (int c = 0; c < 3; ++c) px[c][static_cast<std::size_t>(y) * size + x] = colour[c];
        }
      }

      bool occluded = false;
      if (rng.bernoulli(config.occlusion_rate)) {
        const double fw = rng.uniform(0.3, 0.6);
        const double fh = rng.uniform(0.3, std::min(1.0, kMaxOcclusion / fw));
        const int pw = std::max(1, static_cast<int>(std::floor(fw * w)));
        const int ph = std::max(1, static_cast<int>(std::floor(fh * h)));
        const int corner = static_cast<int>(rng.below(4));
        const int px0 = (corner & 1) ? x0 + w - pw : x0;
        const int py0 = (corner & 2) ? y0 + h - ph : y0;
        for (int y = py0; y < py0 + ph; ++y) {
          for (int x = px0; x < px0 + pw; ++x) {
            const std::size_t k = static_cast<std::size_t>(y) * size + x;
            for (int c = 0; c < 3; ++c) px[c][k] = bg[c][k];
          }
        }
        occluded = true;
      }

      const Annotation ann{BoundingBox(x0, y0, x0 + w, y0 + h), ClassId{cls}};
      out.objects.push_back({img, ann, occluded});
      out.manifest.annotations.push_back(
          {next_ann++, img, static_cast<std::int64_t>(cls) + 1,
           {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(w), static_cast<double>(h)}});
    }

    std::array<ImagePlane, 3> planes{ImagePlane(size, size), ImagePlane(size, size), ImagePlane(size, size)};
    for (int c = 0; c < 3; ++c) {
      auto& dst = planes[c].values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = std::round(std::clamp(px[c][k], 0.0, 1.0) * 255.0);
    }
    out.images.push_back(std::move(planes));
    out.manifest.images.push_back({img, image_stem(static_cast<std::size_t>(img)) + ".ppm", size, size, std::nullopt});
  }

  // 70/15/15 split over a seeded permutation of the images.
  const auto n = static_cast<std::size_t>(config.num_images);
  const auto n_train = static_cast<std::size_t>(std::lround(0.70 * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(n))));
  const auto order = rng.permutation(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto& img = out.manifest.images[order[r]];
    img.split = r < n_train ? Split::kTrain : (r < n_train + n_val ? Split::kVal : Split::kTest);
  }
  return out;
}

Dataset SynthDataset::to_dataset(Split split) const {
  Dataset ds;
  ds.categories = manifest.category_names();
  ds.split = split;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& rec = manifest.images[i];
    if (rec.split.value_or(Split::kTest) != split) continue;
    ImageSample s{std::filesystem::path(rec.file_name).stem().string(),
                  {normalize_image(images[i][0]), normalize_image(images[i][1]), normalize_image(images[i][2])},
                  std::nullopt,
                  {}};
    for (const auto& o : objects) {
      if (o.image_index == rec.id) s.annotations.push_back(o.annotation);
    }
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

void write_synth_dataset(const SynthDataset& data, const std::filesystem::path& out_dir,
                         bool write_masks) {
  namespace fs = std::filesystem;
  const fs::path parent = out_dir.has_parent_path() ? out_dir.parent_path() : fs::path(".");
  if (!fs::exists(parent)) {
    throw DataError("output parent directory '" + parent.string() + "' does not exist");
  }
  fs::create_directories(out_dir / "images");
  if (write_masks) fs::create_directories(out_dir / "masks");
  const int nc = static_cast<int>(data.manifest.categories.size());
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const auto& rec = data.manifest.images[i];
    pnm::write_ppm(out_dir / "images" / rec.file_name, data.images[i]);
    if (write_masks) {
      std::vector<Annotation> anns;
      for (const auto& o : data.objects) {
        if (o.image_index == rec.id) anns.push_back(o.annotation);
      }
      const auto stem = fs::path(rec.file_name).stem().string();
      write_mask(out_dir / "masks" / mask_file_name(stem), encode_mask(anns, rec.width, rec.height, nc));
    }
  }
  write_manifest(out_dir / "annotations.json", data.manifest);
}

}  // namespace lupi
