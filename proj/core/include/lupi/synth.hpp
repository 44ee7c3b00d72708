#pragma once

// Deterministic "synthlitter" generator: value-noise backgrounds with small
// class-keyed shapes, some partially covered by background patches.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lupi/geometry.hpp"
#include "lupi/ingest.hpp"

namespace lupi {

/// Shape archetype per class id, in order.
inline constexpr std::array<const char*, 6> kSynthClassNames{"disc",  "square", "triangle",
                                                              "ring",  "cross",  "bar"};

struct SynthConfig {
  int num_images = 20;
  int image_size = 192;
  int num_classes = 6;
  int objects_min = 1;
  int objects_max = 4;
  int side_min = 8;
  int side_max = 24;
  double occlusion_rate = 0.2;
  /// Lattice spacing of the coarse background noise octave, in pixels.
  int noise_scale = 24;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on violated invariants.
  void validate() const;
};

struct SynthObject {
  std::int64_t image_index = 0;
  Annotation annotation;
  bool occluded = false;
};

struct SynthDataset {
  CocoManifest manifest;
  /// Raw 0..255 RGB planes, in manifest image order.
  std::vector<std::array<ImagePlane, 3>> images;
  std::vector<SynthObject> objects;

  /// Samples with normalized planes, filtered to one split.
  Dataset to_dataset(Split split) const;
};

SynthDataset generate_dataset(const SynthConfig& config);

/// <out>/images/*.ppm, <out>/annotations.json and, when requested,
/// <out>/masks/<id>_priv.pgm. out_dir is created if its parent exists.
void write_synth_dataset(const SynthDataset& data, const std::filesystem::path& out_dir,
                         bool write_masks);

}  // namespace lupi
