#pragma once

// Minimal single-stage grid detector. Teacher, student and baseline share
// the architecture and differ only in the number of input planes:
//
//   4 x [3x3 conv, stride 2, pad 1, ReLU]  widths 8, 16, 32, 64
//   1x1 conv head -> (objectness, tx, ty, tw, th, class logits) per cell
//
// The embedding used for distillation is the global average pool of the
// last backbone feature map.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lupi/geometry.hpp"

namespace lupi {

enum class ModelRole { kTeacher, kStudent, kBaseline };

std::string_view to_string(ModelRole role);
ModelRole role_from_string(std::string_view name);

struct DetectorConfig {
  static constexpr std::array<int, 4> kBackboneWidths{8, 16, 32, 64};
  static constexpr int kEmbedDim = 64;
  static constexpr int kStride = 16;

  int in_planes = 3;
  int num_classes = 1;
  int input_size = 64;

  int grid() const noexcept { return input_size / kStride; }
  int outputs_per_cell() const noexcept { return 5 + num_classes; }
  double cell_size() const noexcept { return static_cast<double>(input_size) / grid(); }

  /// Throws std::invalid_argument on in_planes outside {3,4}, num_classes < 1
  /// or input_size not a positive multiple of 16.
  void validate() const;

  bool operator==(const DetectorConfig&) const = default;
};

struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

/// Ordered named tensors. Order is fixed by the architecture and used for
/// checkpoints and optimizer state.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::vector<Tensor> tensors) : tensors_(std::move(tensors)) {}

  std::size_t size() const noexcept { return tensors_.size(); }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  auto begin() noexcept { return tensors_.begin(); }
  auto end() noexcept { return tensors_.end(); }
  auto begin() const noexcept { return tensors_.begin(); }
  auto end() const noexcept { return tensors_.end(); }

  /// Total scalar count.
  std::size_t scalar_count() const noexcept;
  /// Same names and shapes, all values zero.
  ParamStore zeros_like() const;
  void fill(double value);

 private:
  std::vector<Tensor> tensors_;
};

struct DetectorModel {
  DetectorConfig config;
  ModelRole role = ModelRole::kStudent;
  ParamStore params;
};

/// Kaiming-uniform (fan-in) kernels, zero biases, objectness bias -2.
DetectorModel make_detector(const DetectorConfig& config, ModelRole role, std::uint64_t seed);

/// Tensor names and shapes implied by a config, in store order.
std::vector<std::pair<std::string, std::vector<int>>> parameter_layout(const DetectorConfig& config);

std::size_t parameter_count(const DetectorModel& model);

struct Embedding {
  std::vector<double> values;
};

/// Dense head output, laid out [row][col][channel].
class RawPrediction {
 public:
  enum Channel : int { kObj = 0, kTx = 1, kTy = 2, kTw = 3, kTh = 4, kClass0 = 5 };

  RawPrediction(int grid, int channels);
  RawPrediction(int grid, int channels, std::vector<double> values);

  int grid() const noexcept { return grid_; }
  int channels() const noexcept { return channels_; }
  int num_classes() const noexcept { return channels_ - 5; }
  double at(int row, int col, int ch) const { return values_[index(row, col, ch)]; }
  double& at(int row, int col, int ch) { return values_[index(row, col, ch)]; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  std::size_t index(int row, int col, int ch) const noexcept {
    return (static_cast<std::size_t>(row) * grid_ + col) * channels_ + ch;
  }

 private:
  int grid_;
  int channels_;
  std::vector<double> values_;
};

struct ForwardResult {
  RawPrediction prediction;
  Embedding embedding;
};

/// Planes in model order: R, G, B, then the privileged plane for teachers.
/// Throws std::invalid_argument on plane-count or size mismatch.
ForwardResult forward(const DetectorModel& model, std::span<const ImagePlane> planes);
ForwardResult forward(const DetectorModel& model, const ImageSample& sample);

Embedding backbone_embedding(const DetectorModel& model, std::span<const ImagePlane> planes);
Embedding backbone_embedding(const DetectorModel& model, const ImageSample& sample);

/// The model's input planes taken from a sample (privileged last for 4-plane
/// models). Throws std::invalid_argument when a 4-plane model meets a sample
/// without a privileged plane.
std::vector<ImagePlane> model_inputs(const DetectorConfig& config, const ImageSample& sample);

/// Every intermediate needed for backpropagation.
struct ForwardTrace {
  /// input, then post-ReLU output of each backbone block ([c][y][x]).
  std::array<std::vector<double>, 5> activations;
  /// pre-ReLU values of each backbone block.
  std::array<std::vector<double>, 4> pre_activations;
  ForwardResult result;
};

ForwardTrace forward_trace(const DetectorModel& model, std::span<const ImagePlane> planes);

/// Accumulates parameter gradients into grads given the loss gradient with
/// respect to the raw prediction and (optionally empty) the embedding.
void backward(const DetectorModel& model, const ForwardTrace& trace,
              std::span<const double> grad_prediction, std::span<const double> grad_embedding,
              ParamStore& grads);

struct CellTarget {
  bool positive = false;
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
  ClassId class_id;
};

struct DetectionTargets {
  int grid = 0;
  std::vector<CellTarget> cells;  // row-major

  const CellTarget& at(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * grid + col];
  }
};

/// The cell containing a box center is responsible for it; collisions keep
/// the larger box, then the lower class id, then the earlier annotation.
DetectionTargets assign_targets(std::span<const Annotation> annotations,
                                const DetectorConfig& config);

struct LossWeights {
  double obj = 1.0;
  double noobj = 0.5;
  double box = 5.0;
  double cls = 1.0;
};

struct LossTerms {
  double obj = 0.0;
  double noobj = 0.0;
  double box = 0.0;
  double cls = 0.0;
  double total() const noexcept { return obj + noobj + box + cls; }
};

/// Objectness BCE over negative and positive cells, smooth-L1 on the
/// sigmoid box parameters, softmax cross-entropy on classes. Each term is
/// mean-reduced over its contributing cells and weighted.
/// If grad is non-empty it receives d(loss)/d(prediction) (overwritten).
LossTerms detection_loss_terms(const RawPrediction& pred, const DetectionTargets& targets,
                               std::span<double> grad = {}, const LossWeights& weights = {});

double detection_loss(const RawPrediction& pred, const DetectionTargets& targets);

/// Converts a dense prediction into scored boxes clipped to the image.
std::vector<Detection> decode(const RawPrediction& pred, const DetectorConfig& config,
                              double score_threshold);

struct TrainingMetadata {
  std::optional<double> alpha;
  std::uint64_t seed = 0;
  int best_epoch = -1;
  int epochs_run = 0;

  bool operator==(const TrainingMetadata&) const = default;
};

struct Checkpoint {
  DetectorModel model;
  TrainingMetadata meta;
};

/// "LUPIDET1", u64 little-endian header length, JSON header, then
/// little-endian float32 blobs in header order.
std::string encode_checkpoint(const DetectorModel& model, const TrainingMetadata& meta);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const DetectorModel& model,
                     const TrainingMetadata& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to float32 precision, matching a save/load cycle.
void quantize_to_float(ParamStore& params);

double sigmoid(double x) noexcept;

}  // namespace lupi
