#pragma once

// Teacher and student training. The student minimizes
//
//   (1 - alpha) * detection_loss + alpha * cosine_distance(student_emb, teacher_emb)
//
// with the teacher frozen; alpha = 0 is the baseline and never touches the
// teacher.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lupi/detector.hpp"
#include "lupi/metrics.hpp"

namespace lupi {

struct DistillConfig {
  double alpha = 0.0;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  int max_epochs = 100;
  int patience = 8;
  int batch_size = 8;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double det_term = 0.0;
  /// NaN when alpha = 0 (the distance is not evaluated).
  double distill_term = 0.0;
  double val_map50 = 0.0;
  int epochs_since_best = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;

  /// epoch,train_loss,det_term,distill_term,val_map50,epochs_since_best
  std::string to_csv() const;
};

/// Norms below this make cosine_distance return 1 with zero gradient.
inline constexpr double kMinEmbeddingNorm = 1e-12;

/// 1 - u.v / (|u| |v|). Throws std::invalid_argument on length mismatch.
double cosine_distance(std::span<const double> u, std::span<const double> v);
double cosine_distance(const Embedding& u, const Embedding& v);

/// Same value; writes d(distance)/du into grad_u (overwritten).
double cosine_distance_with_grad(std::span<const double> u, std::span<const double> v,
                                 std::span<double> grad_u);

/// (1 - alpha) * det_loss + alpha * distance.
double student_loss(double det_loss, double distance, double alpha);

struct AdamState {
  ParamStore m;
  ParamStore v;
  long step = 0;

  static AdamState zeros_for(const ParamStore& params);
};

/// Bias-corrected Adam update. weight_decay, when nonzero, is added to the
/// gradient as an L2 term. Throws std::invalid_argument on shape mismatch.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state,
               const DistillConfig& config);

enum class StopDecision { kContinue, kStop };

/// Stop iff the last epoch's epochs_since_best >= patience.
StopDecision early_stop_check(const TrainLog& log, int patience);

struct TrainResult {
  /// Best-epoch parameters, rounded to float32 (identical to a checkpoint
  /// reload).
  DetectorModel model;
  TrainLog log;
  TrainingMetadata meta;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Detection-only training of a 4-plane model. Every train and val sample
/// must carry a privileged plane (DataError otherwise).
TrainResult train_teacher(const Dataset& train, const Dataset& val, const DistillConfig& config,
                          const EvalConfig& eval = {}, const EpochCallback& on_epoch = {});

/// 3-plane training with the combined loss. teacher may be null only when
/// alpha = 0; it is only read, and only for train samples (which then need
/// privileged planes). Validation uses RGB only.
TrainResult train_student(const Dataset& train, const Dataset& val, const DetectorModel* teacher,
                          const DistillConfig& config, const EvalConfig& eval = {},
                          const EpochCallback& on_epoch = {});

/// decode -> nms for one sample.
std::vector<Detection> predict(const DetectorModel& model, const ImageSample& sample,
                               const EvalConfig& eval);

/// Predictions plus the COCO report over a dataset (teachers read the
/// privileged planes).
struct ModelEvaluation {
  std::vector<ImagePredictions> predictions;
  EvalReport report;
};

ModelEvaluation evaluate_model(const DetectorModel& model, const Dataset& data,
                               const EvalConfig& eval);

}  // namespace lupi
