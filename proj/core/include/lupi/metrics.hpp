#pragma once

// Post-processing and COCO-style evaluation.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lupi/geometry.hpp"

namespace lupi {

/// {0.50, 0.55, ..., 0.95}
std::vector<double> coco_iou_thresholds();

struct EvalConfig {
  /// Decode threshold for the detections that enter AP computation.
  double score_threshold = 0.01;
  double nms_iou = 0.5;
  /// Operating point for the single precision / recall / F1 numbers.
  double operating_score = 0.5;
  double operating_iou = 0.5;
  std::vector<double> iou_thresholds = coco_iou_thresholds();
};

/// Orders detections by score descending, then larger area, then input
/// position. Stable total order used by nms and evaluation.
std::vector<Detection> sort_by_score(std::span<const Detection> dets);

/// Class-wise greedy suppression. A detection is kept iff its IoU with every
/// already-kept detection of the same class is below iou_threshold. Output is
/// in sort_by_score order.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

struct MatchResult {
  /// Per detection, in input order.
  std::vector<bool> true_positive;
  int false_negatives = 0;

  int tp() const;
  int fp() const;
};

/// Greedy per-class matching; dets must already be sorted by score. Each
/// detection takes the unmatched same-class ground truth with the highest
/// IoU >= iou_threshold (lowest index on ties).
MatchResult match_detections(std::span<const Detection> dets, std::span<const Annotation> gts,
                             double iou_threshold);

/// 101-point interpolated AP of a score-sorted TP/FP sequence. Returns 0
/// when num_gt == 0.
double average_precision(const std::vector<bool>& tp_sequence, int num_gt);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

PrecisionRecallF1 prf1(long tp, long fp, long fn);

struct EvalReport {
  std::vector<std::string> categories;
  std::vector<double> thresholds;
  /// [threshold][class]; empty for classes without any ground truth.
  std::vector<std::vector<std::optional<double>>> per_class_ap;
  double map50 = 0.0;
  double map75 = 0.0;
  double map5095 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;

  /// Stable key order.
  std::string to_json() const;
  /// Long format: metric rows followed by per-class AP rows.
  std::string to_csv() const;
};

/// Pools per-image matches into per-class AP at every threshold. Classes with
/// no ground truth in any image are excluded from the means. Detections are
/// expected post-NMS. Throws std::invalid_argument for detections whose
/// class id is outside the category table or when the image lists differ in
/// length.
EvalReport coco_map(const std::vector<std::vector<Detection>>& dets_by_image,
                    const std::vector<std::vector<Annotation>>& gts_by_image,
                    const std::vector<std::string>& categories, const EvalConfig& config = {});

struct ImagePredictions {
  std::string image_id;
  std::vector<Detection> detections;
};

/// JSON list of {image_id, class_id, bbox [x,y,w,h], score}.
std::string predictions_to_json(std::span<const ImagePredictions> predictions);

/// Formats a metric for CSV/JSON-adjacent text output ("%.6f").
std::string format_metric(double value);

}  // namespace lupi
