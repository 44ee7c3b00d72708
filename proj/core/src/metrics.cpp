#include "lupi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

namespace lupi {
namespace {

// Strict weak order: score desc, area desc; callers fall back to position.
bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score() != b.score()) return a.score() > b.score();
  return box_area(a.box()) > box_area(b.box());
}

double mean_of(const std::vector<std::optional<double>>& row) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : row) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

}  // namespace

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50.0 + 5.0 * k) / 100.0);
  return t;
}

std::vector<Detection> sort_by_score(std::span<const Detection> dets) {
  std::vector<Detection> sorted(dets.begin(), dets.end());
  std::stable_sort(sorted.begin(), sorted.end(), ranks_before);
  return sorted;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<Detection> kept;
  for (const auto& d : sort_by_score(dets)) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id() == d.class_id() && iou(k.box(), d.box()) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

int MatchResult::tp() const {
  return static_cast<int>(std::count(true_positive.begin(), true_positive.end(), true));
}

int MatchResult::fp() const { return static_cast<int>(true_positive.size()) - tp(); }

MatchResult match_detections(std::span<const Detection> dets, std::span<const Annotation> gts,
                             double iou_threshold) {
  MatchResult result;
  result.true_positive.assign(dets.size(), false);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best_iou = -1.0;
    std::size_t best = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != dets[i].class_id()) continue;
      const double o = iou(dets[i].box(), gts[g].box);
      if (o >= iou_threshold && o > best_iou) {
        best_iou = o;
        best = g;
      }
    }
    if (best < gts.size()) {
      taken[best] = true;
      result.true_positive[i] = true;
    }
  }
  result.false_negatives = static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return result;
}

double average_precision(const std::vector<bool>& tp_sequence, int num_gt) {
  if (num_gt <= 0 || tp_sequence.empty()) return 0.0;
  const std::size_t n = tp_sequence.size();
  std::vector<long> cum_tp(n);
  std::vector<double> precision(n);
  long tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += tp_sequence[i] ? 1 : 0;
    cum_tp[i] = tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  // Recall points r = k/100 compared exactly as tp*100 >= k*num_gt.
  double sum = 0.0;
  std::size_t i = 0;
  for (long k = 0; k <= 100; ++k) {
    while (i < n && cum_tp[i] * 100 < k * num_gt) ++i;
    if (i == n) break;
    sum += precision[i];
  }
  return sum / 101.0;
}

PrecisionRecallF1 prf1(long tp, long fp, long fn) {
  PrecisionRecallF1 r;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

EvalReport coco_map(const std::vector<std::vector<Detection>>& dets_by_image,
                    const std::vector<std::vector<Annotation>>& gts_by_image,
                    const std::vector<std::string>& categories, const EvalConfig& config) {
  if (dets_by_image.size() != gts_by_image.size()) {
    throw std::invalid_argument("detection and ground-truth image lists differ in length");
  }
  const int num_classes = static_cast<int>(categories.size());
  for (const auto& dets : dets_by_image) {
    for (const auto& d : dets) {
      if (d.class_id().value >= num_classes) {
        throw std::invalid_argument("detection has unknown class id " +
                                    std::to_string(d.class_id().value));
      }
    }
  }

  std::vector<int> gt_count(num_classes, 0);
  for (const auto& gts : gts_by_image) {
    for (const auto& a : gts) {
      if (a.class_id.value < 0 || a.class_id.value >= num_classes) {
        throw std::invalid_argument("ground truth has unknown class id");
      }
      ++gt_count[a.class_id.value];
    }
  }

  // Ranked detections per image and their pooled order per class.
  std::vector<std::vector<Detection>> ranked;
  ranked.reserve(dets_by_image.size());
  for (const auto& dets : dets_by_image) ranked.push_back(sort_by_score(dets));

  struct PoolEntry {
    std::size_t image;
    std::size_t index;
  };
  std::vector<std::vector<PoolEntry>> pool(num_classes);
  for (std::size_t img = 0; img < ranked.size(); ++img) {
    for (std::size_t i = 0; i < ranked[img].size(); ++i) {
      pool[ranked[img][i].class_id().value].push_back({img, i});
    }
  }
  for (auto& entries : pool) {
    std::stable_sort(entries.begin(), entries.end(), [&](const PoolEntry& a, const PoolEntry& b) {
      return ranks_before(ranked[a.image][a.index], ranked[b.image][b.index]);
    });
  }

  EvalReport report;
  report.categories = categories;
  report.thresholds = config.iou_thresholds;
  for (double thr : config.iou_thresholds) {
    std::vector<MatchResult> matches;
    matches.reserve(ranked.size());
    for (std::size_t img = 0; img < ranked.size(); ++img) {
      matches.push_back(match_detections(ranked[img], gts_by_image[img], thr));
    }
    std::vector<std::optional<double>> row(num_classes);
    for (int c = 0; c < num_classes; ++c) {
      if (gt_count[c] == 0) continue;
      std::vector<bool> seq;
      seq.reserve(pool[c].size());
      for (const auto& e : pool[c]) seq.push_back(matches[e.image].true_positive[e.index]);
      row[c] = average_precision(seq, gt_count[c]);
    }
    report.per_class_ap.push_back(std::move(row));
  }

  auto row_mean_at = [&](double t) {
    for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
      if (std::abs(report.thresholds[k] - t) < 1e-9) return mean_of(report.per_class_ap[k]);
    }
    return std::nan("");
  };
  report.map50 = row_mean_at(0.5);
  report.map75 = row_mean_at(0.75);
  double total = 0.0;
  for (const auto& row : report.per_class_ap) total += mean_of(row);
  report.map5095 = report.per_class_ap.empty() ? 0.0 : total / static_cast<double>(report.per_class_ap.size());

  for (std::size_t img = 0; img < ranked.size(); ++img) {
    std::vector<Detection> op;
    for (const auto& d : ranked[img]) {
      if (d.score() >= config.operating_score) op.push_back(d);
    }
    const auto m = match_detections(op, gts_by_image[img], config.operating_iou);
    report.tp += m.tp();
    report.fp += m.fp();
    report.fn += m.false_negatives;
  }
  const auto p = prf1(report.tp, report.fp, report.fn);
  report.precision = p.precision;
  report.recall = p.recall;
  report.f1 = p.f1;
  return report;
}

std::string format_metric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["map50"] = map50;
  j["map75"] = map75;
  j["map5095"] = map5095;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["tp"] = tp;
  j["fp"] = fp;
  j["fn"] = fn;
  j["thresholds"] = thresholds;
  j["categories"] = categories;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : per_class_ap) {
    auto r = nlohmann::ordered_json::array();
    for (const auto& v : row) r.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
    rows.push_back(std::move(r));
  }
  j["per_class_ap"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "metric,class,threshold,value\n";
  out << "map50,,," << format_metric(map50) << "\n";
  out << "map75,,," << format_metric(map75) << "\n";
  out << "map5095,,," << format_metric(map5095) << "\n";
  out << "precision,,," << format_metric(precision) << "\n";
  out << "recall,,," << format_metric(recall) << "\n";
  out << "f1,,," << format_metric(f1) << "\n";
  out << "tp,,," << tp << "\n";
  out << "fp,,," << fp << "\n";
  out << "fn,,," << fn << "\n";
  for (std::size_t k = 0; k < per_class_ap.size(); ++k) {
    for (std::size_t c = 0; c < per_class_ap[k].size(); ++c) {
      if (!per_class_ap[k][c]) continue;
      out << "ap," << categories[c] << "," << format_metric(thresholds[k]) << ","
          << format_metric(*per_class_ap[k][c]) << "\n";
    }
  }
  return out.str();
}

std::string predictions_to_json(std::span<const ImagePredictions> predictions) {
  auto list = nlohmann::ordered_json::array();
  for (const auto& p : predictions) {
    for (const auto& d : p.detections) {
      nlohmann::ordered_json j;
      j["image_id"] = p.image_id;
      j["class_id"] = d.class_id().value;
      j["bbox"] = {d.box().x_min(), d.box().y_min(), d.box().width(), d.box().height()};
      j["score"] = d.score();
      list.push_back(std::move(j));
    }
  }
  return list.dump(1) + "\n";
}

}  // namespace lupi
