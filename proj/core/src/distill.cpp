#include "lupi/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lupi/errors.hpp"
#include "lupi/random.hpp"

namespace lupi {
namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1;

DetectorConfig config_for(const Dataset& train, int in_planes) {
  if (train.samples.empty()) throw DataError("training split is empty");
  const int side = train.samples.front().width();
  for (const auto& s : train.samples) {
    if (s.width() != side || s.height() != side) {
      throw DataError("training samples must be square and share one size; '" + s.id +
                      "' is " + std::to_string(s.width()) + "x" + std::to_string(s.height()));
    }
  }
  DetectorConfig cfg{in_planes, train.num_classes(), side};
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("dataset does not fit the detector: ") + e.what());
  }
  return cfg;
}

void require_privileged(const Dataset& data, const char* what) {
  for (const auto& s : data.samples) {
    if (!s.privileged) {
      throw DataError(std::string(what) + " sample '" + s.id + "' has no privileged plane");
    }
  }
}

// Shared loop for teacher and student. teacher_embeddings is empty unless
// the distance term is active.
TrainResult run_training(const Dataset& train, const Dataset& val, DetectorModel model,
                         const std::vector<Embedding>& teacher_embeddings,
                         const DistillConfig& cfg, const EvalConfig& eval,
                         const EpochCallback& on_epoch) {
  const bool distill = !teacher_embeddings.empty();
  const double alpha = distill ? cfg.alpha : 0.0;
  const auto& mcfg = model.config;

  std::vector<std::vector<ImagePlane>> inputs;
  std::vector<DetectionTargets> targets;
  inputs.reserve(train.samples.size());
  targets.reserve(train.samples.size());
  for (const auto& s : train.samples) {
    inputs.push_back(model_inputs(mcfg, s));
    targets.push_back(assign_targets(s.annotations, mcfg));
  }

  Rng shuffle(derive_seed(cfg.seed, kShuffleStream));
  AdamState adam = AdamState::zeros_for(model.params);
  ParamStore grads = model.params.zeros_like();
  ParamStore best_params = model.params;
  std::vector<double> g_pred(static_cast<std::size_t>(mcfg.grid()) * mcfg.grid() * mcfg.outputs_per_cell());
  std::vector<double> g_emb(DetectorConfig::kEmbedDim);

  TrainResult result;
  double best_metric = -std::numeric_limits<double>::infinity();
  const std::size_t n = inputs.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto order = shuffle.permutation(n);
    double det_sum = 0.0;
    double dist_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      grads.fill(0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        const auto trace = forward_trace(model, inputs[i]);
        const double det = detection_loss_terms(trace.result.prediction, targets[i], g_pred).total();
        if (!std::isfinite(det)) throw TrainingError("non-finite detection loss at epoch " + std::to_string(epoch));
        det_sum += det;
        for (auto& g : g_pred) g *= (1.0 - alpha) * inv_b;
        if (distill) {
          const double d = cosine_distance_with_grad(trace.result.embedding.values,
                                                     teacher_embeddings[i].values, g_emb);
          dist_sum += d;
          for (auto& g : g_emb) g *= alpha * inv_b;
          backward(model, trace, g_pred, g_emb, grads);
        } else {
          backward(model, trace, g_pred, {}, grads);
        }
      }
      adam_step(model.params, grads, adam, cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.det_term = det_sum / static_cast<double>(n);
    rec.distill_term = distill ? dist_sum / static_cast<double>(n) : std::nan("");
    rec.train_loss = distill ? student_loss(rec.det_term, rec.distill_term, alpha) : rec.det_term;
    rec.val_map50 = evaluate_model(model, val, eval).report.map50;
    if (rec.val_map50 > best_metric) {
      best_metric = rec.val_map50;
      result.log.best_epoch = epoch;
      best_params = model.params;
      rec.epochs_since_best = 0;
    } else {
      rec.epochs_since_best = result.log.epochs.back().epochs_since_best + 1;
    }
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (early_stop_check(result.log, cfg.patience) == StopDecision::kStop) break;
  }

  model.params = std::move(best_params);
  quantize_to_float(model.params);
  result.model = std::move(model);
  result.meta.seed = cfg.seed;
  result.meta.best_epoch = result.log.best_epoch;
  result.meta.epochs_run = static_cast<int>(result.log.epochs.size());
  return result;
}

}  // namespace

void DistillConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0,1]");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,det_term,distill_term,val_map50,epochs_since_best\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << format_metric(e.train_loss) << ',' << format_metric(e.det_term) << ','
        << (std::isnan(e.distill_term) ? std::string("nan") : format_metric(e.distill_term)) << ','
        << format_metric(e.val_map50) << ',' << e.epochs_since_best << '\n';
  }
  return out.str();
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_distance: length mismatch");
  double uv = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (nu < kMinEmbeddingNorm || nv < kMinEmbeddingNorm) return 1.0;
  return std::clamp(1.0 - uv / (nu * nv), 0.0, 2.0);
}

double cosine_distance(const Embedding& u, const Embedding& v) {
  return cosine_distance(u.values, v.values);
}

double cosine_distance_with_grad(std::span<const double> u, std::span<const double> v,
                                 std::span<double> grad_u) {
  if (u.size() != v.size() || grad_u.size() != u.size()) {
    throw std::invalid_argument("cosine_distance: length mismatch");
  }
  double uv = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double nu = std::sqrt(uu);
  const double nv = std::sqrt(vv);
  if (nu < kMinEmbeddingNorm || nv < kMinEmbeddingNorm) {
    std::fill(grad_u.begin(), grad_u.end(), 0.0);
    return 1.0;
  }
  const double inv = 1.0 / (nu * nv);
  const double cos = uv * inv;
  // d(1 - cos)/du = -(v / (|u||v|) - cos * u / |u|^2)
  for (std::size_t i = 0; i < u.size(); ++i) grad_u[i] = cos * u[i] / uu - v[i] * inv;
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

double student_loss(double det_loss, double distance, double alpha) {
  return (1.0 - alpha) * det_loss + alpha * distance;
}

AdamState AdamState::zeros_for(const ParamStore& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state,
               const DistillConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state lists differ");
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t].data;
    const auto& g = grads[t].data;
    auto& m = state.m[t].data;
    auto& v = state.v[t].data;
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw std::invalid_argument("adam_step: shape mismatch in '" + params[t].name + "'");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + config.weight_decay * p[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

StopDecision early_stop_check(const TrainLog& log, int patience) {
  if (log.epochs.empty()) throw std::invalid_argument("early_stop_check: empty log");
  return log.epochs.back().epochs_since_best >= patience ? StopDecision::kStop
                                                         : StopDecision::kContinue;
}

TrainResult train_teacher(const Dataset& train, const Dataset& val, const DistillConfig& config,
                          const EvalConfig& eval, const EpochCallback& on_epoch) {
  config.validate();
  require_privileged(train, "train");
  require_privileged(val, "val");
  const auto mcfg = config_for(train, 4);
  auto model = make_detector(mcfg, ModelRole::kTeacher, derive_seed(config.seed, kInitStream));
  return run_training(train, val, std::move(model), {}, config, eval, on_epoch);
}

TrainResult train_student(const Dataset& train, const Dataset& val, const DetectorModel* teacher,
                          const DistillConfig& config, const EvalConfig& eval,
                          const EpochCallback& on_epoch) {
  config.validate();
  const auto mcfg = config_for(train, 3);
  std::vector<Embedding> teacher_embeddings;
  if (config.alpha > 0.0) {
    if (teacher == nullptr) throw std::invalid_argument("alpha > 0 requires a teacher model");
    if (teacher->config.in_planes != 4) throw std::invalid_argument("teacher must be a 4-plane model");
    if (teacher->config.num_classes != mcfg.num_classes ||
        teacher->config.input_size != mcfg.input_size) {
      throw std::invalid_argument("teacher and student configs differ beyond the input planes");
    }
    require_privileged(train, "train");
    teacher_embeddings.reserve(train.samples.size());
    for (const auto& s : train.samples) teacher_embeddings.push_back(backbone_embedding(*teacher, s));
  }
  const ModelRole role = config.alpha > 0.0 ? ModelRole::kStudent : ModelRole::kBaseline;
  auto model = make_detector(mcfg, role, derive_seed(config.seed, kInitStream));
  auto result = run_training(train, val, std::move(model), teacher_embeddings, config, eval, on_epoch);
  result.meta.alpha = config.alpha;
  return result;
}

std::vector<Detection> predict(const DetectorModel& model, const ImageSample& sample,
                               const EvalConfig& eval) {
  const auto out = forward(model, sample);
  return nms(decode(out.prediction, model.config, eval.score_threshold), eval.nms_iou);
}

ModelEvaluation evaluate_model(const DetectorModel& model, const Dataset& data,
                               const EvalConfig& eval) {
  ModelEvaluation ev;
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Annotation>> gts;
  for (const auto& s : data.samples) {
    auto d = predict(model, s, eval);
    ev.predictions.push_back({s.id, d});
    dets.push_back(std::move(d));
    gts.push_back(s.annotations);
  }
  ev.report = coco_map(dets, gts, data.categories, eval);
  return ev;
}

}  // namespace lupi
