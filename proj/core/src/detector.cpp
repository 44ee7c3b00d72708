#include "lupi/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <utility>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lupi/errors.hpp"
#include "lupi/random.hpp"

namespace lupi {
namespace {

constexpr char kMagic[] = "LUPIDET1";
constexpr std::size_t kMagicLen = 8;
constexpr double kObjectnessPrior = -2.0;

std::string block_name(int layer, const char* what) {
  return "backbone." + std::to_string(layer) + "." + what;
}

int block_in_channels(const DetectorConfig& cfg, int layer) {
  return layer == 0 ? cfg.in_planes : DetectorConfig::kBackboneWidths[layer - 1];
}

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// 3x3 convolution, stride 2, zero padding 1. in: [in_c][n][n], out: [out_c][n/2][n/2].
void conv_forward(const double* in, int in_c, int n, const double* w, const double* b, int out_c,
                  double* out) {
  const int m = n / 2;
  for (int o = 0; o < out_c; ++o) {
    double* out_o = out + static_cast<std::size_t>(o) * m * m;
    std::fill(out_o, out_o + static_cast<std::size_t>(m) * m, b[o]);
    for (int i = 0; i < in_c; ++i) {
      const double* in_i = in + static_cast<std::size_t>(i) * n * n;
      for (int ky = 0; ky < 3; ++ky) {
        const int oy_lo = ky == 0 ? 1 : 0;
        const int oy_hi = std::min(m - 1, (n - ky) / 2);
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = w[((static_cast<std::size_t>(o) * in_c + i) * 3 + ky) * 3 + kx];
          const int ox_lo = kx == 0 ? 1 : 0;
          const int ox_hi = std::min(m - 1, (n - kx) / 2);
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const double* row_in = in_i + static_cast<std::size_t>(2 * oy + ky - 1) * n;
            double* row_out = out_o + static_cast<std::size_t>(oy) * m;
            for (int ox = ox_lo; ox <= ox_hi; ++ox) row_out[ox] += wv * row_in[2 * ox + kx - 1];
          }
        }
      }
    }
  }
}

// Accumulates dW, db and (when grad_in is non-null) dIn.
void conv_backward(const double* in, int in_c, int n, const double* w, int out_c,
                   const double* grad_out, double* grad_w, double* grad_b, double* grad_in) {
  const int m = n / 2;
  for (int o = 0; o < out_c; ++o) {
    const double* g_o = grad_out + static_cast<std::size_t>(o) * m * m;
    double bsum = 0.0;
    for (int k = 0; k < m * m; ++k) bsum += g_o[k];
    grad_b[o] += bsum;
    for (int i = 0; i < in_c; ++i) {
      const double* in_i = in + static_cast<std::size_t>(i) * n * n;
      double* gin_i = grad_in ? grad_in + static_cast<std::size_t>(i) * n * n : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const int oy_lo = ky == 0 ? 1 : 0;
        const int oy_hi = std::min(m - 1, (n - ky) / 2);
        for (int kx = 0; kx < 3; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(o) * in_c + i) * 3 + ky) * 3 + kx;
          const double wv = w[widx];
          const int ox_lo = kx == 0 ? 1 : 0;
          const int ox_hi = std::min(m - 1, (n - kx) / 2);
          double wsum = 0.0;
          for (int oy = oy_lo; oy <= oy_hi; ++oy) {
            const std::size_t in_off = static_cast<std::size_t>(2 * oy + ky - 1) * n;
            const double* row_in = in_i + in_off;
            const double* row_g = g_o + static_cast<std::size_t>(oy) * m;
            for (int ox = ox_lo; ox <= ox_hi; ++ox) wsum += row_g[ox] * row_in[2 * ox + kx - 1];
            if (gin_i) {
              double* row_gin = gin_i + in_off;
              for (int ox = ox_lo; ox <= ox_hi; ++ox) row_gin[2 * ox + kx - 1] += wv * row_g[ox];
            }
          }
          grad_w[widx] += wsum;
        }
      }
    }
  }
}

std::vector<double> pack_inputs(const DetectorConfig& cfg, std::span<const ImagePlane> planes) {
  if (static_cast<int>(planes.size()) != cfg.in_planes) {
    throw std::invalid_argument("model expects " + std::to_string(cfg.in_planes) +
                                " input planes, got " + std::to_string(planes.size()));
  }
  const int n = cfg.input_size;
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(cfg.in_planes) * n * n);
  for (const auto& p : planes) {
    if (p.width() != n || p.height() != n) {
      throw std::invalid_argument("input plane is " + std::to_string(p.width()) + "x" +
                                  std::to_string(p.height()) + ", model expects " +
                                  std::to_string(n) + "x" + std::to_string(n));
    }
    x.insert(x.end(), p.values().begin(), p.values().end());
  }
  return x;
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::kTeacher: return "teacher";
    case ModelRole::kStudent: return "student";
    case ModelRole::kBaseline: return "baseline";
  }
  return "student";
}

ModelRole role_from_string(std::string_view name) {
  if (name == "teacher") return ModelRole::kTeacher;
  if (name == "student") return ModelRole::kStudent;
  if (name == "baseline") return ModelRole::kBaseline;
  throw DataError("unknown model role '" + std::string(name) + "'");
}

void DetectorConfig::validate() const {
  if (in_planes != 3 && in_planes != 4) throw std::invalid_argument("in_planes must be 3 or 4");
  if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (input_size < kStride || input_size % kStride != 0) {
    throw std::invalid_argument("input_size must be a positive multiple of 16");
  }
}

const Tensor& ParamStore::at(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

Tensor& ParamStore::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z = *this;
  z.fill(0.0);
  return z;
}

void ParamStore::fill(double value) {
  for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), value);
}

std::vector<std::pair<std::string, std::vector<int>>> parameter_layout(const DetectorConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<int>>> layout;
  for (int l = 0; l < 4; ++l) {
    const int out_c = DetectorConfig::kBackboneWidths[l];
    layout.emplace_back(block_name(l, "weight"), std::vector<int>{out_c, block_in_channels(cfg, l), 3, 3});
    layout.emplace_back(block_name(l, "bias"), std::vector<int>{out_c});
  }
  layout.emplace_back("head.weight",
                      std::vector<int>{cfg.outputs_per_cell(), DetectorConfig::kEmbedDim, 1, 1});
  layout.emplace_back("head.bias", std::vector<int>{cfg.outputs_per_cell()});
  return layout;
}

DetectorModel make_detector(const DetectorConfig& config, ModelRole role, std::uint64_t seed) {
  config.validate();
  std::vector<Tensor> tensors;
  std::uint64_t stream = 0;
  for (auto& [name, shape] : parameter_layout(config)) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    Tensor t{name, shape, std::vector<double>(count, 0.0)};
    if (shape.size() == 4) {
      const double fan_in = static_cast<double>(shape[1]) * shape[2] * shape[3];
      const double bound = std::sqrt(6.0 / fan_in);
      Rng rng(derive_seed(seed, stream));
      for (auto& v : t.data) v = rng.uniform(-bound, bound);
    }
    ++stream;
    tensors.push_back(std::move(t));
  }
  DetectorModel model{config, role, ParamStore(std::move(tensors))};
  model.params.at("head.bias").data[RawPrediction::kObj] = kObjectnessPrior;
  return model;
}

std::size_t parameter_count(const DetectorModel& model) { return model.params.scalar_count(); }

RawPrediction::RawPrediction(int grid, int channels)
    : RawPrediction(grid, channels,
                    std::vector<double>(static_cast<std::size_t>(grid) * grid * channels, 0.0)) {}

RawPrediction::RawPrediction(int grid, int channels, std::vector<double> values)
    : grid_(grid), channels_(channels), values_(std::move(values)) {
  if (grid < 1 || channels < 6) throw std::invalid_argument("invalid raw prediction shape");
  if (values_.size() != static_cast<std::size_t>(grid) * grid * channels) {
    throw std::invalid_argument("raw prediction value count does not match its shape");
  }
}

ForwardTrace forward_trace(const DetectorModel& model, std::span<const ImagePlane> planes) {
  const auto& cfg = model.config;
  ForwardTrace tr{{}, {}, {RawPrediction(cfg.grid(), cfg.outputs_per_cell()), Embedding{}}};
  tr.activations[0] = pack_inputs(cfg, planes);

  int n = cfg.input_size;
  for (int l = 0; l < 4; ++l) {
    const int in_c = block_in_channels(cfg, l);
    const int out_c = DetectorConfig::kBackboneWidths[l];
    const int m = n / 2;
    auto& pre = tr.pre_activations[l];
    pre.assign(static_cast<std::size_t>(out_c) * m * m, 0.0);
    conv_forward(tr.activations[l].data(), in_c, n, model.params[2 * l].data.data(),
                 model.params[2 * l + 1].data.data(), out_c, pre.data());
    auto& post = tr.activations[l + 1];
    post.resize(pre.size());
    std::transform(pre.begin(), pre.end(), post.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
    n = m;
  }

  const int s = cfg.grid();
  const int cells = s * s;
  const int dim = DetectorConfig::kEmbedDim;
  const auto& feat = tr.activations[4];

  auto& emb = tr.result.embedding.values;
  emb.assign(dim, 0.0);
  for (int c = 0; c < dim; ++c) {
    double sum = 0.0;
    for (int k = 0; k < cells; ++k) sum += feat[static_cast<std::size_t>(c) * cells + k];
    emb[c] = sum / cells;
  }

  const auto& hw = model.params.at("head.weight").data;
  const auto& hb = model.params.at("head.bias").data;
  const int outs = cfg.outputs_per_cell();
  auto& pred = tr.result.prediction.values();
  for (int k = 0; k < cells; ++k) {
    for (int ch = 0; ch < outs; ++ch) {
      double acc = hb[ch];
      const double* wrow = hw.data() + static_cast<std::size_t>(ch) * dim;
      for (int c = 0; c < dim; ++c) acc += wrow[c] * feat[static_cast<std::size_t>(c) * cells + k];
      pred[static_cast<std::size_t>(k) * outs + ch] = acc;
    }
  }
  return tr;
}

ForwardResult forward(const DetectorModel& model, std::span<const ImagePlane> planes) {
  return forward_trace(model, planes).result;
}

std::vector<ImagePlane> model_inputs(const DetectorConfig& config, const ImageSample& sample) {
  std::vector<ImagePlane> planes(sample.rgb.begin(), sample.rgb.end());
  if (config.in_planes == 4) {
    if (!sample.privileged) {
      throw std::invalid_argument("sample '" + sample.id +
                                  "' has no privileged plane but the model expects 4 planes");
    }
    planes.push_back(*sample.privileged);
  }
  return planes;
}

ForwardResult forward(const DetectorModel& model, const ImageSample& sample) {
  return forward(model, model_inputs(model.config, sample));
}

Embedding backbone_embedding(const DetectorModel& model, std::span<const ImagePlane> planes) {
  return forward(model, planes).embedding;
}

Embedding backbone_embedding(const DetectorModel& model, const ImageSample& sample) {
  return forward(model, sample).embedding;
}

void backward(const DetectorModel& model, const ForwardTrace& trace,
              std::span<const double> grad_prediction, std::span<const double> grad_embedding,
              ParamStore& grads) {
  const auto& cfg = model.config;
  const int s = cfg.grid();
  const int cells = s * s;
  const int dim = DetectorConfig::kEmbedDim;
  const int outs = cfg.outputs_per_cell();
  if (grad_prediction.size() != static_cast<std::size_t>(cells) * outs) {
    throw std::invalid_argument("prediction gradient has the wrong size");
  }
  if (!grad_embedding.empty() && grad_embedding.size() != static_cast<std::size_t>(dim)) {
    throw std::invalid_argument("embedding gradient has the wrong size");
  }

  const auto& feat = trace.activations[4];
  std::vector<double> g_feat(feat.size(), 0.0);

  const auto& hw = model.params.at("head.weight").data;
  auto& ghw = grads.at("head.weight").data;
  auto& ghb = grads.at("head.bias").data;
  for (int k = 0; k < cells; ++k) {
    for (int ch = 0; ch < outs; ++ch) {
      const double g = grad_prediction[static_cast<std::size_t>(k) * outs + ch];
      if (g == 0.0) continue;
      ghb[ch] += g;
      const double* wrow = hw.data() + static_cast<std::size_t>(ch) * dim;
      double* gwrow = ghw.data() + static_cast<std::size_t>(ch) * dim;
      for (int c = 0; c < dim; ++c) {
        gwrow[c] += g * feat[static_cast<std::size_t>(c) * cells + k];
        g_feat[static_cast<std::size_t>(c) * cells + k] += g * wrow[c];
      }
    }
  }
  if (!grad_embedding.empty()) {
    for (int c = 0; c < dim; ++c) {
      const double g = grad_embedding[c] / cells;
      for (int k = 0; k < cells; ++k) g_feat[static_cast<std::size_t>(c) * cells + k] += g;
    }
  }

  std::vector<double> g_post = std::move(g_feat);
  for (int l = 3; l >= 0; --l) {
    const auto& pre = trace.pre_activations[l];
    for (std::size_t i = 0; i < g_post.size(); ++i) {
      if (!(pre[i] > 0.0)) g_post[i] = 0.0;
    }
    const int n = cfg.input_size >> l;
    const int in_c = block_in_channels(cfg, l);
    std::vector<double> g_in;
    if (l > 0) g_in.assign(trace.activations[l].size(), 0.0);
    conv_backward(trace.activations[l].data(), in_c, n, model.params[2 * l].data.data(),
                  DetectorConfig::kBackboneWidths[l], g_post.data(), grads[2 * l].data.data(),
                  grads[2 * l + 1].data.data(), l > 0 ? g_in.data() : nullptr);
    g_post = std::move(g_in);
  }
}

DetectionTargets assign_targets(std::span<const Annotation> annotations,
                                const DetectorConfig& config) {
  const int s = config.grid();
  const double cell = config.cell_size();
  const double side = config.input_size;
  DetectionTargets targets{s, std::vector<CellTarget>(static_cast<std::size_t>(s) * s)};
  std::vector<const Annotation*> owner(targets.cells.size(), nullptr);

  for (const auto& a : annotations) {
    const double cx = a.box.center_x();
    const double cy = a.box.center_y();
    const int col = std::clamp(static_cast<int>(std::floor(cx / cell)), 0, s - 1);
    const int row = std::clamp(static_cast<int>(std::floor(cy / cell)), 0, s - 1);
    const std::size_t k = static_cast<std::size_t>(row) * s + col;
    if (const Annotation* prev = owner[k]) {
      const double area = box_area(a.box);
      const double prev_area = box_area(prev->box);
      // Earlier annotation wins exact ties.
      const bool wins = area > prev_area || (area == prev_area && a.class_id < prev->class_id);
      if (!wins) continue;
    }
    owner[k] = &a;
    auto& t = targets.cells[k];
    t.positive = true;
    t.tx = std::clamp(cx / cell - col, 0.0, 1.0);
    t.ty = std::clamp(cy / cell - row, 0.0, 1.0);
    t.tw = std::min(a.box.width() / side, 1.0);
    t.th = std::min(a.box.height() / side, 1.0);
    t.class_id = a.class_id;
  }
  return targets;
}

LossTerms detection_loss_terms(const RawPrediction& pred, const DetectionTargets& targets,
                               std::span<double> grad, const LossWeights& weights) {
  const int s = pred.grid();
  const int nc = pred.num_classes();
  if (targets.grid != s || targets.cells.size() != static_cast<std::size_t>(s) * s) {
    throw std::invalid_argument("targets and prediction grids differ");
  }
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != pred.values().size()) throw std::invalid_argument("gradient buffer size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
  }

  int n_pos = 0;
  for (const auto& t : targets.cells) n_pos += t.positive ? 1 : 0;
  const int n_neg = s * s - n_pos;

  LossTerms terms;
  std::vector<double> probs(nc);
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) {
      const auto& t = targets.at(r, c);
      const double o = pred.at(r, c, RawPrediction::kObj);
      if (!t.positive) {
        const double scale = weights.noobj / n_neg;
        terms.noobj += scale * softplus(o);
        if (want_grad) grad[pred.index(r, c, RawPrediction::kObj)] = scale * sigmoid(o);
        continue;
      }
      const double obj_scale = weights.obj / n_pos;
      terms.obj += obj_scale * softplus(-o);
      if (want_grad) grad[pred.index(r, c, RawPrediction::kObj)] = obj_scale * (sigmoid(o) - 1.0);

      const double box_scale = weights.box / n_pos;
      const std::array<double, 4> goal{t.tx, t.ty, t.tw, t.th};
      for (int j = 0; j < 4; ++j) {
        const double raw = pred.at(r, c, RawPrediction::kTx + j);
        const double p = sigmoid(raw);
        const double d = p - goal[j];
        const double ad = std::abs(d);
        terms.box += box_scale * (ad < 1.0 ? 0.5 * d * d : ad - 0.5);
        if (want_grad) {
          const double dl = ad < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
          grad[pred.index(r, c, RawPrediction::kTx + j)] = box_scale * dl * p * (1.0 - p);
        }
      }

      const double cls_scale = weights.cls / n_pos;
      double zmax = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < nc; ++k) zmax = std::max(zmax, pred.at(r, c, RawPrediction::kClass0 + k));
      double zsum = 0.0;
      for (int k = 0; k < nc; ++k) {
        probs[k] = std::exp(pred.at(r, c, RawPrediction::kClass0 + k) - zmax);
        zsum += probs[k];
      }
      const int y = t.class_id.value;
      terms.cls += cls_scale * (zmax + std::log(zsum) - pred.at(r, c, RawPrediction::kClass0 + y));
      if (want_grad) {
        for (int k = 0; k < nc; ++k) {
          grad[pred.index(r, c, RawPrediction::kClass0 + k)] =
              cls_scale * (probs[k] / zsum - (k == y ? 1.0 : 0.0));
        }
      }
    }
  }
  return terms;
}

double detection_loss(const RawPrediction& pred, const DetectionTargets& targets) {
  return detection_loss_terms(pred, targets).total();
}

std::vector<Detection> decode(const RawPrediction& pred, const DetectorConfig& config,
                              double score_threshold) {
  const int s = pred.grid();
  const int nc = pred.num_classes();
  const double side = config.input_size;
  const double cell = side / s;
  std::vector<Detection> out;
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) {
      double zmax = -std::numeric_limits<double>::infinity();
      int best = 0;
      for (int k = 0; k < nc; ++k) {
        const double z = pred.at(r, c, RawPrediction::kClass0 + k);
        if (z > zmax) {
          zmax = z;
          best = k;
        }
      }
      double zsum = 0.0;
      for (int k = 0; k < nc; ++k) zsum += std::exp(pred.at(r, c, RawPrediction::kClass0 + k) - zmax);
      const double score = std::clamp(sigmoid(pred.at(r, c, RawPrediction::kObj)) / zsum, 0.0, 1.0);
      if (score < score_threshold) continue;

      const double cx = (c + sigmoid(pred.at(r, c, RawPrediction::kTx))) * cell;
      const double cy = (r + sigmoid(pred.at(r, c, RawPrediction::kTy))) * cell;
      const double w = sigmoid(pred.at(r, c, RawPrediction::kTw)) * side;
      const double h = sigmoid(pred.at(r, c, RawPrediction::kTh)) * side;
      const double x0 = std::max(0.0, cx - 0.5 * w);
      const double y0 = std::max(0.0, cy - 0.5 * h);
      const double x1 = std::min(side, cx + 0.5 * w);
      const double y1 = std::min(side, cy + 0.5 * h);
      if (!(x0 < x1) || !(y0 < y1)) continue;
      out.emplace_back(BoundingBox(x0, y0, x1, y1), ClassId{best}, score);
    }
  }
  return out;
}

void quantize_to_float(ParamStore& params) {
  for (auto& t : params) {
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
  }
}

std::string encode_checkpoint(const DetectorModel& model, const TrainingMetadata& meta) {
  nlohmann::ordered_json header;
  header["config"] = {{"in_planes", model.config.in_planes},
                      {"num_classes", model.config.num_classes},
                      {"input_size", model.config.input_size},
                      {"backbone_widths", DetectorConfig::kBackboneWidths},
                      {"embed_dim", DetectorConfig::kEmbedDim}};
  header["role"] = std::string(to_string(model.role));
  header["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : model.params) header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  nlohmann::ordered_json training;
  training["alpha"] = meta.alpha ? nlohmann::ordered_json(*meta.alpha) : nlohmann::ordered_json(nullptr);
  training["seed"] = meta.seed;
  training["best_epoch"] = meta.best_epoch;
  training["epochs_run"] = meta.epochs_run;
  header["training"] = std::move(training);
  const std::string text = header.dump();

  std::string out(kMagic, kMagicLen);
  std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += text;
  for (const auto& t : model.params) {
    for (double v : t.data) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagicLen + 8 || bytes.substr(0, kMagicLen) != std::string_view(kMagic, kMagicLen)) {
    throw DataError("not a detector checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) {
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[kMagicLen + i])) << (8 * i);
  }
  std::size_t pos = kMagicLen + 8;
  if (len > bytes.size() - pos) throw DataError("truncated checkpoint header");

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(pos, len));
    pos += len;
    const auto& cfg = header.at("config");
    ck.model.config.in_planes = cfg.at("in_planes").get<int>();
    ck.model.config.num_classes = cfg.at("num_classes").get<int>();
    ck.model.config.input_size = cfg.at("input_size").get<int>();
    ck.model.config.validate();
    ck.model.role = role_from_string(header.at("role").get<std::string>());
    const auto& tr = header.at("training");
    if (!tr.at("alpha").is_null()) ck.meta.alpha = tr.at("alpha").get<double>();
    ck.meta.seed = tr.at("seed").get<std::uint64_t>();
    ck.meta.best_epoch = tr.at("best_epoch").get<int>();
    ck.meta.epochs_run = tr.at("epochs_run").get<int>();

    const auto layout = parameter_layout(ck.model.config);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != layout.size()) throw DataError("checkpoint tensor list does not match its config");
    std::vector<Tensor> store;
    for (std::size_t i = 0; i < layout.size(); ++i) {
      Tensor t{tensors[i].at("name").get<std::string>(), tensors[i].at("shape").get<std::vector<int>>(), {}};
      if (t.name != layout[i].first || t.shape != layout[i].second) {
        throw DataError("checkpoint tensor '" + t.name + "' does not match the architecture");
      }
      std::size_t count = 1;
      for (int d : t.shape) count *= static_cast<std::size_t>(d);
      if (bytes.size() - pos < 4 * count) throw DataError("truncated checkpoint tensor data");
      t.data.resize(count);
      for (auto& v : t.data) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
        }
        v = static_cast<double>(std::bit_cast<float>(bits));
      }
      store.push_back(std::move(t));
    }
    if (pos != bytes.size()) throw DataError("trailing bytes after checkpoint tensors");
    ck.model.params = ParamStore(std::move(store));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid checkpoint config: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const DetectorModel& model,
                     const TrainingMetadata& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  const auto bytes = encode_checkpoint(model, meta);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace lupi
