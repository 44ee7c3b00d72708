#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lupi/detector.hpp"
#include "lupi/errors.hpp"
#include "lupi/random.hpp"
#include "oracles.hpp"

using namespace lupi;

namespace {

std::vector<ImagePlane> random_planes(int n, int side, Rng& rng) {
  std::vector<ImagePlane> planes;
  for (int p = 0; p < n; ++p) {
    std::vector<double> v(static_cast<std::size_t>(side) * side);
    for (auto& x : v) x = rng.uniform();
    planes.emplace_back(side, side, std::move(v));
  }
  return planes;
}

double logit(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

}  // namespace

TEST(DetectorConfig, Validation) {
  EXPECT_NO_THROW((DetectorConfig{3, 1, 64}.validate()));
  EXPECT_THROW((DetectorConfig{2, 1, 64}.validate()), std::invalid_argument);
  EXPECT_THROW((DetectorConfig{3, 0, 64}.validate()), std::invalid_argument);
  EXPECT_THROW((DetectorConfig{3, 1, 40}.validate()), std::invalid_argument);
  EXPECT_EQ((DetectorConfig{3, 6, 64}.grid()), 4);
  EXPECT_EQ((DetectorConfig{3, 6, 64}.outputs_per_cell()), 11);
}

TEST(Forward, ShapeContract) {
  Rng rng(1);
  const auto m = make_detector({3, 6, 64}, ModelRole::kStudent, 7);
  const auto out = forward(m, random_planes(3, 64, rng));
  EXPECT_EQ(out.prediction.grid(), 4);
  EXPECT_EQ(out.prediction.channels(), 11);
  EXPECT_EQ(out.prediction.values().size(), 4u * 4u * 11u);
  EXPECT_EQ(out.embedding.values.size(), 64u);
}

TEST(Forward, DeterministicAndPure) {
  Rng rng(2);
  const auto planes = random_planes(4, 32, rng);
  const auto m = make_detector({4, 3, 32}, ModelRole::kTeacher, 9);
  const auto a = forward(m, planes);
  const auto b = forward(m, planes);
  EXPECT_EQ(a.prediction.values(), b.prediction.values());
  EXPECT_EQ(a.embedding.values, b.embedding.values);
  EXPECT_EQ(backbone_embedding(m, planes).values, a.embedding.values);
  EXPECT_EQ(forward_trace(m, planes).result.prediction.values(), a.prediction.values());
}

TEST(Forward, PlaneCountAndSizeChecked) {
  Rng rng(3);
  const auto student = make_detector({3, 2, 64}, ModelRole::kStudent, 1);
  EXPECT_THROW(forward(student, random_planes(4, 64, rng)), std::invalid_argument);
  EXPECT_THROW(forward(student, random_planes(3, 32, rng)), std::invalid_argument);
  const auto teacher = make_detector({4, 2, 64}, ModelRole::kTeacher, 1);
  ImageSample s{"x", {ImagePlane(64, 64), ImagePlane(64, 64), ImagePlane(64, 64)}, std::nullopt, {}};
  EXPECT_THROW(forward(teacher, s), std::invalid_argument);
  s.privileged = ImagePlane(64, 64);
  EXPECT_NO_THROW(forward(teacher, s));
}

TEST(Forward, ZeroInputZeroParamsGivesZeroEmbedding) {
  auto m = make_detector({3, 1, 32}, ModelRole::kStudent, 4);
  m.params.fill(0.0);
  const std::vector<ImagePlane> planes(3, ImagePlane(32, 32));
  for (double v : backbone_embedding(m, planes).values) EXPECT_EQ(v, 0.0);
}

TEST(MakeDetector, InitialisationContract) {
  const auto m = make_detector({3, 4, 64}, ModelRole::kStudent, 5);
  for (const auto& t : m.params) {
    if (t.name.ends_with(".weight")) {
      const int fan_in = t.shape[1] * t.shape[2] * t.shape[3];
      const double bound = std::sqrt(6.0 / fan_in);
      for (double w : t.data) EXPECT_LE(std::abs(w), bound);
    }
  }
  const auto& hb = m.params.at("head.bias").data;
  EXPECT_EQ(hb[RawPrediction::kObj], -2.0);
  for (std::size_t i = 1; i < hb.size(); ++i) EXPECT_EQ(hb[i], 0.0);
  EXPECT_EQ(make_detector({3, 4, 64}, ModelRole::kStudent, 5).params.at("backbone.2.weight").data,
            m.params.at("backbone.2.weight").data);
  EXPECT_NE(make_detector({3, 4, 64}, ModelRole::kStudent, 6).params.at("backbone.2.weight").data,
            m.params.at("backbone.2.weight").data);
}

TEST(ParameterCount, TeacherHasSeventyTwoMoreWeights) {
  for (int classes : {1, 6}) {
    const auto student = make_detector({3, classes, 64}, ModelRole::kStudent, 1);
    const auto baseline = make_detector({3, classes, 64}, ModelRole::kBaseline, 2);
    const auto teacher = make_detector({4, classes, 64}, ModelRole::kTeacher, 3);
    EXPECT_EQ(parameter_count(student), parameter_count(baseline));
    EXPECT_EQ(parameter_count(teacher) - parameter_count(student), 72u);
  }
}

TEST(AssignTargets, Examples) {
  const DetectorConfig cfg{3, 6, 64};
  const auto none = assign_targets({}, cfg);
  for (const auto& t : none.cells) EXPECT_FALSE(t.positive);

  const std::vector<Annotation> full{{BoundingBox(0, 0, 64, 64), ClassId{2}}};
  const auto t = assign_targets(full, cfg);
  EXPECT_TRUE(t.at(2, 2).positive);
  EXPECT_EQ(t.at(2, 2).tw, 1.0);
  EXPECT_EQ(t.at(2, 2).th, 1.0);
  EXPECT_EQ(t.at(2, 2).tx, 0.0);
  EXPECT_EQ(t.at(2, 2).class_id.value, 2);

  const std::vector<Annotation> two{{BoundingBox(1, 1, 3, 3), ClassId{0}}, {BoundingBox(0.5, 0.5, 3.5, 3.5), ClassId{5}}};
  const auto c = assign_targets(two, cfg);
  EXPECT_EQ(c.at(0, 0).class_id.value, 5);
  EXPECT_DOUBLE_EQ(c.at(0, 0).tw, 3.0 / 64.0);
}

TEST(AssignTargets, TieBreaks) {
  const DetectorConfig cfg{3, 6, 64};
  const std::vector<Annotation> same_area{{BoundingBox(2, 2, 6, 6), ClassId{3}}, {BoundingBox(4, 4, 8, 8), ClassId{1}}};
  EXPECT_EQ(assign_targets(same_area, cfg).at(0, 0).class_id.value, 1);
  const std::vector<Annotation> exact{{BoundingBox(2, 2, 6, 6), ClassId{1}}, {BoundingBox(4, 4, 8, 8), ClassId{1}}};
  EXPECT_DOUBLE_EQ(assign_targets(exact, cfg).at(0, 0).tx, 4.0 / 16.0);
}

TEST(DetectionLoss, SingleCellObjectnessTerm) {
  const DetectorConfig cfg{3, 1, 16};
  RawPrediction p(1, 6);
  const std::vector<Annotation> a{{BoundingBox(0, 0, 16, 16), ClassId{0}}};
  const auto terms = detection_loss_terms(p, assign_targets(a, cfg));
  EXPECT_NEAR(terms.obj, std::log(2.0), 1e-15);
  EXPECT_EQ(terms.noobj, 0.0);
}

TEST(DetectionLoss, VanishesInTheSaturationLimit) {
  const DetectorConfig cfg{3, 2, 32};
  RawPrediction neg(2, 7);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) neg.at(r, c, RawPrediction::kObj) = -40.0;
  EXPECT_LT(detection_loss(neg, assign_targets({}, cfg)), 1e-15);

  const std::vector<Annotation> a{{BoundingBox(4, 4, 12, 10), ClassId{1}}};
  const auto t = assign_targets(a, cfg);
  RawPrediction good = neg;
  const auto& ct = t.at(0, 0);
  good.at(0, 0, RawPrediction::kObj) = 40.0;
  good.at(0, 0, RawPrediction::kTx) = logit(ct.tx);
  good.at(0, 0, RawPrediction::kTy) = logit(ct.ty);
  good.at(0, 0, RawPrediction::kTw) = logit(ct.tw);
  good.at(0, 0, RawPrediction::kTh) = logit(ct.th);
  good.at(0, 0, RawPrediction::kClass0 + 1) = 40.0;
  EXPECT_LT(detection_loss(good, t), 1e-12);
}

TEST(DetectionLoss, NonNegativeOnRandomInputs) {
  Rng rng(17);
  const DetectorConfig cfg{3, 3, 64};
  for (int i = 0; i < 500; ++i) {
    RawPrediction p(4, 8);
    for (auto& v : p.values()) v = rng.uniform(-20, 20);
    std::vector<Annotation> anns;
    for (int k = 0; k < 3; ++k) {
      const double x = rng.uniform(0, 50);
      const double y = rng.uniform(0, 50);
      anns.push_back({BoundingBox(x, y, x + rng.uniform(1, 14), y + rng.uniform(1, 14)), ClassId{static_cast<int>(rng.below(3))}});
    }
    EXPECT_GE(detection_loss(p, assign_targets(anns, cfg)), 0.0);
  }
}

TEST(DetectionLoss, GridMismatchThrows) {
  RawPrediction p(2, 6);
  EXPECT_THROW(detection_loss(p, assign_targets({}, DetectorConfig{3, 1, 64})), std::invalid_argument);
}

TEST(DetectionLoss, GradientMatchesFiniteDifferences) {
  Rng rng(23);
  const DetectorConfig cfg{3, 3, 48};
  std::vector<Annotation> anns{{BoundingBox(3, 4, 20, 15), ClassId{2}}, {BoundingBox(30, 30, 40, 46), ClassId{0}}};
  const auto targets = assign_targets(anns, cfg);
  RawPrediction p(3, 8);
  for (auto& v : p.values()) v = rng.uniform(-3, 3);
  std::vector<double> grad(p.values().size());
  detection_loss_terms(p, targets, grad);
  const auto fd = oracle::finite_diff_grad(
      [&](const std::vector<double>& x) { return detection_loss(RawPrediction(3, 8, x), targets); }, p.values(), 1e-5);
  for (std::size_t i = 0; i < grad.size(); ++i) EXPECT_NEAR(grad[i], fd[i], 1e-8) << i;
}

TEST(Backward, ParameterGradientSpotCheck) {
  Rng rng(31);
  const DetectorConfig cfg{4, 2, 32};
  auto model = make_detector(cfg, ModelRole::kTeacher, 12);
  for (auto& t : model.params)
    for (auto& v : t.data) v += rng.uniform(-0.05, 0.05);
  const auto planes = random_planes(4, 32, rng);
  const std::vector<Annotation> anns{{BoundingBox(2, 3, 14, 12), ClassId{1}}};
  const auto targets = assign_targets(anns, cfg);

  const auto trace = forward_trace(model, planes);
  std::vector<double> gp(trace.result.prediction.values().size());
  detection_loss_terms(trace.result.prediction, targets, gp);
  auto grads = model.params.zeros_like();
  backward(model, trace, gp, {}, grads);

  for (std::size_t ti = 0; ti < model.params.size(); ++ti) {
    auto probe = model;
    const std::size_t n = model.params[ti].data.size();
    const std::vector<std::size_t> idx{0, n / 2, n - 1};
    const auto fd = oracle::finite_diff_grad(
        [&](const std::vector<double>& x) {
          probe.params[ti].data = x;
          return detection_loss(forward(probe, planes).prediction, targets);
        },
        model.params[ti].data, 1e-5, idx);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double a = grads[ti].data[idx[k]];
      EXPECT_NEAR(a, fd[k], 1e-6 + 1e-4 * std::abs(a)) << model.params[ti].name << "[" << idx[k] << "]";
    }
  }
}

TEST(Decode, EmptyWhenObjectnessIsVeryNegative) {
  RawPrediction p(4, 8);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) p.at(r, c, RawPrediction::kObj) = -30.0;
  EXPECT_TRUE(decode(p, DetectorConfig{3, 3, 64}, 0.05).empty());
}

TEST(Decode, RoundTripsEncodedBoxes) {
  Rng rng(41);
  const DetectorConfig cfg{3, 4, 64};
  for (int trial = 0; trial < 500; ++trial) {
    const double w = rng.uniform(4, 30);
    const double h = rng.uniform(4, 30);
    const double x = rng.uniform(0, 64 - w);
    const double y = rng.uniform(0, 64 - h);
    const Annotation a{BoundingBox(x, y, x + w, y + h), ClassId{static_cast<int>(rng.below(4))}};
    const auto t = assign_targets(std::span<const Annotation>(&a, 1), cfg);
    RawPrediction p(4, 9);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        const auto& ct = t.at(r, c);
        p.at(r, c, RawPrediction::kObj) = ct.positive ? 20.0 : -20.0;
        if (!ct.positive) continue;
        p.at(r, c, RawPrediction::kTx) = logit(ct.tx);
        p.at(r, c, RawPrediction::kTy) = logit(ct.ty);
        p.at(r, c, RawPrediction::kTw) = logit(ct.tw);
        p.at(r, c, RawPrediction::kTh) = logit(ct.th);
        p.at(r, c, RawPrediction::kClass0 + ct.class_id.value) = 20.0;
      }
    }
    const auto dets = decode(p, cfg, 0.5);
    ASSERT_EQ(dets.size(), 1u);
    EXPECT_EQ(dets[0].class_id(), a.class_id);
    EXPECT_NEAR(dets[0].box().center_x(), a.box.center_x(), 1e-3 * 64);
    EXPECT_NEAR(dets[0].box().center_y(), a.box.center_y(), 1e-3 * 64);
    EXPECT_NEAR(dets[0].box().width(), w, 1e-3 * 64);
    EXPECT_NEAR(dets[0].box().height(), h, 1e-3 * 64);
  }
}

TEST(Decode, ScoreMonotoneInObjectness) {
  RawPrediction p(1, 7);
  p.at(0, 0, RawPrediction::kClass0) = 1.0;
  double last = -1.0;
  for (double o = -8; o <= 8; o += 0.5) {
    p.at(0, 0, RawPrediction::kObj) = o;
    const auto d = decode(p, DetectorConfig{3, 2, 16}, 0.0);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_GT(d[0].score(), last);
    last = d[0].score();
  }
}

TEST(Checkpoint, RoundTripMatchesFloatQuantisation) {
  auto m = make_detector({4, 6, 64}, ModelRole::kTeacher, 77);
  const TrainingMetadata meta{std::nullopt, 77, 12, 20};
  const auto back = decode_checkpoint(encode_checkpoint(m, meta));
  quantize_to_float(m.params);
  EXPECT_EQ(back.model.config, m.config);
  EXPECT_EQ(back.model.role, ModelRole::kTeacher);
  EXPECT_EQ(back.meta, meta);
  ASSERT_EQ(back.model.params.size(), m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    EXPECT_EQ(back.model.params[i].name, m.params[i].name);
    EXPECT_EQ(back.model.params[i].shape, m.params[i].shape);
    EXPECT_EQ(back.model.params[i].data, m.params[i].data);
  }
  const auto bytes = encode_checkpoint(m, meta);
  EXPECT_EQ(bytes.substr(0, 8), "LUPIDET1");
  EXPECT_EQ(encode_checkpoint(back.model, back.meta), bytes);
}

TEST(Checkpoint, CorruptInputRejected) {
  const auto m = make_detector({3, 1, 64}, ModelRole::kStudent, 1);
  auto bytes = encode_checkpoint(m, {0.5, 1, 0, 1});
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 4)), DataError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), DataError);
  EXPECT_THROW(decode_checkpoint(""), DataError);
}
