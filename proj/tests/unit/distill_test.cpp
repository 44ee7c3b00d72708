#include <gtest/gtest.h>

#include <cmath>

#include "lupi/distill.hpp"
#include "lupi/errors.hpp"
#include "lupi/privileged.hpp"
#include "lupi/random.hpp"
#include "lupi/synth.hpp"
#include "oracles.hpp"

using namespace lupi;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

Dataset with_masks(Dataset ds) {
  for (auto& s : ds.samples) s = attach_privileged_channel(s, ds.num_classes());
  return ds;
}

// Six 32x32 images, two classes: enough to exercise the loop in well under a second.
struct SmallData {
  Dataset train;
  Dataset val;
};

SmallData small_data() {
  SynthConfig sc;
  sc.num_images = 8;
  sc.image_size = 32;
  sc.num_classes = 2;
  sc.side_min = 8;
  sc.side_max = 12;
  sc.noise_scale = 8;
  sc.seed = 5;
  const auto synth = generate_dataset(sc);
  return {with_masks(synth.to_dataset(Split::kTrain)), with_masks(synth.to_dataset(Split::kVal))};
}

DistillConfig short_run(double alpha, std::uint64_t seed) {
  DistillConfig cfg;
  cfg.alpha = alpha;
  cfg.seed = seed;
  cfg.max_epochs = 3;
  cfg.batch_size = 2;
  return cfg;
}

TrainLog log_of(std::initializer_list<int> since_best) {
  TrainLog log;
  int e = 0;
  for (int s : since_best) {
    EpochRecord r;
    r.epoch = e++;
    r.epochs_since_best = s;
    log.epochs.push_back(r);
  }
  return log;
}

}  // namespace

TEST(CosineDistance, Axioms) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto u = random_vector(rng, 16);
    const auto v = random_vector(rng, 16);
    std::vector<double> neg(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) neg[i] = -u[i];
    const double c = rng.uniform(0.01, 100.0);
    std::vector<double> cu(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) cu[i] = c * u[i];

    EXPECT_NEAR(cosine_distance(u, u), 0.0, 1e-12);
    EXPECT_NEAR(cosine_distance(u, neg), 2.0, 1e-12);
    EXPECT_NEAR(cosine_distance(cu, v), cosine_distance(u, v), 1e-12);
    const double d = cosine_distance(u, v);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
  }
}

TEST(CosineDistance, DegenerateNormsGiveOneAndZeroGradient) {
  const std::vector<double> zero(8, 0.0);
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> g(8, 99.0);
  EXPECT_EQ(cosine_distance(zero, v), 1.0);
  EXPECT_EQ(cosine_distance(v, zero), 1.0);
  EXPECT_EQ(cosine_distance_with_grad(zero, v, g), 1.0);
  for (double x : g) EXPECT_EQ(x, 0.0);
}

TEST(CosineDistance, LengthMismatchThrows) {
  const std::vector<double> a(3, 1.0), b(4, 1.0);
  std::vector<double> g(3);
  EXPECT_THROW(cosine_distance(a, b), std::invalid_argument);
  EXPECT_THROW(cosine_distance_with_grad(a, b, g), std::invalid_argument);
}

TEST(CosineDistance, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = random_vector(rng, 12);
    const auto v = random_vector(rng, 12);
    std::vector<double> g(u.size());
    const double d = cosine_distance_with_grad(u, v, g);
    EXPECT_DOUBLE_EQ(d, cosine_distance(u, v));
    const auto fd = oracle::finite_diff_grad([&](const std::vector<double>& x) { return cosine_distance(x, v); },
                                             u, 1e-6);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], fd[i], 1e-7);
  }
}

TEST(StudentLoss, EndpointsAndAffinity) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const double d = rng.uniform(0, 10);
    const double c = rng.uniform(0, 2);
    const double a = rng.uniform();
    EXPECT_EQ(student_loss(d, c, 0.0), d);
    EXPECT_EQ(student_loss(d, c, 1.0), c);
    EXPECT_NEAR(student_loss(d, c, a), d + a * (c - d), 1e-12);
  }
}

TEST(DistillConfig, Validation) {
  DistillConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.alpha = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lr = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  auto model = make_detector({3, 2, 32}, ModelRole::kBaseline, 4);
  const auto before = model.params;
  auto grads = model.params.zeros_like();
  Rng rng(4);
  for (auto& t : grads)
    for (auto& g : t.data) g = rng.uniform(-1, 1);
  DistillConfig cfg;
  auto state = AdamState::zeros_for(model.params);
  adam_step(model.params, grads, state, cfg);
  EXPECT_EQ(state.step, 1);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    for (std::size_t i = 0; i < grads[t].data.size(); ++i) {
      const double g = grads[t].data[i];
      const double expected = before[t].data[i] - cfg.lr * g / (std::abs(g) + cfg.adam_eps);
      EXPECT_NEAR(model.params[t].data[i], expected, 1e-15);
    }
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto model = make_detector({3, 1, 32}, ModelRole::kBaseline, 4);
  const auto before = model.params;
  auto state = AdamState::zeros_for(model.params);
  for (int k = 0; k < 3; ++k) adam_step(model.params, model.params.zeros_like(), state, {});
  for (std::size_t t = 0; t < before.size(); ++t) EXPECT_EQ(model.params[t].data, before[t].data);
}

TEST(Adam, ShapeMismatchThrows) {
  auto a = make_detector({3, 1, 32}, ModelRole::kBaseline, 1);
  const auto b = make_detector({3, 2, 32}, ModelRole::kBaseline, 1);
  auto state = AdamState::zeros_for(a.params);
  EXPECT_THROW(adam_step(a.params, b.params, state, {}), std::invalid_argument);
}

TEST(EarlyStop, PatienceBoundary) {
  EXPECT_THROW(early_stop_check(TrainLog{}, 3), std::invalid_argument);
  EXPECT_EQ(early_stop_check(log_of({0, 1, 2}), 3), StopDecision::kContinue);
  EXPECT_EQ(early_stop_check(log_of({0, 1, 2, 3}), 3), StopDecision::kStop);
  EXPECT_EQ(early_stop_check(log_of({0, 1, 0}), 1), StopDecision::kContinue);
}

TEST(TrainLog, CsvHeaderAndNan) {
  auto log = log_of({0});
  log.epochs[0].distill_term = std::nan("");
  const auto csv = log.to_csv();
  EXPECT_EQ(csv.rfind("epoch,train_loss,det_term,distill_term,val_map50,epochs_since_best\n", 0), 0u);
  EXPECT_NE(csv.find(",nan,"), std::string::npos);
}

TEST(Training, BaselineIsDeterministicAndNeedsNoTeacher) {
  const auto data = small_data();
  const auto a = train_student(data.train, data.val, nullptr, short_run(0.0, 7));
  const auto b = train_student(data.train, data.val, nullptr, short_run(0.0, 7));
  EXPECT_EQ(a.model.role, ModelRole::kBaseline);
  EXPECT_EQ(encode_checkpoint(a.model, a.meta), encode_checkpoint(b.model, b.meta));
  for (const auto& e : a.log.epochs) EXPECT_TRUE(std::isnan(e.distill_term));
}

TEST(Training, StudentLeavesTeacherUntouched) {
  const auto data = small_data();
  const auto teacher = train_teacher(data.train, data.val, short_run(0.0, 1)).model;
  const auto snapshot = encode_checkpoint(teacher, {});
  const auto student = train_student(data.train, data.val, &teacher, short_run(0.5, 2));
  EXPECT_EQ(encode_checkpoint(teacher, {}), snapshot);
  EXPECT_EQ(student.model.role, ModelRole::kStudent);
  EXPECT_EQ(student.model.config.in_planes, 3);
  EXPECT_EQ(parameter_count(student.model) + 72, parameter_count(teacher));
  for (const auto& e : student.log.epochs) {
    EXPECT_TRUE(std::isfinite(e.distill_term));
    EXPECT_DOUBLE_EQ(e.train_loss, student_loss(e.det_term, e.distill_term, 0.5));
  }
}

TEST(Training, LossDecreasesOnSmallSet) {
  const auto data = small_data();
  auto cfg = short_run(0.0, 3);
  cfg.max_epochs = 12;
  cfg.patience = 100;
  cfg.lr = 1e-3;
  const auto r = train_student(data.train, data.val, nullptr, cfg);
  ASSERT_EQ(r.log.epochs.size(), 12u);
  EXPECT_LT(r.log.epochs.back().det_term, r.log.epochs.front().det_term);
}

TEST(Training, EarlyStoppingHonoursPatience) {
  const auto data = small_data();
  auto cfg = short_run(0.0, 3);
  cfg.max_epochs = 50;
  cfg.patience = 2;
  const auto r = train_student(data.train, data.val, nullptr, cfg);
  ASSERT_LT(r.log.epochs.size(), 50u);
  EXPECT_EQ(r.log.epochs.back().epochs_since_best, 2);
  EXPECT_EQ(r.meta.epochs_run, static_cast<int>(r.log.epochs.size()));
  EXPECT_EQ(r.meta.best_epoch, r.log.best_epoch);
}

TEST(Training, InputContractViolations) {
  const auto data = small_data();
  Dataset rgb_only = data.train;
  for (auto& s : rgb_only.samples) s.privileged.reset();
  EXPECT_THROW(train_teacher(rgb_only, data.val, short_run(0, 1)), DataError);
  EXPECT_THROW(train_student(data.train, data.val, nullptr, short_run(0.5, 1)), std::invalid_argument);
  EXPECT_THROW(train_student(Dataset{}, data.val, nullptr, short_run(0, 1)), DataError);
  const auto baseline = train_student(data.train, data.val, nullptr, short_run(0, 1)).model;
  EXPECT_THROW(train_student(data.train, data.val, &baseline, short_run(0.5, 1)), std::invalid_argument);
}
