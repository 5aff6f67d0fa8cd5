#include <gtest/gtest.h>

#include <cmath>

#include "morphoprobe/nn/checkpoint.hpp"
#include "morphoprobe/nn/mlp_probe.hpp"
#include "morphoprobe/nn/trainer.hpp"
#include "support/gradients.hpp"
#include "support/temp_dir.hpp"

using namespace morphoprobe;
using nn::Matrix;

TEST(GradCheck, AllModelsOnTwoBatches) {
  for (const auto& c : testkit::run_gradient_checks(2, 99)) {
    EXPECT_LT(c.result.max_relative_error, 1e-4) << c.model << " batch " << c.batch << " worst "
                                                 << c.result.worst_parameter << "[" << c.result.worst_index << "]";
    EXPECT_GT(c.result.checked, 0u);
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  nn::Parameter<double> w("w", 2, 1);
  w.value << 1.0, -2.0;
  nn::ParameterRefs<double> params{&w};
  auto loss = [&] { return w.value.squaredNorm(); };
  auto grads = [&] { w.grad = 3.0 * w.value; };  // should be 2w
  EXPECT_GT(nn::grad_check<double>(loss, grads, params).max_relative_error, 0.1);
  auto good = [&] { w.grad = 2.0 * w.value; };
  EXPECT_LT(nn::grad_check<double>(loss, good, params).max_relative_error, 1e-8);
}

TEST(Loss, CrossEntropyAndSoftmax) {
  Matrix<double> s(3, 1);
  s << 1.0, 2.0, 3.0;
  const Matrix<double> lp = nn::log_softmax(s);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(lp(2, 0), 3.0 - std::log(z), 1e-12);
  const std::vector<int> y = {0};
  EXPECT_NEAR(nn::cross_entropy<double>(lp, y), std::log(z) - 1.0, 1e-12);
  const Matrix<double> g = nn::cross_entropy_grad<double>(lp, y);
  EXPECT_NEAR(g(0, 0), std::exp(1.0) / z - 1.0, 1e-12);
  EXPECT_NEAR(g.sum(), 0.0, 1e-12);
  // Ties resolve to the lowest index.
  Matrix<double> tie = Matrix<double>::Zero(3, 1);
  EXPECT_EQ(nn::argmax_columns(tie), std::vector<int>({0}));
}

TEST(Adam, FirstStepMatchesClosedForm) {
  nn::Parameter<double> w("w", 1, 2);
  w.value << 0.5, -1.0;
  w.grad << 2.0, -0.001;
  nn::Adam<double> adam({0.1, 0.9, 0.999, 1e-8});
  adam.step({&w});
  // With bias correction the first update is lr * g / (|g| + eps).
  EXPECT_NEAR(w.value(0, 0), 0.5 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-12);
  EXPECT_NEAR(w.value(0, 1), -1.0 + 0.1 * 0.001 / (0.001 + 1e-8), 1e-12);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, SecondStepMatchesRecurrence) {
  nn::Parameter<double> w("w", 1, 1);
  w.value << 0.0;
  nn::Adam<double> adam({0.01, 0.9, 0.999, 1e-8});
  w.grad << 1.0;
  adam.step({&w});
  w.grad << 3.0;
  adam.step({&w});
  const double m = 0.9 * 0.1 + 0.1 * 3.0, v = 0.999 * 0.001 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double first = -0.01 / (1.0 + 1e-8);
  EXPECT_NEAR(w.value(0, 0), first - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-12);
}

TEST(Adam, NonFiniteGradientAbortsWithoutUpdate) {
  nn::Parameter<double> w("weights", 1, 2);
  w.grad << 1.0, std::nan("");
  nn::Adam<double> adam;
  try {
    adam.step({&w});
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("weights"), std::string::npos);
  }
  EXPECT_EQ(w.value(0, 0), 0.0);
  EXPECT_EQ(adam.steps(), 0);
}

namespace {

// One logit w against a fixed zero: log_softmax([w, 0]) for every example.
struct ScalarAdapter {
  nn::Parameter<float> w{"w", 1, 1};
  std::vector<int> train_y, dev_y;
  Matrix<float> last;

  std::span<const int> labels(Split s) { return s == Split::train ? train_y : dev_y; }
  Matrix<float> forward(Split, std::span<const std::size_t> rows, bool, Xoshiro256*) {
    Matrix<float> s = Matrix<float>::Zero(2, static_cast<Eigen::Index>(rows.size()));
    s.row(0).setConstant(w.value(0, 0));
    return nn::log_softmax(s);
  }
  void backward(const Matrix<float>& g) { w.grad(0, 0) += g.row(0).sum(); }
  nn::ParameterRefs<float> parameters() { return {&w}; }
};

}  // namespace

TEST(Trainer, EarlyStopsAndRestoresBestEpoch) {
  // Training pushes w up; dev prefers class 1, so dev loss only grows and
  // accuracy stays at zero after the first epoch.
  ScalarAdapter m;
  m.train_y.assign(8, 0);
  m.dev_y.assign(4, 1);
  nn::TrainConfig c;
  c.adam.lr = 0.1;
  c.batch_size = 4;
  c.max_epochs = 100;
  c.patience = 3;
  const auto r = nn::fit(m, c);
  EXPECT_EQ(r.epochs_run, 4);
  EXPECT_EQ(r.best_epoch, 1);
  EXPECT_TRUE(r.stopped_early);
  ASSERT_EQ(r.history.size(), 4u);
  EXPECT_LT(r.history[0].dev_loss, r.history[3].dev_loss);
  // Two Adam steps per epoch of roughly lr each.
  EXPECT_NEAR(m.w.value(0, 0), 0.2f, 0.01f);
}

TEST(Trainer, RunsToMaxEpochsWhileImproving) {
  ScalarAdapter m;
  m.train_y.assign(8, 0);
  m.dev_y.assign(4, 0);
  nn::TrainConfig c;
  c.adam.lr = 0.05;
  c.batch_size = 8;
  c.max_epochs = 12;
  c.patience = 2;
  const auto r = nn::fit(m, c);
  EXPECT_EQ(r.epochs_run, 12);
  EXPECT_FALSE(r.stopped_early);
  EXPECT_EQ(r.best_epoch, 12);
}

TEST(Trainer, ConfigValidationAndJson) {
  nn::TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  nn::TrainConfig d;
  d.patience = 7;
  d.adam.lr = 3e-4;
  const auto back = nn::TrainConfig::from_json(d.to_json());
  EXPECT_EQ(back.patience, 7);
  EXPECT_DOUBLE_EQ(back.adam.lr, 3e-4);
  EXPECT_THROW(nn::TrainConfig::from_json(Json{{"max_epochs", -1}}), ConfigError);
}

TEST(Probe, LayerWeightsAndSelectionNames) {
  Xoshiro256 rng(1);
  nn::MlpProbeConfig c;
  c.n_layers = 13;
  c.dim = 4;
  c.n_classes = 2;
  nn::MlpProbe<float> p(c, rng);
  const auto w = p.layer_weights();
  EXPECT_NEAR(w.sum(), 1.0f, 1e-6f);
  EXPECT_NEAR(w(0), 1.0f / 13.0f, 1e-6f);
  EXPECT_EQ(nn::LayerSelection::parse("layer:12").layer, 12);
  EXPECT_EQ(nn::LayerSelection::parse("concat").name(), "concat");
  EXPECT_THROW(nn::LayerSelection::parse("layer:x"), ConfigError);
  EXPECT_EQ(nn::ProbeVariant::parse("mlp50x2").hidden, std::vector<int>({50, 50}));
  EXPECT_THROW(nn::ProbeVariant::parse("mlp7"), ConfigError);
  c.selection = {nn::LayerMode::single, 13};
  EXPECT_THROW((nn::MlpProbe<float>(c, rng)), ConfigError);
}

TEST(Checkpoint, RoundTripAndShapeMismatch) {
  testkit::TempDir dir;
  Xoshiro256 rng(4);
  nn::MlpProbeConfig c;
  c.n_layers = 3;
  c.dim = 5;
  c.n_classes = 4;
  nn::MlpProbe<float> a(c, rng), b(c, rng);
  nn::save_checkpoint(dir / "probe", a.parameters(), Json{{"task", "t"}});
  EXPECT_EQ(nn::load_checkpoint(dir / "probe", b.parameters()).at("task"), "t");
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  EXPECT_EQ(nn::read_checkpoint_metadata(dir / "probe").at("task"), "t");

  c.dim = 6;
  nn::MlpProbe<float> wrong(c, rng);
  EXPECT_THROW(nn::load_checkpoint(dir / "probe", wrong.parameters()), IntegrityError);
}
