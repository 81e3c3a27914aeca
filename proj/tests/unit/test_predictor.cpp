// Copyright 2026 The fedtrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fedtrack/error.hpp"
#include "fedtrack/predictor.hpp"
#include "fedtrack/training.hpp"
#include "oracles.hpp"

namespace fedtrack::predictor {
namespace {

PredictorConfig small(NormMode norm) {
  PredictorConfig c;
  c.d_model = 4;
  c.n_heads = 2;
  c.d_ff = 8;
  c.past = 3;
  c.future = 2;
  c.dropout = 0.0;
  c.norm_mode = norm;
  return c;
}

// Initial norms are degenerate (A = 0, unit scale); perturb so every path
// carries a distinct signal.
std::vector<double> perturbed(const PredictorConfig& c, std::uint64_t seed) {
  auto p = init_parameters(c, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto& v : p) v += n(rng);
  return p;
}

TEST(Layout, CountMatchesClosedForm) {
  for (auto norm : {NormMode::kAdaIN, NormMode::kPlainNorm}) {
    for (int d : {16, 32}) {
      PredictorConfig c;
      c.d_model = d;
      c.norm_mode = norm;
      const auto l = ParamLayout::for_config(c);
      EXPECT_EQ(l.total(), expected_parameter_count(c));
      std::size_t sum = 0;
      for (const auto& t : l.manifest()) sum += t.numel();
      EXPECT_EQ(sum, l.total());
    }
  }
}

TEST(Layout, InvalidConfigsAreRejected) {
  PredictorConfig c;
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = PredictorConfig{};
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(WeightBlob, SerializationRoundTripAndSize) {
  PredictorConfig c;
  const auto blob = init_weights(c, 5);
  const auto bytes = blob.serialize();
  EXPECT_EQ(bytes.size(), blob.byte_size());
  EXPECT_EQ(blob.byte_size(), blob.header_size() + 4 * blob.parameter_count());
  const auto back = WeightBlob::deserialize(bytes);
  EXPECT_TRUE(back == blob);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(WeightBlob::deserialize(truncated), StructuralError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(WeightBlob::deserialize(bad_magic), StructuralError);
}

TEST(WeightBlob, LayoutCheck) {
  PredictorConfig c;
  PredictorConfig other = c;
  other.norm_mode = NormMode::kPlainNorm;
  EXPECT_THROW(check_layout(other, init_weights(c, 1)), StructuralError);
  EXPECT_NO_THROW(check_layout(c, init_weights(c, 1)));
}

TEST(AdaIN, IdentityStyleIsInstanceNorm) {
  Eigen::MatrixXd z(4, 3);
  z << 1, 2, -1, 3, 0, 4, 2, 7, 0, -5, 1, 1;
  Eigen::VectorXd A = Eigen::VectorXd::Zero(6);
  Eigen::VectorXd b(6);
  b << 0, 0, 0, 1, 1, 1;
  const auto out = adain(z, 0.4, A, b, 0.0);
  for (int k = 0; k < 3; ++k) {
    double m, s;
    oracle::column_stats(z, k, m, s);
    for (int r = 0; r < 4; ++r) EXPECT_NEAR(out(r, k), (z(r, k) - m) / s, 1e-12);
  }
}

TEST(AdaIN, ConstantChannelMapsToZero) {
  Eigen::MatrixXd z = Eigen::MatrixXd::Constant(5, 2, 3.5);
  Eigen::VectorXd A = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd b(4);
  b << 0, 0, 1, 1;
  const auto out = adain(z, 1.0, A, b);
  EXPECT_TRUE(out.allFinite());
  EXPECT_NEAR(out.cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(AdaIN, HandEvaluation) {
  Eigen::MatrixXd z(2, 1);
  z << 1, 3;
  // (mu, sigma) = A * 0.5 + b = (2, 2).
  Eigen::VectorXd A(2), b(2);
  A << 2, 2;
  b << 1, 1;
  const auto out = adain(z, 0.5, A, b, 0.0);
  EXPECT_NEAR(out(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(out(1, 0), 4.0, 1e-12);
}

TEST(AdaINProperty, OutputStatisticsFollowTheStyle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 3 + trial % 8, ch = 1 + trial % 5;
    Eigen::MatrixXd z(rows, ch);
    for (int i = 0; i < z.size(); ++i) z.data()[i] = 3.0 * n(rng);
    Eigen::VectorXd A(2 * ch), b(2 * ch);
    for (int i = 0; i < 2 * ch; ++i) {
      A(i) = n(rng);
      b(i) = n(rng);
    }
    const double alt = 0.4 + 0.6 * std::abs(n(rng));
    for (int k = 0; k < ch; ++k) b(ch + k) = std::abs(b(ch + k)) + 0.5 - std::min(0.0, A(ch + k) * alt);
    const auto out = adain(z, alt, A, b, 0.0);
    for (int k = 0; k < ch; ++k) {
      double zm, zs;
      oracle::column_stats(z, k, zm, zs);
      if (zs < 0.1) continue;
      double m, s;
      oracle::column_stats(out, k, m, s);
      EXPECT_NEAR(m, A(k) * alt + b(k), 1e-5);
      EXPECT_NEAR(s, A(ch + k) * alt + b(ch + k), 1e-5);
    }
  }
}

TEST(Prepare, RelativeModeRecentresPositions) {
  PredictorConfig c;
  std::mt19937_64 rng(2);
  const auto w = oracle::random_window(c.past, c.future, 15.0, Eigen::Vector2d(40, 50), rng);
  const auto p = prepare(c, w);
  EXPECT_EQ(p.offset, w.anchor);
  EXPECT_NEAR(p.features(c.past - 1, kOdomX), 0.0, 1e-12);
  EXPECT_NEAR(p.labels(0, 0), w.labels(0, 0) - 40.0, 1e-12);
  EXPECT_NEAR(p.altitude_input, 15.0 / c.altitude_scale, 1e-15);

  c.coord_mode = CoordMode::kAbsolute;
  const auto a = prepare(c, w);
  EXPECT_EQ(a.offset, Eigen::Vector2d::Zero());
  EXPECT_EQ(a.labels, w.labels);

  auto bad = w;
  bad.features.conservativeResize(c.past - 1, Eigen::NoChange);
  EXPECT_THROW(prepare(c, bad), StructuralError);
}

TEST(ForwardProperty, TranslationEquivarianceInRelativeMode) {
  PredictorConfig c;
  const auto weights = to_blob(ParamLayout::for_config(c), perturbed(c, 9));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> shift(-500.0, 500.0);
  Rng unused(0);
  for (int trial = 0; trial < 25; ++trial) {
    const auto w = oracle::random_window(c.past, c.future, 10.0, Eigen::Vector2d(60, 60), rng);
    const Eigen::Vector2d d = trial == 0 ? Eigen::Vector2d(100, 100) : Eigen::Vector2d(shift(rng), shift(rng));
    auto moved = w;
    moved.anchor += d;
    moved.features.col(kOdomX).array() += d.x();
    moved.features.col(kOdomY).array() += d.y();
    const auto a = forward(c, weights, w, false, unused);
    const auto b = forward(c, weights, moved, false, unused);
    for (int r = 0; r < c.future; ++r) {
      EXPECT_NEAR(b(r, 0) - a(r, 0), d.x(), 1e-5);
      EXPECT_NEAR(b(r, 1) - a(r, 1), d.y(), 1e-5);
    }
  }
}

TEST(Forward, AnchoredWindowOutputsAnchorPlusOffset) {
  PredictorConfig c;
  const auto weights = init_weights(c, 4);
  SampleWindow w;
  w.features = Eigen::MatrixXd::Zero(c.past, kFeatureWidth);
  w.features.col(0).setConstant(0.5);
  w.features.col(1).setConstant(0.5);
  w.features.col(kOdomZ).setConstant(10.0);
  w.altitude = 10.0;
  Rng unused(0);
  const auto origin = forward(c, weights, w, false, unused);
  w.anchor = Eigen::Vector2d(100, 100);
  w.features.col(kOdomX).setConstant(100.0);
  w.features.col(kOdomY).setConstant(100.0);
  const auto moved = forward(c, weights, w, false, unused);
  EXPECT_NEAR((moved - origin).col(0).cwiseAbs().maxCoeff() - 100.0, 0.0, 1e-9);
  EXPECT_NEAR((moved - origin).col(1).cwiseAbs().maxCoeff() - 100.0, 0.0, 1e-9);
}

TEST(Forward, DropoutOnlyActsInTrainMode) {
  PredictorConfig c;
  std::mt19937_64 g(1);
  const auto w = oracle::random_window(c.past, c.future, 10.0, Eigen::Vector2d(5, 5), g);
  Rng a(3), b(3);

  c.dropout = 0.0;
  auto weights = init_weights(c, 2);
  EXPECT_EQ(forward(c, weights, w, true, a), forward(c, weights, w, false, b));

  c.dropout = 0.5;
  EXPECT_NE(forward(c, weights, w, true, a), forward(c, weights, w, false, b));
  EXPECT_EQ(forward(c, weights, w, false, a), forward(c, weights, w, false, b));
}

TEST(Forward, PredictorMatchesForward) {
  PredictorConfig c;
  const auto weights = init_weights(c, 12);
  std::mt19937_64 g(5);
  const auto w = oracle::random_window(c.past, c.future, 20.0, Eigen::Vector2d(70, 20), g);
  Rng unused(0);
  const Predictor p(c, weights);
  EXPECT_TRUE(p.predict(w).isApprox(forward(c, weights, w, false, unused), 1e-12));
}

TEST(Forward, GoldenOutput) {
  PredictorConfig c;
  c.future = 2;
  const auto weights = init_weights(c, 2026);
  std::mt19937_64 g(2026);
  const auto w = oracle::random_window(c.past, c.future, 15.0, Eigen::Vector2d(30, 40), g);
  Rng unused(0);
  const auto out = forward(c, weights, w, false, unused);
  // Recorded from the first verified build; guards against silent drift.
  const double golden[2][2] = {{30.255926368199834, 39.822836042278581}, {30.277978865634786, 39.779650626229035}};
  for (int r = 0; r < 2; ++r)
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(out(r, k), golden[r][k], 1e-6) << r << "," << k;
}

TEST(Loss, ZeroWhenLabelsEqualOutput) {
  PredictorConfig c = small(NormMode::kAdaIN);
  const auto weights = init_weights(c, 8);
  std::mt19937_64 g(8);
  auto w = oracle::random_window(c.past, c.future, 10.0, Eigen::Vector2d(1, 2), g);
  Rng unused(0);
  w.labels = forward(c, weights, w, false, unused);
  const std::vector<SampleWindow> batch{w};
  const auto r = loss_and_gradients(c, weights, batch);
  EXPECT_NEAR(r.loss, 0.0, 1e-20);
  double max_grad = 0.0;
  for (float v : r.gradient.values()) max_grad = std::max(max_grad, static_cast<double>(std::abs(v)));
  EXPECT_NEAR(max_grad, 0.0, 1e-12);
}

TEST(Loss, LabelShiftFollowsTheMseExpansion) {
  PredictorConfig c = small(NormMode::kPlainNorm);
  const auto weights = init_weights(c, 3);
  std::mt19937_64 g(3);
  const auto w = oracle::random_window(c.past, c.future, 10.0, Eigen::Vector2d(1, 2), g);
  Rng unused(0);
  const Eigen::MatrixXd e = forward(c, weights, w, false, unused) - w.labels;
  const Eigen::Vector2d delta(0.3, -0.7);
  auto shifted = w;
  shifted.labels.rowwise() += delta.transpose();
  const std::vector<SampleWindow> a{w}, b{shifted};
  const double n = static_cast<double>(e.size());
  const double base = e.squaredNorm() / n;
  const double expected = base - 2.0 * (e * delta).sum() / n + c.future * delta.squaredNorm() / n;
  EXPECT_NEAR(evaluate_mse(c, weights, a), base, 1e-12);
  EXPECT_NEAR(evaluate_mse(c, weights, b), expected, 1e-12);
}

class GradientCheck : public ::testing::TestWithParam<NormMode> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto c = small(GetParam());
  const auto layout = ParamLayout::for_config(c);
  const auto params = perturbed(c, 31);
  std::mt19937_64 g(31);
  std::vector<PreparedWindow> batch;
  for (double alt : {10.0, 25.0}) {
    batch.push_back(prepare(c, oracle::random_window(c.past, c.future, alt, Eigen::Vector2d(3, -4), g)));
  }
  const auto analytic = loss_and_gradient(c, layout, params, batch);
  const auto numeric = oracle::finite_difference_gradient(c, layout, params, batch, 1e-6L);
  ASSERT_EQ(analytic.gradient.size(), numeric.size());
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic.gradient[i];
    const double rel = std::abs(a - static_cast<double>(numeric[i])) / (std::abs(a) + 1e-8);
    EXPECT_LT(rel, 1e-4) << "parameter " << i << " analytic " << a << " numeric " << static_cast<double>(numeric[i]);
  }
}

INSTANTIATE_TEST_SUITE_P(BothNorms, GradientCheck, ::testing::Values(NormMode::kAdaIN, NormMode::kPlainNorm));

TEST(Loss, NonFiniteParametersNameTheTensor) {
  PredictorConfig c = small(NormMode::kAdaIN);
  const auto layout = ParamLayout::for_config(c);
  auto params = init_parameters(c, 1);
  params[layout.at("head.bias").offset] = std::numeric_limits<double>::quiet_NaN();
  std::mt19937_64 g(1);
  const std::vector<PreparedWindow> batch{prepare(c, oracle::random_window(3, 2, 10.0, Eigen::Vector2d(0, 0), g))};
  try {
    (void)loss_and_gradient(c, layout, params, batch);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.tensor(), "head.bias");
  }
}

TEST(Adam, FirstStepHandValue) {
  Adam adam(AdamConfig{0.1, 0.9, 0.999, 1e-8}, 2);
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.5, -4.0};
  adam.step(p, g);
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(p[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-12);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Proximal, GradientMatchesFiniteDifferences) {
  const std::vector<double> anchor{0.3};
  for (double theta : {-1.0, 0.3, 2.5}) {
    const std::vector<double> p{theta};
    const auto t = proximal_term(p, anchor, 1.0);
    const double h = 1e-6;
    const double up = proximal_term(std::vector<double>{theta + h}, anchor, 1.0).value;
    const double dn = proximal_term(std::vector<double>{theta - h}, anchor, 1.0).value;
    EXPECT_NEAR(t.gradient[0], theta - 0.3, 1e-15);
    EXPECT_NEAR(t.gradient[0], (up - dn) / (2 * h), 1e-8);
  }
}

std::vector<SampleWindow> dataset(const PredictorConfig& c, int n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::vector<SampleWindow> out;
  for (int i = 0; i < n; ++i) out.push_back(oracle::random_window(c.past, c.future, 10.0, Eigen::Vector2d(i, 0), g));
  return out;
}

TEST(LocalTrain, ZeroLearningRateLeavesWeightsUntouched) {
  PredictorConfig c = small(NormMode::kAdaIN);
  const auto w = init_weights(c, 1);
  LocalTrainOptions o;
  o.epochs = 3;
  o.adam.lr = 0.0;
  Rng rng(1);
  const auto r = local_train(c, w, dataset(c, 10, 1), o, rng);
  EXPECT_TRUE(r.weights == w);
}

TEST(LocalTrain, MemorizesASingleSample) {
  PredictorConfig c = small(NormMode::kAdaIN);
  const auto data = dataset(c, 1, 4);
  LocalTrainOptions o;
  o.epochs = 200;
  o.adam.lr = 1e-2;
  Rng rng(2);
  const auto r = local_train(c, init_weights(c, 2), data, o, rng);
  EXPECT_LT(r.epoch_loss.back(), 1e-3);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(LocalTrain, DeterministicForAFixedSeed) {
  PredictorConfig c;
  c.dropout = 0.1;
  const auto data = dataset(c, 20, 6);
  LocalTrainOptions o;
  o.epochs = 2;
  o.batch_size = 8;
  Rng a(5), b(5);
  EXPECT_TRUE(local_train(c, init_weights(c, 3), data, o, a).weights ==
              local_train(c, init_weights(c, 3), data, o, b).weights);
}

TEST(LocalTrain, EmptyDatasetIsSkipped) {
  PredictorConfig c;
  Rng rng(0);
  const auto r = local_train(c, init_weights(c, 3), {}, LocalTrainOptions{}, rng);
  EXPECT_TRUE(r.skipped);
  EXPECT_TRUE(r.weights == init_weights(c, 3));
}

}  // namespace
}  // namespace fedtrack::predictor
