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

// Shallow encoder-decoder transformer that maps a window of boxes and
// odometry to future target positions. Normalization sites are either
// altitude-conditioned (AdaIN) or plain instance norms with learned affine.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fedtrack/autodiff.hpp"
#include "fedtrack/weight_blob.hpp"
#include "fedtrack/window.hpp"

namespace fedtrack::predictor {

using Rng = std::mt19937_64;

enum class NormMode { kAdaIN, kPlainNorm };
enum class CoordMode { kRelative, kAbsolute };

std::string_view to_string(NormMode mode);
std::string_view to_string(CoordMode mode);

struct PredictorConfig {
  int d_model = 16;
  int n_enc = 2;
  int n_dec = 2;
  int d_ff = 32;
  int n_heads = 2;
  double dropout = 0.1;
  int past = 10;    // L_p
  int future = 5;   // L_f
  NormMode norm_mode = NormMode::kAdaIN;
  CoordMode coord_mode = CoordMode::kRelative;
  double altitude_scale = 25.0;  // AdaIN input is altitude / altitude_scale
  double norm_eps = 1e-5;

  void validate() const;
  bool operator==(const PredictorConfig&) const = default;
};

struct TensorSlot {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  int fan_in = 1;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Ordered tensor table for one architecture. Every robot in a run shares it.
class ParamLayout {
 public:
  static ParamLayout for_config(const PredictorConfig& config);

  const std::vector<TensorSlot>& slots() const { return slots_; }
  std::size_t total() const { return total_; }
  const TensorSlot& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<TensorShape> manifest() const;

 private:
  void add(std::string name, int rows, int cols, int fan_in);
  std::vector<TensorSlot> slots_;
  std::size_t total_ = 0;
};

/// Closed-form parameter count of an architecture, independent of the layout
/// table.
std::size_t expected_parameter_count(const PredictorConfig& config);

/// A window translated into the network frame.
struct PreparedWindow {
  Eigen::MatrixXd features;  // L_p x 16
  double altitude_input = 0.0;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();  // added back to outputs
  Eigen::MatrixXd labels;                            // L_f x 2, network frame
};

PreparedWindow prepare(const PredictorConfig& config, const SampleWindow& window);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for projections; norm scales start
/// at one and shifts at zero.
std::vector<double> init_parameters(const PredictorConfig& config, std::uint64_t seed);
WeightBlob init_weights(const PredictorConfig& config, std::uint64_t seed);

std::vector<double> to_parameters(const WeightBlob& blob);
WeightBlob to_blob(const ParamLayout& layout, std::span<const double> params);

/// Throws StructuralError if the blob manifest differs from the layout of
/// `config`.
void check_layout(const PredictorConfig& config, const WeightBlob& blob);

/// Records the forward graph on `tape` and returns the L_f x 2 output in the
/// network frame. `dropout_rng` enables dropout (training mode) when non-null.
template <typename T>
ad::Var build_forward(ad::Tape<T>& tape, const PredictorConfig& config, const ParamLayout& layout,
                      std::span<const T> params, const PreparedWindow& window, Rng* dropout_rng);

/// AdaIN on a tape: per-channel instance norm over rows, then scale by sigma
/// and shift by mu where (mu, sigma) = A * altitude + b, A and b being
/// 1 x 2C rows laid out as [mu_1..mu_C, sigma_1..sigma_C].
template <typename T>
ad::Var adain_node(ad::Tape<T>& tape, ad::Var z, ad::Var style_a, ad::Var style_b, T altitude, T eps);

/// Stand-alone AdaIN. z is (sequence x channels); A and b have 2 * channels
/// entries.
Eigen::MatrixXd adain(const Eigen::MatrixXd& z, double altitude, const Eigen::VectorXd& A, const Eigen::VectorXd& b,
                      double eps = 1e-5);

/// Absolute-frame prediction (L_f x 2). Dropout only when `train_mode`.
Eigen::MatrixXd forward(const PredictorConfig& config, const WeightBlob& weights, const SampleWindow& window,
                        bool train_mode, Rng& rng);

/// Keeps the parameters in double precision for repeated inference.
class Predictor {
 public:
  Predictor(PredictorConfig config, const WeightBlob& weights);

  const PredictorConfig& config() const { return config_; }
  Eigen::MatrixXd predict(const SampleWindow& window) const;
  void set_weights(const WeightBlob& weights);

 private:
  PredictorConfig config_;
  ParamLayout layout_;
  std::vector<double> params_;
  mutable ad::Tape<double> tape_;
};

/// Mean over the batch of per-window MSE (all L_f steps, both coordinates),
/// evaluated without dropout.
template <typename T>
T batch_loss(const PredictorConfig& config, const ParamLayout& layout, std::span<const T> params,
             std::span<const PreparedWindow> batch);

struct GradientResult {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Loss and its gradient with respect to every parameter. Throws
/// NumericalError naming the first non-finite tensor.
GradientResult loss_and_gradient(const PredictorConfig& config, const ParamLayout& layout,
                                 std::span<const double> params, std::span<const PreparedWindow> batch,
                                 Rng* dropout_rng = nullptr);

struct LossAndGradients {
  double loss = 0.0;
  WeightBlob gradient;
};

LossAndGradients loss_and_gradients(const PredictorConfig& config, const WeightBlob& weights,
                                    std::span<const SampleWindow> batch);

/// Mean per-window MSE in metres squared, no dropout.
double evaluate_mse(const PredictorConfig& config, const WeightBlob& weights, std::span<const SampleWindow> data);

}  // namespace fedtrack::predictor
