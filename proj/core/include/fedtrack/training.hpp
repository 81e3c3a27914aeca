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

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fedtrack/predictor.hpp"

namespace fedtrack::predictor {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(AdamConfig config, std::size_t size);

  void step(std::span<double> params, std::span<const double> grad);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

/// (mu / 2) * ||theta - anchor||^2 and its gradient mu * (theta - anchor).
struct ProximalTerm {
  double value = 0.0;
  std::vector<double> gradient;
};
ProximalTerm proximal_term(std::span<const double> params, std::span<const double> anchor, double mu);

struct LocalTrainOptions {
  int epochs = 10;
  std::size_t batch_size = 32;
  AdamConfig adam;
  double prox_mu = 0.0;  // > 0 adds the proximal pull toward the received weights
};

struct LocalTrainResult {
  WeightBlob weights;
  bool skipped = false;            // empty dataset, weights unchanged
  std::vector<double> epoch_loss;  // mean mini-batch loss per epoch
};

/// Shuffled mini-batch Adam over the local dataset. Optimizer moments start
/// from zero on every call.
LocalTrainResult local_train(const PredictorConfig& config, const WeightBlob& weights,
                             std::span<const SampleWindow> dataset, const LocalTrainOptions& options, Rng& rng);

}  // namespace fedtrack::predictor
