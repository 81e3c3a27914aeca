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

#include "fedtrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedtrack/error.hpp"

namespace fedtrack::predictor {

Adam::Adam(AdamConfig config, std::size_t size) : config_(config), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

ProximalTerm proximal_term(std::span<const double> params, std::span<const double> anchor, double mu) {
  if (params.size() != anchor.size()) throw StructuralError("proximal anchor does not match parameters");
  ProximalTerm t;
  t.gradient.resize(params.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double d = params[i] - anchor[i];
    sq += d * d;
    t.gradient[i] = mu * d;
  }
  t.value = 0.5 * mu * sq;
  return t;
}

LocalTrainResult local_train(const PredictorConfig& config, const WeightBlob& weights,
                             std::span<const SampleWindow> dataset, const LocalTrainOptions& options, Rng& rng) {
  check_layout(config, weights);
  LocalTrainResult result;
  if (dataset.empty()) {
    result.weights = weights;
    result.skipped = true;
    return result;
  }
  if (options.batch_size == 0 || options.epochs < 0) throw ConfigError("invalid local training options");

  const auto layout = ParamLayout::for_config(config);
  auto params = to_parameters(weights);
  const auto received = params;

  std::vector<PreparedWindow> prepared;
  prepared.reserve(dataset.size());
  for (const auto& w : dataset) {
    if (w.labels.size() == 0) throw StructuralError("training window without labels");
    prepared.push_back(prepare(config, w));
  }

  Adam adam(options.adam, params.size());
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<PreparedWindow> batch;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(prepared[order[i]]);
      auto g = loss_and_gradient(config, layout, params, batch, &rng);
      if (options.prox_mu > 0.0) {
        const auto prox = proximal_term(params, received, options.prox_mu);
        g.loss += prox.value;
        for (std::size_t i = 0; i < params.size(); ++i) g.gradient[i] += prox.gradient[i];
      }
      adam.step(params, g.gradient);
      loss_sum += g.loss;
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  result.weights = to_blob(layout, params);
  return result;
}

}  // namespace fedtrack::predictor
