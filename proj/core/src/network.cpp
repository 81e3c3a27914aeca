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
#include <random>
#include <string>

#include "fedtrack/error.hpp"
#include "fedtrack/predictor.hpp"

namespace fedtrack::predictor {

std::string_view to_string(NormMode mode) { return mode == NormMode::kAdaIN ? "adain" : "plain"; }
std::string_view to_string(CoordMode mode) { return mode == CoordMode::kRelative ? "relative" : "absolute"; }

void PredictorConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model must be a positive multiple of n_heads");
  }
  if (n_enc < 0 || n_dec < 0 || d_ff <= 0) throw ConfigError("layer counts and d_ff must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (past < 1 || future < 1) throw ConfigError("window lengths must be at least 1");
  if (!(altitude_scale > 0.0) || !(norm_eps > 0.0)) throw ConfigError("altitude_scale and norm_eps must be positive");
}

// --- layout ------------------------------------------------------------------

void ParamLayout::add(std::string name, int rows, int cols, int fan_in) {
  slots_.push_back({std::move(name), rows, cols, total_, fan_in});
  total_ += slots_.back().size();
}

ParamLayout ParamLayout::for_config(const PredictorConfig& c) {
  c.validate();
  ParamLayout l;
  const int d = c.d_model;
  auto norm = [&](const std::string& p) {
    if (c.norm_mode == NormMode::kAdaIN) {
      l.add(p + ".style_a", 1, 2 * d, 1);
      l.add(p + ".style_b", 1, 2 * d, 1);
    } else {
      l.add(p + ".scale", 1, d, 1);
      l.add(p + ".shift", 1, d, 1);
    }
  };
  auto attention = [&](const std::string& p) {
    for (const char* w : {"q", "k", "v", "o"}) {
      l.add(p + ".w" + w, d, d, d);
      l.add(p + ".b" + w, 1, d, d);
    }
  };
  auto feedforward = [&](const std::string& p) {
    l.add(p + ".w1", d, c.d_ff, d);
    l.add(p + ".b1", 1, c.d_ff, d);
    l.add(p + ".w2", c.d_ff, d, c.d_ff);
    l.add(p + ".b2", 1, d, c.d_ff);
  };

  l.add("embed.weight", kFeatureWidth, d, kFeatureWidth);
  l.add("embed.bias", 1, d, kFeatureWidth);
  for (int i = 0; i < c.n_enc; ++i) {
    const std::string p = "enc." + std::to_string(i);
    norm(p + ".norm1");
    attention(p + ".attn");
    norm(p + ".norm2");
    feedforward(p + ".ff");
  }
  l.add("dec.query", c.future, d, d);
  for (int i = 0; i < c.n_dec; ++i) {
    const std::string p = "dec." + std::to_string(i);
    norm(p + ".norm1");
    attention(p + ".self_attn");
    norm(p + ".norm2");
    attention(p + ".cross_attn");
    norm(p + ".norm3");
    feedforward(p + ".ff");
  }
  l.add("head.weight", d, 2, d);
  l.add("head.bias", 1, 2, d);
  return l;
}

const TensorSlot& ParamLayout::at(std::string_view name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return s;
  }
  throw StructuralError("layout has no tensor '" + std::string(name) + "'");
}

bool ParamLayout::contains(std::string_view name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return true;
  }
  return false;
}

std::vector<TensorShape> ParamLayout::manifest() const {
  std::vector<TensorShape> m;
  m.reserve(slots_.size());
  for (const auto& s : slots_) {
    m.push_back({s.name, {static_cast<std::uint32_t>(s.rows), static_cast<std::uint32_t>(s.cols)}});
  }
  return m;
}

std::size_t expected_parameter_count(const PredictorConfig& c) {
  const std::size_t d = static_cast<std::size_t>(c.d_model);
  const std::size_t ff = static_cast<std::size_t>(c.d_ff);
  const std::size_t norm = c.norm_mode == NormMode::kAdaIN ? 4 * d : 2 * d;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t mlp = d * ff + ff + ff * d + d;
  const std::size_t embed = kFeatureWidth * d + d;
  const std::size_t enc = static_cast<std::size_t>(c.n_enc) * (attn + mlp + 2 * norm);
  const std::size_t dec = static_cast<std::size_t>(c.n_dec) * (2 * attn + mlp + 3 * norm);
  const std::size_t query = static_cast<std::size_t>(c.future) * d;
  const std::size_t head = 2 * d + 2;
  return embed + enc + query + dec + head;
}

// --- parameters --------------------------------------------------------------

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<double> init_parameters(const PredictorConfig& config, std::uint64_t seed) {
  const auto layout = ParamLayout::for_config(config);
  std::vector<double> p(layout.total(), 0.0);
  Rng rng(seed);
  for (const auto& s : layout.slots()) {
    auto* first = p.data() + s.offset;
    if (ends_with(s.name, ".style_a") || ends_with(s.name, ".shift")) continue;  // zeros
    if (ends_with(s.name, ".scale")) {
      std::fill(first, first + s.size(), 1.0);
      continue;
    }
    if (ends_with(s.name, ".style_b")) {
      // [mu | sigma]: identity style at start.
      std::fill(first + s.cols / 2, first + s.cols, 1.0);
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < s.size(); ++i) first[i] = u(rng);
  }
  return p;
}

WeightBlob init_weights(const PredictorConfig& config, std::uint64_t seed) {
  return to_blob(ParamLayout::for_config(config), init_parameters(config, seed));
}

std::vector<double> to_parameters(const WeightBlob& blob) {
  return std::vector<double>(blob.values().begin(), blob.values().end());
}

WeightBlob to_blob(const ParamLayout& layout, std::span<const double> params) {
  if (params.size() != layout.total()) throw StructuralError("parameter vector does not match layout");
  std::vector<float> values(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) values[i] = static_cast<float>(params[i]);
  return WeightBlob(layout.manifest(), std::move(values));
}

void check_layout(const PredictorConfig& config, const WeightBlob& blob) {
  const auto expected = ParamLayout::for_config(config).manifest();
  if (blob.manifest() != expected) {
    throw StructuralError("weight blob manifest does not match the predictor configuration");
  }
}

// --- inputs ------------------------------------------------------------------

constexpr double kBoxCentreGain = 4.0;

PreparedWindow prepare(const PredictorConfig& config, const SampleWindow& window) {
  if (window.features.rows() != config.past || window.features.cols() != kFeatureWidth) {
    throw StructuralError("window features are " + std::to_string(window.features.rows()) + "x" +
                          std::to_string(window.features.cols()) + ", expected " + std::to_string(config.past) +
                          "x16");
  }
  if (window.labels.size() != 0 && (window.labels.rows() != config.future || window.labels.cols() != 2)) {
    throw StructuralError("window labels do not match L_f");
  }
  PreparedWindow p;
  p.features = window.features;
  p.labels = window.labels;
  p.altitude_input = window.altitude / config.altitude_scale;
  // Centre the box in the image and bring altitude to unit scale.
  p.features.col(0).array() = (p.features.col(0).array() - 0.5) * kBoxCentreGain;
  p.features.col(1).array() = (p.features.col(1).array() - 0.5) * kBoxCentreGain;
  p.features.col(kOdomZ).array() /= config.altitude_scale;
  if (config.coord_mode == CoordMode::kRelative) {
    p.offset = window.anchor;
    p.features.col(kOdomX).array() -= window.anchor.x();
    p.features.col(kOdomY).array() -= window.anchor.y();
    if (p.labels.size() != 0) {
      p.labels.col(0).array() -= window.anchor.x();
      p.labels.col(1).array() -= window.anchor.y();
    }
  }
  return p;
}

// --- forward graph -----------------------------------------------------------

namespace {

template <typename T>
ad::Matrix<T> to_matrix(const Eigen::MatrixXd& m) {
  ad::Matrix<T> out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) = static_cast<T>(m(i, j));
  return out;
}

template <typename T>
class Builder {
 public:
  Builder(ad::Tape<T>& tape, const PredictorConfig& config, const ParamLayout& layout, std::span<const T> params,
          T altitude, Rng* rng)
      : tape_(tape), config_(config), layout_(layout), params_(params), altitude_(altitude), rng_(rng) {}

  // Parameters are consumed in layout order.
  ad::Var next() {
    const auto& s = layout_.slots()[cursor_++];
    return tape_.parameter(params_, s.offset, s.rows, s.cols);
  }

  ad::Var linear(ad::Var x) {
    const ad::Var w = next();
    const ad::Var b = next();
    return tape_.add_row(tape_.matmul(x, w), b);
  }

  ad::Var norm(ad::Var x) {
    const ad::Var a = next();
    const ad::Var b = next();
    const T eps = static_cast<T>(config_.norm_eps);
    if (config_.norm_mode == NormMode::kAdaIN) return adain_node(tape_, x, a, b, altitude_, eps);
    return tape_.add_row(tape_.mul_row(tape_.instance_norm(x, eps), a), b);
  }

  ad::Var attention(ad::Var query_in, ad::Var kv_in) {
    const ad::Var q = linear(query_in);
    const ad::Var k = linear(kv_in);
    const ad::Var v = linear(kv_in);
    const int heads = config_.n_heads;
    const int dh = config_.d_model / heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    std::vector<ad::Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const ad::Var qh = heads == 1 ? q : tape_.slice_cols(q, h * dh, dh);
      const ad::Var kh = heads == 1 ? k : tape_.slice_cols(k, h * dh, dh);
      const ad::Var vh = heads == 1 ? v : tape_.slice_cols(v, h * dh, dh);
      const ad::Var weights = tape_.softmax_rows(tape_.scale(tape_.matmul_nt(qh, kh), inv_sqrt));
      outs.push_back(tape_.matmul(weights, vh));
    }
    const ad::Var merged = heads == 1 ? outs.front() : tape_.concat_cols(outs);
    return linear(merged);
  }

  ad::Var feedforward(ad::Var x) { return linear(tape_.relu(linear(x))); }

  ad::Var dropout(ad::Var x) {
    if (rng_ == nullptr || config_.dropout <= 0.0) return x;
    const auto& v = tape_.value(x);
    ad::Matrix<T> mask(v.rows, v.cols);
    std::bernoulli_distribution keep(1.0 - config_.dropout);
    const T kept = static_cast<T>(1.0 / (1.0 - config_.dropout));
    for (auto& m : mask.data) m = keep(*rng_) ? kept : T(0);
    return tape_.dropout(x, mask);
  }

  ad::Var residual(ad::Var x, ad::Var sub) { return tape_.add(x, dropout(sub)); }

  ad::Tape<T>& tape() { return tape_; }

 private:
  ad::Tape<T>& tape_;
  const PredictorConfig& config_;
  const ParamLayout& layout_;
  std::span<const T> params_;
  T altitude_;
  Rng* rng_;
  std::size_t cursor_ = 0;
};

template <typename T>
ad::Matrix<T> positional_encoding(int length, int width) {
  ad::Matrix<T> pe(length, width);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < width; i += 2) {
      const T freq = std::pow(T(10000), -static_cast<T>(i) / static_cast<T>(width));
      pe(t, i) = std::sin(static_cast<T>(t) * freq);
      if (i + 1 < width) pe(t, i + 1) = std::cos(static_cast<T>(t) * freq);
    }
  }
  return pe;
}

}  // namespace

template <typename T>
ad::Var adain_node(ad::Tape<T>& tape, ad::Var z, ad::Var style_a, ad::Var style_b, T altitude, T eps) {
  const int channels = tape.value(z).cols;
  const ad::Var normalized = tape.instance_norm(z, eps);
  const ad::Var style = tape.add(tape.scale(style_a, altitude), style_b);
  const ad::Var mu = tape.slice_cols(style, 0, channels);
  const ad::Var sigma = tape.slice_cols(style, channels, channels);
  return tape.add_row(tape.mul_row(normalized, sigma), mu);
}

template <typename T>
ad::Var build_forward(ad::Tape<T>& tape, const PredictorConfig& config, const ParamLayout& layout,
                      std::span<const T> params, const PreparedWindow& window, Rng* dropout_rng) {
  if (params.size() != layout.total()) throw StructuralError("parameter vector does not match layout");
  Builder<T> b(tape, config, layout, params, static_cast<T>(window.altitude_input), dropout_rng);

  const ad::Var features = tape.constant(to_matrix<T>(window.features));
  const ad::Var pe = tape.constant(positional_encoding<T>(config.past, config.d_model));
  ad::Var x = b.dropout(tape.add(b.linear(features), pe));

  // Pre-norm residual blocks: the residual stream itself is never normalized,
  // so per-channel levels survive to the decoder.
  for (int l = 0; l < config.n_enc; ++l) {
    const ad::Var h = b.norm(x);
    x = b.residual(x, b.attention(h, h));
    x = b.residual(x, b.feedforward(b.norm(x)));
  }

  ad::Var y = b.next();  // learned decoder queries, L_f x d
  for (int l = 0; l < config.n_dec; ++l) {
    const ad::Var h = b.norm(y);
    y = b.residual(y, b.attention(h, h));
    y = b.residual(y, b.attention(b.norm(y), x));
    y = b.residual(y, b.feedforward(b.norm(y)));
  }
  return b.linear(y);
}

Eigen::MatrixXd adain(const Eigen::MatrixXd& z, double altitude, const Eigen::VectorXd& A, const Eigen::VectorXd& b,
                      double eps) {
  const int channels = static_cast<int>(z.cols());
  if (A.size() != 2 * channels || b.size() != 2 * channels) {
    throw StructuralError("AdaIN style parameters must have 2 * channels entries");
  }
  ad::Tape<double> tape;
  const ad::Var zv = tape.constant(to_matrix<double>(z));
  const ad::Var av = tape.constant(to_matrix<double>(A.transpose()));
  const ad::Var bv = tape.constant(to_matrix<double>(b.transpose()));
  const auto& out = tape.value(adain_node(tape, zv, av, bv, altitude, eps));
  Eigen::MatrixXd result(z.rows(), z.cols());
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) result(i, j) = out(i, j);
  return result;
}

namespace {

Eigen::MatrixXd to_absolute(const ad::Matrix<double>& out, const Eigen::Vector2d& offset) {
  Eigen::MatrixXd r(out.rows, 2);
  for (int i = 0; i < out.rows; ++i) {
    r(i, 0) = out(i, 0) + offset.x();
    r(i, 1) = out(i, 1) + offset.y();
  }
  return r;
}

}  // namespace

Eigen::MatrixXd forward(const PredictorConfig& config, const WeightBlob& weights, const SampleWindow& window,
                        bool train_mode, Rng& rng) {
  check_layout(config, weights);
  const auto layout = ParamLayout::for_config(config);
  const auto params = to_parameters(weights);
  const auto prepared = prepare(config, window);
  ad::Tape<double> tape;
  const ad::Var out = build_forward<double>(tape, config, layout, params, prepared, train_mode ? &rng : nullptr);
  return to_absolute(tape.value(out), prepared.offset);
}

Predictor::Predictor(PredictorConfig config, const WeightBlob& weights)
    : config_(std::move(config)), layout_(ParamLayout::for_config(config_)) {
  set_weights(weights);
}

void Predictor::set_weights(const WeightBlob& weights) {
  check_layout(config_, weights);
  params_ = to_parameters(weights);
}

Eigen::MatrixXd Predictor::predict(const SampleWindow& window) const {
  const auto prepared = prepare(config_, window);
  tape_.reset();
  const ad::Var out = build_forward<double>(tape_, config_, layout_, params_, prepared, nullptr);
  return to_absolute(tape_.value(out), prepared.offset);
}

// --- losses ------------------------------------------------------------------

template <typename T>
T batch_loss(const PredictorConfig& config, const ParamLayout& layout, std::span<const T> params,
             std::span<const PreparedWindow> batch) {
  if (batch.empty()) throw DataVolumeError("loss requires a non-empty batch");
  ad::Tape<T> tape;
  T total = 0;
  for (const auto& w : batch) {
    tape.reset();
    const ad::Var out = build_forward<T>(tape, config, layout, params, w, nullptr);
    total += tape.value(tape.mse(out, to_matrix<T>(w.labels))).data[0];
  }
  return total / static_cast<T>(batch.size());
}

namespace {

[[noreturn]] void throw_non_finite(const ParamLayout& layout, std::span<const double> params,
                                   std::span<const double> grad, double loss) {
  // A bad parameter poisons every gradient, so parameters are scanned first.
  for (const auto values : {params, grad}) {
    for (const auto& s : layout.slots()) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(values[s.offset + i])) {
          throw NumericalError(s.name,
                               "non-finite value in tensor '" + s.name + "' (loss " + std::to_string(loss) + ")");
        }
      }
    }
  }
  throw NumericalError("loss", "non-finite loss " + std::to_string(loss));
}

}  // namespace

GradientResult loss_and_gradient(const PredictorConfig& config, const ParamLayout& layout,
                                 std::span<const double> params, std::span<const PreparedWindow> batch,
                                 Rng* dropout_rng) {
  if (batch.empty()) throw DataVolumeError("loss requires a non-empty batch");
  thread_local ad::Tape<double> tape;
  GradientResult result;
  result.gradient.assign(layout.total(), 0.0);
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& w : batch) {
    tape.reset();
    const ad::Var out = build_forward<double>(tape, config, layout, params, w, dropout_rng);
    const ad::Var loss = tape.mse(out, to_matrix<double>(w.labels));
    result.loss += tape.value(loss).data[0] * weight;
    tape.backward(loss, weight, result.gradient);
  }
  if (!std::isfinite(result.loss)) throw_non_finite(layout, params, result.gradient, result.loss);
  return result;
}

LossAndGradients loss_and_gradients(const PredictorConfig& config, const WeightBlob& weights,
                                    std::span<const SampleWindow> batch) {
  check_layout(config, weights);
  const auto layout = ParamLayout::for_config(config);
  const auto params = to_parameters(weights);
  std::vector<PreparedWindow> prepared;
  prepared.reserve(batch.size());
  for (const auto& w : batch) prepared.push_back(prepare(config, w));
  auto r = loss_and_gradient(config, layout, params, prepared);
  return {r.loss, to_blob(layout, r.gradient)};
}

double evaluate_mse(const PredictorConfig& config, const WeightBlob& weights, std::span<const SampleWindow> data) {
  check_layout(config, weights);
  const auto layout = ParamLayout::for_config(config);
  const auto params = to_parameters(weights);
  std::vector<PreparedWindow> prepared;
  prepared.reserve(data.size());
  for (const auto& w : data) prepared.push_back(prepare(config, w));
  return batch_loss<double>(config, layout, params, prepared);
}

template ad::Var build_forward<double>(ad::Tape<double>&, const PredictorConfig&, const ParamLayout&,
                                       std::span<const double>, const PreparedWindow&, Rng*);
template ad::Var build_forward<long double>(ad::Tape<long double>&, const PredictorConfig&, const ParamLayout&,
                                            std::span<const long double>, const PreparedWindow&, Rng*);
template ad::Var adain_node<double>(ad::Tape<double>&, ad::Var, ad::Var, ad::Var, double, double);
template ad::Var adain_node<long double>(ad::Tape<long double>&, ad::Var, ad::Var, ad::Var, long double,
                                         long double);
template double batch_loss<double>(const PredictorConfig&, const ParamLayout&, std::span<const double>,
                                   std::span<const PreparedWindow>);
template long double batch_loss<long double>(const PredictorConfig&, const ParamLayout&,
                                             std::span<const long double>, std::span<const PreparedWindow>);

}  // namespace fedtrack::predictor
