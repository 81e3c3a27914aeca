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

#include "fedtrack/federated.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "fedtrack/error.hpp"

namespace fedtrack::fl {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kFedAvg: return "fedavg";
    case Strategy::kFedProx: return "fedprox";
    case Strategy::kFedPer: return "fedper";
    case Strategy::kDroneFL: return "dronefl";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kFedAvg, Strategy::kFedProx, Strategy::kFedPer, Strategy::kDroneFL}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

predictor::PredictorConfig model_config_for(Strategy strategy, predictor::PredictorConfig base) {
  if (strategy == Strategy::kDroneFL) {
    base.norm_mode = predictor::NormMode::kAdaIN;
    base.coord_mode = predictor::CoordMode::kRelative;
  } else {
    base.norm_mode = predictor::NormMode::kPlainNorm;
    base.coord_mode = predictor::CoordMode::kAbsolute;
  }
  return base;
}

long rounds_due(double elapsed_s, double period_s) {
  if (!(period_s > 0.0)) throw ConfigError("round period must be positive");
  // Tolerate accumulated floating error right at a period boundary.
  return static_cast<long>(std::floor(elapsed_s / period_s + 1e-9));
}

bool loss_drift_triggered(double baseline_mse, double current_mse, double threshold) {
  return baseline_mse > 0.0 && current_mse > baseline_mse * (1.0 + threshold);
}

// --- messages ----------------------------------------------------------------

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::kWeightsDown: return "weights_down";
    case MessageKind::kWeightsUp: return "weights_up";
    case MessageKind::kPrediction: return "prediction";
    case MessageKind::kControl: return "control";
    case MessageKind::kTrackFeedback: return "track_feedback";
  }
  return "unknown";
}

bool is_uplink(MessageKind kind) { return kind == MessageKind::kWeightsUp || kind == MessageKind::kPrediction; }

CommLedger::CommLedger(const CommLedger& other) {
  std::lock_guard lock(other.mutex_);
  records_ = other.records_;
  uplink_ = other.uplink_;
  downlink_ = other.downlink_;
  by_kind_bytes_ = other.by_kind_bytes_;
  by_kind_count_ = other.by_kind_count_;
}

CommLedger& CommLedger::operator=(const CommLedger& other) {
  if (this == &other) return *this;
  CommLedger copy(other);
  std::scoped_lock lock(mutex_);
  records_ = std::move(copy.records_);
  uplink_ = copy.uplink_;
  downlink_ = copy.downlink_;
  by_kind_bytes_ = std::move(copy.by_kind_bytes_);
  by_kind_count_ = std::move(copy.by_kind_count_);
  return *this;
}

void CommLedger::record(double t, std::string src, std::string dst, MessageKind kind, std::size_t bytes) {
  std::lock_guard lock(mutex_);
  records_.push_back({t, std::move(src), std::move(dst), kind, bytes});
  (is_uplink(kind) ? uplink_ : downlink_) += bytes;
  by_kind_bytes_[kind] += bytes;
  by_kind_count_[kind] += 1;
}

std::vector<MessageRecord> CommLedger::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t CommLedger::total_bytes() const {
  std::lock_guard lock(mutex_);
  return uplink_ + downlink_;
}

std::size_t CommLedger::uplink_bytes() const {
  std::lock_guard lock(mutex_);
  return uplink_;
}

std::size_t CommLedger::downlink_bytes() const {
  std::lock_guard lock(mutex_);
  return downlink_;
}

std::size_t CommLedger::bytes_of(MessageKind kind) const {
  std::lock_guard lock(mutex_);
  auto it = by_kind_bytes_.find(kind);
  return it == by_kind_bytes_.end() ? 0 : it->second;
}

std::size_t CommLedger::count_of(MessageKind kind) const {
  std::lock_guard lock(mutex_);
  auto it = by_kind_count_.find(kind);
  return it == by_kind_count_.end() ? 0 : it->second;
}

double CommLedger::rate(double duration_s) const {
  if (!(duration_s > 0.0)) return 0.0;
  return static_cast<double>(total_bytes()) / duration_s;
}

void CommLedger::write_csv(std::ostream& os) const {
  std::lock_guard lock(mutex_);
  os << "t,src,dst,kind,bytes\n";
  for (const auto& r : records_) {
    os << r.t << ',' << r.src << ',' << r.dst << ',' << to_string(r.kind) << ',' << r.bytes << '\n';
  }
}

void MessageBus::send(double t, const std::string& src, const std::string& dst, MessageKind kind,
                      std::size_t bytes) {
  ledger_.record(t, src, dst, kind, bytes);
  sent_[src] += bytes;
  if (latency_ <= 0.0) {
    received_[dst] += bytes;
  } else {
    pending_.push_back({t + latency_, dst, bytes});
  }
}

void MessageBus::deliver(double now) {
  std::vector<Pending> still;
  for (auto& p : pending_) {
    if (p.due <= now) {
      received_[p.dst] += p.bytes;
    } else {
      still.push_back(std::move(p));
    }
  }
  pending_ = std::move(still);
}

std::size_t MessageBus::sent_bytes(const std::string& endpoint) const {
  auto it = sent_.find(endpoint);
  return it == sent_.end() ? 0 : it->second;
}

std::size_t MessageBus::received_bytes(const std::string& endpoint) const {
  auto it = received_.find(endpoint);
  return it == received_.end() ? 0 : it->second;
}

std::string robot_endpoint(int robot) { return "robot" + std::to_string(robot); }

std::size_t prediction_message_bytes(int future) { return 8 + 16 + 8 * static_cast<std::size_t>(future); }
std::size_t control_message_bytes() { return 4 + 8 + 8; }
std::size_t track_feedback_message_bytes() { return 8 + 8 + 8; }

// --- aggregation -------------------------------------------------------------

WeightBlob fedavg_weighted(std::span<const WeightBlob> blobs, std::span<const double> weights) {
  if (blobs.empty()) throw StructuralError("cannot aggregate zero models");
  if (weights.size() != blobs.size()) throw StructuralError("one weight per model is required");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw StructuralError("aggregation weights must sum to a positive value");

  const WeightBlob& first = blobs.front();
  std::vector<double> acc(first.parameter_count(), 0.0);
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    if (!blobs[b].same_layout(first)) throw StructuralError("layout manifest mismatch during aggregation");
    const auto v = blobs[b].values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[b] * static_cast<double>(v[i]);
  }
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / total);
  WeightBlob result(first.manifest(), std::move(out), first.version());
  result.personalized_mask = first.personalized_mask;
  return result;
}

WeightBlob fedavg(std::span<const WeightBlob> blobs) {
  const std::vector<double> ones(blobs.size(), 1.0);
  return fedavg_weighted(blobs, ones);
}

namespace {

bool selected(const std::string& tensor, const std::set<std::string>& names) {
  for (const auto& n : names) {
    if (tensor == n) return true;
    if (tensor.size() > n.size() && tensor.compare(0, n.size(), n) == 0 && tensor[n.size()] == '.') return true;
  }
  return false;
}

}  // namespace

FedPerParts fedper_split(const WeightBlob& blob, const std::set<std::string>& personalized) {
  for (const auto& n : personalized) {
    bool found = false;
    for (const auto& t : blob.manifest()) found = found || selected(t.name, {n});
    if (!found) throw StructuralError("personalized tensor '" + n + "' is not in the manifest");
  }
  std::vector<TensorShape> shared_m, personal_m;
  std::vector<float> shared_v, personal_v;
  std::size_t offset = 0;
  const auto values = blob.values();
  for (const auto& t : blob.manifest()) {
    const bool mine = selected(t.name, personalized);
    auto& m = mine ? personal_m : shared_m;
    auto& v = mine ? personal_v : shared_v;
    m.push_back(t);
    v.insert(v.end(), values.begin() + static_cast<std::ptrdiff_t>(offset),
             values.begin() + static_cast<std::ptrdiff_t>(offset + t.numel()));
    offset += t.numel();
  }
  FedPerParts parts{WeightBlob(std::move(shared_m), std::move(shared_v), blob.version()),
                    WeightBlob(std::move(personal_m), std::move(personal_v), blob.version())};
  parts.shared.personalized_mask = personalized;
  parts.personal.personalized_mask = personalized;
  return parts;
}

WeightBlob fedper_combine(const FedPerParts& parts, const std::vector<TensorShape>& manifest) {
  std::vector<float> values;
  std::size_t shared_cursor = 0, personal_cursor = 0;
  std::size_t shared_off = 0, personal_off = 0;
  const auto& sm = parts.shared.manifest();
  const auto& pm = parts.personal.manifest();
  for (const auto& t : manifest) {
    if (shared_cursor < sm.size() && sm[shared_cursor] == t) {
      const auto v = parts.shared.values().subspan(shared_off, t.numel());
      values.insert(values.end(), v.begin(), v.end());
      shared_off += t.numel();
      ++shared_cursor;
    } else if (personal_cursor < pm.size() && pm[personal_cursor] == t) {
      const auto v = parts.personal.values().subspan(personal_off, t.numel());
      values.insert(values.end(), v.begin(), v.end());
      personal_off += t.numel();
      ++personal_cursor;
    } else {
      throw StructuralError("tensor '" + t.name + "' missing from both FedPer parts");
    }
  }
  if (shared_cursor != sm.size() || personal_cursor != pm.size()) {
    throw StructuralError("FedPer parts carry tensors outside the manifest");
  }
  WeightBlob out(manifest, std::move(values), parts.shared.version());
  out.personalized_mask = parts.shared.personalized_mask;
  return out;
}

WeightBlob fedper_aggregate(std::span<const WeightBlob> blobs, const WeightBlob& previous_global,
                            const std::set<std::string>& personalized) {
  std::vector<WeightBlob> shared;
  shared.reserve(blobs.size());
  for (const auto& b : blobs) {
    if (!b.same_layout(previous_global)) throw StructuralError("layout manifest mismatch during aggregation");
    shared.push_back(fedper_split(b, personalized).shared);
  }
  FedPerParts parts{fedavg(shared), fedper_split(previous_global, personalized).personal};
  return fedper_combine(parts, previous_global.manifest());
}

WeightBlob client_model(const StrategySpec& strategy, const WeightBlob& global, const RobotClient& client) {
  if (strategy.kind != Strategy::kFedPer || !client.personal) return global;
  FedPerParts parts{fedper_split(global, strategy.personalized).shared, *client.personal};
  return fedper_combine(parts, global.manifest());
}

RoundResult run_round(const RoundPlan& plan, const predictor::PredictorConfig& model, const WeightBlob& global,
                      std::span<RobotClient> clients, MessageBus& bus, double t) {
  predictor::check_layout(model, global);
  if (clients.empty()) throw StructuralError("a round needs at least one robot");

  predictor::LocalTrainOptions options;
  options.epochs = plan.local_epochs;
  options.batch_size = plan.batch_size;
  options.adam = plan.adam;
  if (plan.strategy.kind == Strategy::kFedProx) options.prox_mu = plan.strategy.prox_mu;

  RoundResult result;
  std::vector<WeightBlob> uploads;
  std::vector<double> sizes;
  for (auto& client : clients) {
    const std::string endpoint = robot_endpoint(client.id);
    const WeightBlob start = client_model(plan.strategy, global, client);
    bus.send(t, kCloudEndpoint, endpoint, MessageKind::kWeightsDown, global.byte_size());
    result.bytes += global.byte_size();

    auto trained = predictor::local_train(model, start, client.train_set, options, client.rng);
    if (!trained.weights.same_layout(global)) {
      throw StructuralError("robot " + std::to_string(client.id) + " returned a mismatched manifest");
    }
    bus.send(t, endpoint, kCloudEndpoint, MessageKind::kWeightsUp, trained.weights.byte_size());
    result.bytes += trained.weights.byte_size();

    if (plan.strategy.kind == Strategy::kFedPer) {
      client.personal = fedper_split(trained.weights, plan.strategy.personalized).personal;
    }
    result.skipped.push_back(trained.skipped);
    result.train_loss.push_back(trained.epoch_loss.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                           : trained.epoch_loss.back());
    sizes.push_back(static_cast<double>(std::max<std::size_t>(client.train_set.size(), 1)));
    uploads.push_back(std::move(trained.weights));
  }

  if (plan.strategy.kind == Strategy::kFedPer) {
    result.global = fedper_aggregate(uploads, global, plan.strategy.personalized);
  } else if (plan.sample_weighted) {
    result.global = fedavg_weighted(uploads, sizes);
  } else {
    result.global = fedavg(uploads);
  }
  for (const auto& client : clients) result.local_models.push_back(client_model(plan.strategy, result.global, client));
  return result;
}

std::string round_log_line(int round, Strategy strategy, std::span<const double> train_loss, double test_loss,
                           std::size_t blob_bytes, std::size_t cumulative_bytes) {
  nlohmann::json j;
  j["round"] = round;
  j["strategy"] = std::string(to_string(strategy));
  j["train_loss"] = std::vector<double>(train_loss.begin(), train_loss.end());
  j["test_loss"] = test_loss;
  j["blob_bytes"] = blob_bytes;
  j["cumulative_bytes"] = cumulative_bytes;
  return j.dump();
}

}  // namespace fedtrack::fl
