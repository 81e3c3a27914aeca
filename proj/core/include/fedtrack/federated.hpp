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

// Cloud/robot federated rounds over an in-process message bus, with
// byte-accurate communication accounting.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedtrack/predictor.hpp"
#include "fedtrack/training.hpp"
#include "fedtrack/weight_blob.hpp"

namespace fedtrack::fl {

enum class Strategy { kFedAvg, kFedProx, kFedPer, kDroneFL };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct StrategySpec {
  Strategy kind = Strategy::kDroneFL;
  double prox_mu = 0.01;
  std::set<std::string> personalized = {"head"};
};

/// DroneFL uses altitude-conditioned norms and robot-relative coordinates;
/// every baseline uses plain norms and absolute coordinates.
predictor::PredictorConfig model_config_for(Strategy strategy, predictor::PredictorConfig base);

enum class TriggerKind { kPeriod, kManual, kLossDrift };

struct RoundTrigger {
  TriggerKind kind = TriggerKind::kPeriod;
  double period_s = 100.0;
  double drift_threshold = 0.2;  // relative increase of local validation MSE
};

/// Number of periodic rounds completed after `elapsed_s` seconds.
long rounds_due(double elapsed_s, double period_s);

/// True when `current` exceeds `baseline` by more than the relative threshold.
bool loss_drift_triggered(double baseline_mse, double current_mse, double threshold);

struct RoundPlan {
  int round_index = 0;
  RoundTrigger trigger;
  int local_epochs = 10;
  StrategySpec strategy;
  predictor::AdamConfig adam;
  std::size_t batch_size = 32;
  bool sample_weighted = false;  // weight the mean by local dataset size
};

enum class MessageKind { kWeightsDown, kWeightsUp, kPrediction, kControl, kTrackFeedback };
std::string_view to_string(MessageKind kind);
bool is_uplink(MessageKind kind);

struct MessageRecord {
  double t = 0.0;
  std::string src;
  std::string dst;
  MessageKind kind = MessageKind::kPrediction;
  std::size_t bytes = 0;
};

/// Append-only message log with running totals. Thread-safe.
class CommLedger {
 public:
  CommLedger() = default;
  CommLedger(const CommLedger& other);
  CommLedger& operator=(const CommLedger& other);

  void record(double t, std::string src, std::string dst, MessageKind kind, std::size_t bytes);

  std::vector<MessageRecord> records() const;
  std::size_t total_bytes() const;
  std::size_t uplink_bytes() const;
  std::size_t downlink_bytes() const;
  std::size_t bytes_of(MessageKind kind) const;
  std::size_t count_of(MessageKind kind) const;
  double rate(double duration_s) const;

  void write_csv(std::ostream& os) const;

 private:
  mutable std::mutex mutex_;
  std::vector<MessageRecord> records_;
  std::size_t uplink_ = 0;
  std::size_t downlink_ = 0;
  std::map<MessageKind, std::size_t> by_kind_bytes_;
  std::map<MessageKind, std::size_t> by_kind_count_;
};

/// Lossless in-process transport. With zero latency messages are delivered
/// on send; otherwise on the first deliver() at or after t + latency.
class MessageBus {
 public:
  explicit MessageBus(CommLedger& ledger, double latency_s = 0.0) : ledger_(ledger), latency_(latency_s) {}

  void send(double t, const std::string& src, const std::string& dst, MessageKind kind, std::size_t bytes);
  void deliver(double now);

  std::size_t sent_bytes(const std::string& endpoint) const;
  std::size_t received_bytes(const std::string& endpoint) const;
  std::size_t in_flight() const { return pending_.size(); }

 private:
  struct Pending {
    double due;
    std::string dst;
    std::size_t bytes;
  };
  CommLedger& ledger_;
  double latency_;
  std::vector<Pending> pending_;
  std::map<std::string, std::size_t> sent_;
  std::map<std::string, std::size_t> received_;
};

std::string robot_endpoint(int robot);
inline const std::string kCloudEndpoint = "cloud";

/// Wire sizes of the real-time messages.
std::size_t prediction_message_bytes(int future);  // ids, tick, time, L_f x 2 float32
std::size_t control_message_bytes();               // robot id, time, 2 float32
std::size_t track_feedback_message_bytes();        // ids, time, 2 float32

/// Unweighted element-wise mean, accumulated in double.
WeightBlob fedavg(std::span<const WeightBlob> blobs);
WeightBlob fedavg_weighted(std::span<const WeightBlob> blobs, std::span<const double> weights);

struct FedPerParts {
  WeightBlob shared;
  WeightBlob personal;
};

/// Partitions tensors by name. A name selects an exact tensor or every tensor
/// under "<name>.". Unknown names raise StructuralError.
FedPerParts fedper_split(const WeightBlob& blob, const std::set<std::string>& personalized);
/// Inverse of fedper_split given the original manifest order.
WeightBlob fedper_combine(const FedPerParts& parts, const std::vector<TensorShape>& manifest);

/// Mean over every tensor except the personalized ones, which keep the values
/// from `previous_global`.
WeightBlob fedper_aggregate(std::span<const WeightBlob> blobs, const WeightBlob& previous_global,
                            const std::set<std::string>& personalized);

struct RobotClient {
  int id = 0;
  std::vector<SampleWindow> train_set;
  std::optional<WeightBlob> personal;  // FedPer tensors kept between rounds
  predictor::Rng rng{0};
};

struct RoundResult {
  WeightBlob global;
  std::vector<WeightBlob> local_models;  // per client, what the robot runs next
  std::vector<double> train_loss;        // last-epoch mean loss, NaN when skipped
  std::vector<bool> skipped;
  std::size_t bytes = 0;
};

/// One synchronous round: broadcast, local training on every client, upload,
/// aggregate. Messages are timestamped `t`.
RoundResult run_round(const RoundPlan& plan, const predictor::PredictorConfig& model, const WeightBlob& global,
                      std::span<RobotClient> clients, MessageBus& bus, double t);

/// Model robot `client` runs: the global weights with its personalized
/// tensors swapped in (FedPer), otherwise the global weights.
WeightBlob client_model(const StrategySpec& strategy, const WeightBlob& global, const RobotClient& client);

/// One JSON object per line: round, strategy, per-robot train loss, test
/// loss, blob_bytes, cumulative_bytes.
std::string round_log_line(int round, Strategy strategy, std::span<const double> train_loss, double test_loss,
                           std::size_t blob_bytes, std::size_t cumulative_bytes);

}  // namespace fedtrack::fl
