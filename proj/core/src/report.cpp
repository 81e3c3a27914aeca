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

#include <fstream>
#include <iomanip>
#include <ostream>

#include <json.hpp>

#include "fedtrack/error.hpp"
#include "fedtrack/experiment.hpp"

namespace fedtrack::harness {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

}  // namespace

std::string spec_to_json(const ExperimentSpec& s) {
  json j;
  j["mode"] = s.mode == Mode::kOfflineFL ? "offline" : "e2e";
  j["case"] = static_cast<int>(s.case_id);
  if (s.world) j["world"] = json::parse(sim::dump_world_config(*s.world));
  j["seeds"] = s.seeds;
  j["model"] = {{"d_model", s.model.d_model}, {"n_enc", s.model.n_enc},     {"n_dec", s.model.n_dec},
                {"d_ff", s.model.d_ff},       {"n_heads", s.model.n_heads}, {"dropout", s.model.dropout},
                {"past", s.model.past},       {"future", s.model.future}};
  j["camera"] = {{"pixel_noise_std", s.camera.pixel_noise_std}, {"miss_probability", s.camera.miss_probability}};
  std::vector<std::string> strategies;
  for (auto st : s.strategies) strategies.emplace_back(fl::to_string(st));
  j["strategies"] = strategies;
  j["rounds"] = s.rounds;
  j["collect_s"] = s.collect_s;
  j["follow_offset"] = s.follow_offset;
  j["follow_hold_s"] = s.follow_hold_s;
  j["split"] = s.split;
  j["local_epochs"] = s.local_epochs;
  j["batch_size"] = s.batch_size;
  j["lr"] = s.adam.lr;
  j["prox_mu"] = s.prox_mu;
  j["duration_s"] = s.duration_s;
  j["online_strategy"] = s.online_strategy ? std::string(fl::to_string(*s.online_strategy)) : "fixed";
  j["round_period_s"] = s.round_period_s;
  j["warmup_steps"] = s.warmup_steps;
  j["target_lost_s"] = s.target_lost_s;
  j["oracle_predictions"] = s.oracle_predictions;
  j["fuse_all_steps"] = s.fuse_all_steps;
  j["planner"] = {{"omega", s.planner.omega},         {"alpha", s.planner.alpha},     {"h", s.planner.h},
                  {"n_speed", s.planner.n_speed},     {"n_heading", s.planner.n_heading},
                  {"horizon", s.planner.horizon},     {"beta", s.planner.beta},       {"d0", s.planner.d0}};
  j["fusion"] = {{"ema", s.fusion.ema}, {"gate", s.fusion.gate}, {"r_init", s.fusion.r_init},
                 {"r_floor", s.fusion.r_floor}};
  j["pretrain"] = {{"seed", s.pretrain_seed}, {"pixel_noise_std", s.pretrain_pixel_noise},
                   {"rounds", s.pretrain_rounds}};
  return j.dump(2);
}

ExperimentSpec spec_from_json(const std::string& text, ExperimentSpec s) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  try {
    if (j.contains("mode")) {
      const auto m = j.at("mode").get<std::string>();
      if (m == "offline") {
        s.mode = Mode::kOfflineFL;
      } else if (m == "e2e") {
        s.mode = Mode::kEndToEnd;
      } else {
        throw ConfigError("unknown mode '" + m + "'");
      }
    }
    if (j.contains("case")) {
      const int c = j.at("case").get<int>();
      if (c < 1 || c > 3) throw ConfigError("case must be 1, 2 or 3");
      s.case_id = static_cast<sim::CaseId>(c);
    }
    if (j.contains("world")) s.world = sim::parse_world_config(j.at("world").dump());
    read(j, "seeds", s.seeds);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      read(m, "d_model", s.model.d_model);
      read(m, "n_enc", s.model.n_enc);
      read(m, "n_dec", s.model.n_dec);
      read(m, "d_ff", s.model.d_ff);
      read(m, "n_heads", s.model.n_heads);
      read(m, "dropout", s.model.dropout);
      read(m, "past", s.model.past);
      read(m, "future", s.model.future);
    }
    if (j.contains("camera")) {
      read(j.at("camera"), "pixel_noise_std", s.camera.pixel_noise_std);
      read(j.at("camera"), "miss_probability", s.camera.miss_probability);
    }
    if (j.contains("strategies")) {
      s.strategies.clear();
      for (const auto& name : j.at("strategies")) s.strategies.push_back(fl::parse_strategy(name.get<std::string>()));
    }
    read(j, "rounds", s.rounds);
    read(j, "collect_s", s.collect_s);
    read(j, "follow_offset", s.follow_offset);
    read(j, "follow_hold_s", s.follow_hold_s);
    read(j, "split", s.split);
    read(j, "local_epochs", s.local_epochs);
    read(j, "batch_size", s.batch_size);
    read(j, "lr", s.adam.lr);
    read(j, "prox_mu", s.prox_mu);
    read(j, "duration_s", s.duration_s);
    if (j.contains("online_strategy")) {
      const auto name = j.at("online_strategy").get<std::string>();
      if (name == "fixed") {
        s.online_strategy.reset();
      } else {
        s.online_strategy = fl::parse_strategy(name);
      }
    }
    read(j, "round_period_s", s.round_period_s);
    read(j, "warmup_steps", s.warmup_steps);
    read(j, "target_lost_s", s.target_lost_s);
    read(j, "oracle_predictions", s.oracle_predictions);
    read(j, "fuse_all_steps", s.fuse_all_steps);
    if (j.contains("planner")) {
      const auto& p = j.at("planner");
      read(p, "omega", s.planner.omega);
      read(p, "alpha", s.planner.alpha);
      read(p, "h", s.planner.h);
      read(p, "n_speed", s.planner.n_speed);
      read(p, "n_heading", s.planner.n_heading);
      read(p, "horizon", s.planner.horizon);
      read(p, "beta", s.planner.beta);
      read(p, "d0", s.planner.d0);
    }
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      read(f, "ema", s.fusion.ema);
      read(f, "gate", s.fusion.gate);
      read(f, "r_init", s.fusion.r_init);
      read(f, "r_floor", s.fusion.r_floor);
    }
    if (j.contains("pretrain")) {
      const auto& p = j.at("pretrain");
      read(p, "seed", s.pretrain_seed);
      read(p, "pixel_noise_std", s.pretrain_pixel_noise);
      read(p, "rounds", s.pretrain_rounds);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config has a malformed field: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

std::ofstream open(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

void write_manifest(const std::filesystem::path& dir, const ExperimentSpec& spec, std::uint64_t seed) {
  json m;
  m["seed"] = seed;
  m["spec"] = json::parse(spec_to_json(spec));
  m["world"] = json::parse(sim::dump_world_config(resolve_world(spec, seed)));
  open(dir / "manifest.json") << m.dump(2) << '\n';
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  auto os = open(path);
  for (const auto& l : lines) os << l << '\n';
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

void write_offline_metrics_csv(std::ostream& os, const OfflineResult& r) {
  const auto precision = os.precision();
  os << std::setprecision(12) << "strategy,round,test_mse\n";
  for (const auto& c : r.curves) {
    for (std::size_t k = 0; k < c.test_mse.size(); ++k) {
      os << fl::to_string(c.strategy) << ',' << k << ',' << c.test_mse[k] << '\n';
    }
  }
  os.precision(precision);
}

void write_offline_outputs(const std::filesystem::path& dir, const ExperimentSpec& spec, const OfflineResult& r) {
  ensure_dir(dir);
  {
    auto os = open(dir / "metrics.csv");
    write_offline_metrics_csv(os, r);
  }
  write_lines(dir / "rounds.jsonl", r.round_log);
  {
    auto os = open(dir / "ledger.csv");
    r.ledger.write_csv(os);
  }
  {
    auto os = open(dir / "tracks.csv");
    fusion::write_track_csv_header(os);
  }
  {
    auto os = open(dir / "planner.csv");
    planner::write_planner_csv_header(os);
  }
  write_manifest(dir, spec, r.seed);
}

void write_end_to_end_outputs(const std::filesystem::path& dir, const ExperimentSpec& spec,
                              const EndToEndResult& r) {
  ensure_dir(dir);
  {
    auto os = open(dir / "metrics.csv");
    write_metrics_csv(os, r.report);
  }
  write_lines(dir / "rounds.jsonl", r.round_log);
  {
    auto os = open(dir / "ledger.csv");
    r.ledger.write_csv(os);
  }
  open(dir / "tracks.csv") << r.tracks_csv;
  open(dir / "planner.csv") << r.planner_csv;
  write_manifest(dir, spec, r.seed);
}

}  // namespace fedtrack::harness
