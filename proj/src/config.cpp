// Copyright 2026 The flk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flk/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace flk {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) {
  throw ConfigError(message);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path + ": expected an object");
}

// Strict schema: every key must be in the allowed set.
void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) fail("unknown key: " + path + it.key());
  }
}

double get_double(const json& obj, const std::string& path, const char* key,
                  double def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number()) fail(path + key + ": expected a number");
  return v.get<double>();
}

uint64_t get_uint(const json& obj, const std::string& path, const char* key,
                  uint64_t def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number_integer() ||
      (!v.is_number_unsigned() && v.get<int64_t>() < 0)) {
    fail(path + key + ": expected a non-negative integer");
  }
  return v.get<uint64_t>();
}

bool get_bool(const json& obj, const std::string& path, const char* key,
              bool def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_boolean()) fail(path + key + ": expected a boolean");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& path,
                       const char* key, const std::string& def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_string()) fail(path + key + ": expected a string");
  return v.get<std::string>();
}

void check_range(double v, double lo, double hi, bool lo_open, bool hi_open,
                 const std::string& field) {
  const bool below = lo_open ? (v <= lo) : (v < lo);
  const bool above = hi_open ? (v >= hi) : (v > hi);
  if (below || above) {
    std::ostringstream os;
    os << field << " out of range " << (lo_open ? "(" : "[") << lo << ", "
       << hi << (hi_open ? ")" : "]") << ": got " << v;
    fail(os.str());
  }
}

// Scalar-or-array cost field, resolved to one entry per client.
std::vector<double> get_per_client(const json& obj, const std::string& path,
                                   const char* key, double def,
                                   uint32_t clients) {
  if (!obj.contains(key)) return std::vector<double>(clients, def);
  const json& v = obj.at(key);
  if (v.is_number()) return std::vector<double>(clients, v.get<double>());
  if (v.is_array()) {
    if (v.size() != clients) {
      fail(path + key + ": array length must equal clients (" +
           std::to_string(clients) + ")");
    }
    std::vector<double> out;
    out.reserve(clients);
    for (const json& e : v) {
      if (!e.is_number()) fail(path + key + ": expected numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  fail(path + key + ": expected a number or an array of numbers");
}

RunMode parse_mode(const std::string& s) {
  if (s == "simulate-serial") return RunMode::kSimulateSerial;
  if (s == "simulate-parallel") return RunMode::kSimulateParallel;
  if (s == "server") return RunMode::kServer;
  if (s == "client") return RunMode::kClient;
  fail("mode: unknown value '" + s + "'");
}

Aggregator parse_aggregator(const std::string& s) {
  if (s == "fedavg") return Aggregator::kFedAvg;
  if (s == "async") return Aggregator::kAsync;
  fail("aggregator: unknown value '" + s + "'");
}

PartitionScheme parse_scheme(const std::string& s) {
  if (s == "iid") return PartitionScheme::kIid;
  if (s == "dirichlet") return PartitionScheme::kDirichlet;
  if (s == "shards") return PartitionScheme::kShards;
  fail("partition.scheme: unknown value '" + s + "'");
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "logreg") return TaskKind::kLogreg;
  if (s == "mlp") return TaskKind::kMlp;
  fail("task.kind: unknown value '" + s + "'");
}

}  // namespace

size_t ExperimentConfig::quorum_size(size_t selected) const {
  if (timing.quorum < 0) return selected;
  return std::min<size_t>(selected, static_cast<size_t>(timing.quorum));
}

ExperimentConfig parse_config(const std::string& json_text) {
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) fail("config is not valid JSON");
  require_object(root, "config");
  check_keys(root, "",
             {"mode", "seed", "rounds", "clients", "client_fraction",
              "local_epochs", "batch_size", "learning_rate", "prox_mu",
              "aggregator", "async_alpha", "staleness_exponent",
              "async_budget", "dp", "secagg", "partition", "task", "comm",
              "timing", "cost", "hooks"});

  ExperimentConfig c;
  c.mode = parse_mode(get_string(root, "", "mode", "simulate-serial"));
  c.seed = get_uint(root, "", "seed", 0);
  // The type wants a positive round count, but an empty experiment (R=0)
  // is explicitly allowed to run as a no-op.
  c.rounds = static_cast<uint32_t>(get_uint(root, "", "rounds", 1));
  c.clients = static_cast<uint32_t>(get_uint(root, "", "clients", 1));
  if (c.clients < 1) fail("clients out of range [1, ...): got 0");

  c.client_fraction = get_double(root, "", "client_fraction", 1.0);
  check_range(c.client_fraction, 0.0, 1.0, true, false, "client_fraction");

  c.local_epochs = static_cast<uint32_t>(get_uint(root, "", "local_epochs", 1));
  c.batch_size = static_cast<uint32_t>(get_uint(root, "", "batch_size", 32));
  if (c.batch_size < 1) fail("batch_size out of range [1, ...): got 0");
  c.learning_rate = get_double(root, "", "learning_rate", 0.1);
  if (c.learning_rate <= 0) fail("learning_rate out of range (0, ...)");
  c.prox_mu = get_double(root, "", "prox_mu", 0.0);
  if (c.prox_mu < 0) fail("prox_mu out of range [0, ...)");

  c.aggregator = parse_aggregator(get_string(root, "", "aggregator", "fedavg"));
  c.async_alpha = get_double(root, "", "async_alpha", 0.5);
  check_range(c.async_alpha, 0.0, 1.0, true, false, "async_alpha");
  c.staleness_exponent = get_double(root, "", "staleness_exponent", 0.5);
  if (c.staleness_exponent < 0) fail("staleness_exponent out of range [0, ...)");
  c.async_budget = static_cast<uint32_t>(get_uint(root, "", "async_budget", 10));
  if (c.async_budget < 1) fail("async_budget out of range [1, ...): got 0");

  if (root.contains("dp")) {
    const json& o = root.at("dp");
    require_object(o, "dp");
    check_keys(o, "dp.", {"enabled", "clip", "epsilon", "delta"});
    c.dp.enabled = get_bool(o, "dp.", "enabled", false);
    c.dp.clip = get_double(o, "dp.", "clip", 1.0);
    if (c.dp.clip <= 0) fail("dp.clip out of range (0, ...)");
    c.dp.epsilon = get_double(o, "dp.", "epsilon", 1.0);
    if (c.dp.epsilon <= 0) fail("dp.epsilon out of range (0, ...)");
    c.dp.delta = get_double(o, "dp.", "delta", 1e-5);
    check_range(c.dp.delta, 0.0, 1.0, true, true, "dp.delta");
  }

  if (root.contains("secagg")) {
    const json& o = root.at("secagg");
    require_object(o, "secagg");
    check_keys(o, "secagg.", {"enabled", "fixed_point_scale"});
    c.secagg.enabled = get_bool(o, "secagg.", "enabled", false);
    c.secagg.fixed_point_scale =
        get_uint(o, "secagg.", "fixed_point_scale", uint64_t{1} << 20);
    if (c.secagg.fixed_point_scale < 1 ||
        c.secagg.fixed_point_scale > (uint64_t{1} << 40)) {
      // Upper bound keeps sum(round(n_k * w * s)) far from the i64 edge.
      fail("secagg.fixed_point_scale out of range [1, 2^40]");
    }
  }

  if (root.contains("partition")) {
    const json& o = root.at("partition");
    require_object(o, "partition");
    check_keys(o, "partition.",
               {"scheme", "dirichlet_alpha", "shards_per_client"});
    c.partition.scheme =
        parse_scheme(get_string(o, "partition.", "scheme", "iid"));
    c.partition.dirichlet_alpha =
        get_double(o, "partition.", "dirichlet_alpha", 0.5);
    if (c.partition.dirichlet_alpha <= 0) {
      fail("partition.dirichlet_alpha out of range (0, ...)");
    }
    c.partition.shards_per_client =
        get_uint(o, "partition.", "shards_per_client", 2);
    if (c.partition.shards_per_client < 1) {
      fail("partition.shards_per_client out of range [1, ...): got 0");
    }
  }

  if (root.contains("task")) {
    const json& o = root.at("task");
    require_object(o, "task");
    check_keys(o, "task.",
               {"kind", "n_per_class", "n_classes", "feature_dim",
                "class_sep", "hidden_units"});
    c.task.kind = parse_task_kind(get_string(o, "task.", "kind", "logreg"));
    c.task.n_per_class = get_uint(o, "task.", "n_per_class", 100);
    if (c.task.n_per_class < 1) fail("task.n_per_class out of range [1, ...)");
    c.task.n_classes = get_uint(o, "task.", "n_classes", 2);
    if (c.task.n_classes < 1) fail("task.n_classes out of range [1, ...)");
    c.task.feature_dim = get_uint(o, "task.", "feature_dim", 10);
    if (c.task.feature_dim < 1) fail("task.feature_dim out of range [1, ...)");
    c.task.class_sep = get_double(o, "task.", "class_sep", 4.0);
    if (c.task.class_sep < 0) fail("task.class_sep out of range [0, ...)");
    c.task.hidden_units = get_uint(o, "task.", "hidden_units", 16);
    if (c.task.hidden_units < 1) fail("task.hidden_units out of range [1, ...)");
  }

  if (root.contains("comm")) {
    const json& o = root.at("comm");
    require_object(o, "comm");
    check_keys(o, "comm.", {"host", "port", "auth_token", "serialize_inproc"});
    c.comm.host = get_string(o, "comm.", "host", "127.0.0.1");
    const uint64_t port = get_uint(o, "comm.", "port", 7070);
    if (port < 1 || port > 65535) fail("comm.port out of range [1, 65535]");
    c.comm.port = static_cast<uint16_t>(port);
    c.comm.auth_token = get_string(o, "comm.", "auth_token", "");
    c.comm.serialize_inproc =
        get_bool(o, "comm.", "serialize_inproc", false);
  }

  if (root.contains("timing")) {
    const json& o = root.at("timing");
    require_object(o, "timing");
    check_keys(o, "timing.", {"round_timeout_sec", "quorum", "ema_beta"});
    c.timing.round_timeout_sec =
        get_double(o, "timing.", "round_timeout_sec", 0.0);
    if (c.timing.round_timeout_sec < 0) {
      fail("timing.round_timeout_sec out of range [0, ...)");
    }
    if (o.contains("quorum")) {
      const json& q = o.at("quorum");
      if (q.is_string()) {
        if (q.get<std::string>() != "all") {
          fail("timing.quorum: expected an integer or \"all\"");
        }
        c.timing.quorum = -1;
      } else if (q.is_number_integer()) {
        const int64_t qi = q.get<int64_t>();
        if (qi < 1) fail("timing.quorum out of range [1, ...)");
        c.timing.quorum = qi;
      } else {
        fail("timing.quorum: expected an integer or \"all\"");
      }
    }
    c.timing.ema_beta = get_double(o, "timing.", "ema_beta", 0.5);
    check_range(c.timing.ema_beta, 0.0, 1.0, true, false, "timing.ema_beta");
  }

  if (root.contains("cost") && !root.at("cost").is_null()) {
    const json& o = root.at("cost");
    require_object(o, "cost");
    check_keys(o, "cost.",
               {"price_per_sec", "base_round_sec", "per_sample_sec",
                "spin_up_time_sec", "shutdown_threshold_sec"});
    CostConfig cost;
    cost.price_per_sec =
        get_per_client(o, "cost.", "price_per_sec", 1.0, c.clients);
    cost.base_round_sec =
        get_per_client(o, "cost.", "base_round_sec", 1.0, c.clients);
    for (double v : cost.price_per_sec) {
      if (v < 0) fail("cost.price_per_sec out of range [0, ...)");
    }
    for (double v : cost.base_round_sec) {
      if (v < 0) fail("cost.base_round_sec out of range [0, ...)");
    }
    cost.per_sample_sec = get_double(o, "cost.", "per_sample_sec", 0.0);
    if (cost.per_sample_sec < 0) fail("cost.per_sample_sec out of range [0, ...)");
    cost.spin_up_time_sec = get_double(o, "cost.", "spin_up_time_sec", 0.0);
    if (cost.spin_up_time_sec < 0) {
      fail("cost.spin_up_time_sec out of range [0, ...)");
    }
    cost.shutdown_threshold_sec =
        get_double(o, "cost.", "shutdown_threshold_sec", 0.0);
    if (cost.shutdown_threshold_sec < 0) {
      fail("cost.shutdown_threshold_sec out of range [0, ...)");
    }
    c.cost = std::move(cost);
  }

  if (root.contains("hooks")) {
    const json& o = root.at("hooks");
    require_object(o, "hooks");
    check_keys(o, "hooks.", {"eval_local", "cost_shutdown", "strict"});
    c.hooks.eval_local = get_bool(o, "hooks.", "eval_local", true);
    c.hooks.cost_shutdown = get_bool(o, "hooks.", "cost_shutdown", true);
    c.hooks.strict = get_bool(o, "hooks.", "strict", false);
  }

  if (c.secagg.enabled && c.aggregator == Aggregator::kAsync) {
    fail("secagg.enabled requires aggregator \"fedavg\": pairwise masks "
         "cannot cancel across one-at-a-time applications");
  }

  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string canonical_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["rounds"] = c.rounds;
  j["clients"] = c.clients;
  j["client_fraction"] = c.client_fraction;
  j["local_epochs"] = c.local_epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["prox_mu"] = c.prox_mu;
  j["aggregator"] = to_string(c.aggregator);
  j["async_alpha"] = c.async_alpha;
  j["staleness_exponent"] = c.staleness_exponent;
  j["async_budget"] = c.async_budget;
  j["dp"] = {{"enabled", c.dp.enabled},
             {"clip", c.dp.clip},
             {"epsilon", c.dp.epsilon},
             {"delta", c.dp.delta}};
  j["secagg"] = {{"enabled", c.secagg.enabled},
                 {"fixed_point_scale", c.secagg.fixed_point_scale}};
  j["partition"] = {{"scheme", to_string(c.partition.scheme)},
                    {"dirichlet_alpha", c.partition.dirichlet_alpha},
                    {"shards_per_client", c.partition.shards_per_client}};
  j["task"] = {{"kind", to_string(c.task.kind)},
               {"n_per_class", c.task.n_per_class},
               {"n_classes", c.task.n_classes},
               {"feature_dim", c.task.feature_dim},
               {"class_sep", c.task.class_sep},
               {"hidden_units", c.task.hidden_units}};
  j["comm"] = {{"host", c.comm.host},
               {"port", c.comm.port},
               {"auth_token", c.comm.auth_token},
               {"serialize_inproc", c.comm.serialize_inproc}};
  json quorum;
  if (c.timing.quorum < 0) {
    quorum = "all";
  } else {
    quorum = c.timing.quorum;
  }
  j["timing"] = {{"round_timeout_sec", c.timing.round_timeout_sec},
                 {"quorum", quorum},
                 {"ema_beta", c.timing.ema_beta}};
  if (c.cost.has_value()) {
    j["cost"] = {{"price_per_sec", c.cost->price_per_sec},
                 {"base_round_sec", c.cost->base_round_sec},
                 {"per_sample_sec", c.cost->per_sample_sec},
                 {"spin_up_time_sec", c.cost->spin_up_time_sec},
                 {"shutdown_threshold_sec", c.cost->shutdown_threshold_sec}};
  }
  j["hooks"] = {{"eval_local", c.hooks.eval_local},
                {"cost_shutdown", c.hooks.cost_shutdown},
                {"strict", c.hooks.strict}};
  // nlohmann::json stores object keys in std::map order (lexicographic by
  // code point) and dump() emits shortest round-trip numbers, no whitespace.
  return j.dump();
}

Sha256Digest config_digest(const ExperimentConfig& c) {
  return sha256(canonical_json(c));
}

const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::kSimulateSerial: return "simulate-serial";
    case RunMode::kSimulateParallel: return "simulate-parallel";
    case RunMode::kServer: return "server";
    case RunMode::kClient: return "client";
  }
  return "?";
}

const char* to_string(Aggregator a) {
  switch (a) {
    case Aggregator::kFedAvg: return "fedavg";
    case Aggregator::kAsync: return "async";
  }
  return "?";
}

const char* to_string(PartitionScheme s) {
  switch (s) {
    case PartitionScheme::kIid: return "iid";
    case PartitionScheme::kDirichlet: return "dirichlet";
    case PartitionScheme::kShards: return "shards";
  }
  return "?";
}

const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kLogreg: return "logreg";
    case TaskKind::kMlp: return "mlp";
  }
  return "?";
}

}  // namespace flk
