#include "mactas/config.hpp"

#include <fstream>
#include <set>

#include "mactas/errors.hpp"

namespace mactas {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("config: " + path + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("config: unknown key " + path + "." + it.key());
}

template <class T>
void read(const json& j, const char* key, const std::string& path, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned() && !(it->is_number_integer() && it->template get<long long>() >= 0))
        throw ConfigError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError("");
    }
    out = it->template get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config: " + path + "." + key + " has the wrong type");
  }
}

}  // namespace

std::string to_string(ExploreMode m) { return m == ExploreMode::topk ? "topk" : "egreedy"; }

ExploreMode parse_explore_mode(const std::string& s) {
  if (s == "egreedy") return ExploreMode::egreedy;
  if (s == "topk") return ExploreMode::topk;
  throw ConfigError("unknown exploration mode '" + s + "' (expected egreedy or topk)");
}

CommConfig RunConfig::comm_config() const {
  CommConfig c;
  c.num_layers = comm.layers;
  c.ffn_dim = comm.ffn_dim;
  c.model_dim = train.rnn_dim;
  c.heads = comm.heads;
  c.dropout = comm.dropout;
  return c;
}

ExplorationConfig RunConfig::exploration(double eps) const {
  ExplorationConfig e;
  e.epsilon = eps;
  if (explore.mode == ExploreMode::topk) {
    e.k = explore.k;
    e.temperature = explore.temperature;
  }
  return e;
}

void RunConfig::validate() const {
  if (env.name == "cue_passing") {
    if (env.n_agents < 1 || env.n_cues < 1) throw ConfigError("config: cue_passing needs n_agents, n_cues >= 1");
  } else if (env.name == "matrix_game") {
    if (env.payoff.empty() || env.payoff[0].empty()) throw ConfigError("config: matrix_game payoff is empty");
    for (const auto& row : env.payoff)
      if (row.size() != env.payoff[0].size()) throw ConfigError("config: matrix_game payoff is ragged");
  } else if (env.name != "two_step") {
    throw ConfigError("config: unknown environment '" + env.name + "'");
  }
  train.validate();
  if (comm.enabled) comm_config().validate();
  if (explore.mode == ExploreMode::topk) {
    ExplorationConfig e = exploration(0.0);
    e.validate();
  }
  if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("config: seeds must be distinct");
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, "", {"env", "mixer", "comm", "explore", "train", "seeds", "total_env_steps", "out_dir"});
  if (auto it = j.find("env"); it != j.end()) {
    reject_unknown(*it, "env", {"name", "n_agents", "n_cues", "payoff"});
    read(*it, "name", "env", c.env.name);
    read(*it, "n_agents", "env", c.env.n_agents);
    read(*it, "n_cues", "env", c.env.n_cues);
    if (auto p = it->find("payoff"); p != it->end()) {
      try {
        c.env.payoff = p->get<std::vector<std::vector<double>>>();
      } catch (const std::exception&) {
        throw ConfigError("config: env.payoff must be a matrix of numbers");
      }
    }
  }
  if (auto it = j.find("mixer"); it != j.end()) {
    std::string m;
    read(j, "mixer", "", m);
    c.mixer = parse_mixer_kind(m);
  }
  if (auto it = j.find("comm"); it != j.end()) {
    reject_unknown(*it, "comm", {"enabled", "residual", "layers", "ffn_dim", "heads", "dropout"});
    read(*it, "enabled", "comm", c.comm.enabled);
    read(*it, "residual", "comm", c.comm.residual);
    read(*it, "layers", "comm", c.comm.layers);
    read(*it, "ffn_dim", "comm", c.comm.ffn_dim);
    read(*it, "heads", "comm", c.comm.heads);
    read(*it, "dropout", "comm", c.comm.dropout);
  }
  if (auto it = j.find("explore"); it != j.end()) {
    reject_unknown(*it, "explore", {"mode", "k", "temperature"});
    std::string mode = to_string(c.explore.mode);
    read(*it, "mode", "explore", mode);
    c.explore.mode = parse_explore_mode(mode);
    read(*it, "k", "explore", c.explore.k);
    read(*it, "temperature", "explore", c.explore.temperature);
  }
  if (auto it = j.find("train"); it != j.end()) {
    reject_unknown(*it, "train",
                   {"gamma", "batch_size", "lr", "rms_decay", "rms_eps", "comm_lr", "adam_beta1", "adam_beta2",
                    "adam_eps", "eps_start", "eps_finish", "anneal_steps", "target_update_interval", "grad_clip",
                    "test_interval", "test_episodes", "buffer_capacity", "rnn_dim", "mlp_dim"});
    auto& t = c.train;
    read(*it, "gamma", "train", t.gamma);
    read(*it, "batch_size", "train", t.batch_size);
    read(*it, "lr", "train", t.lr);
    read(*it, "rms_decay", "train", t.rms_decay);
    read(*it, "rms_eps", "train", t.rms_eps);
    read(*it, "comm_lr", "train", t.comm_lr);
    read(*it, "adam_beta1", "train", t.adam_beta1);
    read(*it, "adam_beta2", "train", t.adam_beta2);
    read(*it, "adam_eps", "train", t.adam_eps);
    read(*it, "eps_start", "train", t.eps_start);
    read(*it, "eps_finish", "train", t.eps_finish);
    read(*it, "anneal_steps", "train", t.anneal_steps);
    read(*it, "target_update_interval", "train", t.target_update_interval);
    read(*it, "grad_clip", "train", t.grad_clip);
    read(*it, "test_interval", "train", t.test_interval);
    read(*it, "test_episodes", "train", t.test_episodes);
    read(*it, "buffer_capacity", "train", t.buffer_capacity);
    read(*it, "rnn_dim", "train", t.rnn_dim);
    read(*it, "mlp_dim", "train", t.mlp_dim);
  }
  if (auto it = j.find("seeds"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("config: seeds must be an array");
    c.seeds.clear();
    for (const auto& s : *it) {
      if (!s.is_number_unsigned()) throw ConfigError("config: seeds must be nonnegative integers");
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  read(j, "total_env_steps", "", c.total_env_steps);
  read(j, "out_dir", "", c.out_dir);
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  json env = {{"name", c.env.name}};
  if (c.env.name == "cue_passing") {
    env["n_agents"] = c.env.n_agents;
    env["n_cues"] = c.env.n_cues;
  } else if (c.env.name == "matrix_game") {
    env["payoff"] = c.env.payoff;
  }
  const auto& t = c.train;
  return {
      {"env", env},
      {"mixer", to_string(c.mixer)},
      {"comm",
       {{"enabled", c.comm.enabled},
        {"residual", c.comm.residual},
        {"layers", c.comm.layers},
        {"ffn_dim", c.comm.ffn_dim},
        {"heads", c.comm.heads},
        {"dropout", c.comm.dropout}}},
      {"explore", {{"mode", to_string(c.explore.mode)}, {"k", c.explore.k}, {"temperature", c.explore.temperature}}},
      {"train",
       {{"gamma", t.gamma},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"rms_decay", t.rms_decay},
        {"rms_eps", t.rms_eps},
        {"comm_lr", t.comm_lr},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"eps_start", t.eps_start},
        {"eps_finish", t.eps_finish},
        {"anneal_steps", t.anneal_steps},
        {"target_update_interval", t.target_update_interval},
        {"grad_clip", t.grad_clip},
        {"test_interval", t.test_interval},
        {"test_episodes", t.test_episodes},
        {"buffer_capacity", t.buffer_capacity},
        {"rnn_dim", t.rnn_dim},
        {"mlp_dim", t.mlp_dim}}},
      {"seeds", c.seeds},
      {"total_env_steps", c.total_env_steps},
      {"out_dir", c.out_dir},
  };
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::unique_ptr<Environment> make_env(const EnvConfig& config) {
  if (config.name == "cue_passing") return std::make_unique<CuePassing>(CuePassingSpec{config.n_agents, config.n_cues});
  if (config.name == "matrix_game") return std::make_unique<MatrixGame>(config.payoff);
  if (config.name == "two_step") return std::make_unique<TwoStepCoop>();
  throw ConfigError("unknown environment '" + config.name + "'");
}

}  // namespace mactas
