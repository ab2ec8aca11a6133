#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mactas/comm.hpp"
#include "mactas/env.hpp"
#include "mactas/exploration.hpp"
#include "mactas/learner.hpp"
#include "mactas/mixer.hpp"

namespace mactas {

struct EnvConfig {
  std::string name = "cue_passing";  // cue_passing | matrix_game | two_step
  std::size_t n_agents = 3;          // cue_passing only
  std::size_t n_cues = 3;            // cue_passing only
  std::vector<std::vector<double>> payoff = MatrixGame::climbing_payoff();  // matrix_game only
};

struct CommSettings {
  bool enabled = true;
  bool residual = true;
  std::size_t layers = 1;
  std::size_t ffn_dim = 128;
  std::size_t heads = 4;
  double dropout = 0.10;
};

enum class ExploreMode { egreedy, topk };

struct ExploreSettings {
  ExploreMode mode = ExploreMode::egreedy;
  std::size_t k = 2;
  double temperature = 0.33;
};

struct RunConfig {
  EnvConfig env;
  MixerKind mixer = MixerKind::vdn;
  CommSettings comm;
  ExploreSettings explore;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t total_env_steps = 50000;
  std::string out_dir = "runs/default";

  // Throws ConfigError on any inconsistent value.
  void validate() const;
  // Model width of the communication block is the GRU width.
  CommConfig comm_config() const;
  ExplorationConfig exploration(double eps) const;
};

// Every key is optional; unknown keys and wrongly typed values are rejected with
// ConfigError naming the offending path.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

std::string to_string(ExploreMode m);
ExploreMode parse_explore_mode(const std::string& s);

std::unique_ptr<Environment> make_env(const EnvConfig& config);

}  // namespace mactas
