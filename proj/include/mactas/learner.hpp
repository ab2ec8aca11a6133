#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mactas/agent.hpp"
#include "mactas/mixer.hpp"
#include "mactas/optim.hpp"

namespace mactas {

// One complete episode. Observation, state and availability arrays hold
// length + 1 entries (the last one is the post-terminal observation); actions
// and rewards hold `length` entries.
struct Episode {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  std::size_t length = 0;
  std::vector<Matrix> obs;                          // n x obs_dim each
  std::vector<std::vector<double>> state;           // state_dim each
  std::vector<std::vector<std::uint8_t>> avail;     // n * n_actions each
  std::vector<std::vector<std::size_t>> actions;    // n each
  std::vector<double> rewards;
  bool terminated = false;  // ended by the environment rather than the step limit

  // Throws ContractViolation if the per-step arrays disagree in length.
  void validate() const;
  double total_reward() const;
};

// FIFO replay over whole episodes.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  void add(Episode episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Episode& at(std::size_t i) const { return episodes_.at(i); }
  // Distinct episodes drawn uniformly.
  std::vector<const Episode*> sample(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Episode> episodes_;
};

struct TrainConfig {
  double gamma = 0.99;
  std::size_t batch_size = 32;
  double lr = 5e-4;        // RMSProp, main group
  double rms_decay = 0.99;
  double rms_eps = 1e-5;
  double comm_lr = 5e-4;   // Adam, communication group
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double eps_start = 1.0;
  double eps_finish = 0.05;
  std::uint64_t anneal_steps = 50000;
  std::uint64_t target_update_interval = 200;  // training steps
  double grad_clip = 10.0;
  std::uint64_t test_interval = 2000;          // environment steps
  std::size_t test_episodes = 32;
  std::size_t buffer_capacity = 5000;
  std::size_t rnn_dim = 64;
  std::size_t mlp_dim = 64;

  void validate() const;
};

// Linear from eps_start to eps_finish over anneal_steps, constant afterwards.
double epsilon(std::uint64_t env_step, const TrainConfig& config);

// Agent network, optional communication block and mixer trained together.
struct Networks {
  AgentNet agent;
  std::optional<CommModule> comm;
  Mixer mixer;
  TeamFlags flags;

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> parameters(ParamGroup group);
  // Hard copy of every parameter value.
  void copy_from(Networks& other);
};

// Dense per-timestep tensors for a padded batch of episodes.
struct Batch {
  std::size_t teams = 0, n_agents = 0, n_actions = 0, max_length = 0;
  std::vector<Matrix> inputs;                     // per t <= max_length: (B*n) x input_dim
  std::vector<Matrix> states;                     // per t <= max_length: B x state_dim
  std::vector<std::vector<std::uint8_t>> avail;   // per t <= max_length: (B*n) * A
  std::vector<std::vector<std::size_t>> actions;  // per t < max_length: B*n
  std::vector<std::vector<double>> rewards;       // per t < max_length: B
  std::vector<std::vector<std::uint8_t>> terminal;  // per t < max_length: B
  std::vector<std::vector<double>> valid;         // per t < max_length: B (1 = real transition)
  bool needs_bootstrap_step = false;              // some full-length episode was truncated

  static Batch from_episodes(std::span<const Episode* const> episodes);
  std::size_t unroll_steps() const { return max_length + (needs_bootstrap_step ? 1 : 0); }
};

// Per-step local Q values ((B*n) x A) of an unroll from zero hidden states.
std::vector<Var> unroll(Tape& tape, Networks& nets, const Batch& batch, std::size_t steps, ForwardContext& ctx);

// Double Q-learning targets for B teams at one timestep:
//   a'_i = argmax over available actions of online_next_q(row i)
//   y    = r + gamma * (1 - terminal) * mix_target(target_next_q(i, a'_i), next_state)
// Rows of the Q matrices are b * n + i. Returns B x 1.
Matrix double_q_targets(std::span<const double> rewards, std::span<const std::uint8_t> terminal, double gamma,
                        const Matrix& online_next_q, const Matrix& target_next_q,
                        std::span<const std::uint8_t> next_avail, std::size_t n_agents, Mixer& target_mixer,
                        const Matrix& next_state);

struct TrainMetrics {
  double loss = 0.0;
  double grad_norm = 0.0;
  double grad_norm_main = 0.0;
  double grad_norm_comm = 0.0;
  bool target_updated = false;
};

class Learner {
 public:
  Learner(Networks online, TrainConfig config, std::uint64_t seed);

  Networks& online() { return online_; }
  Networks& target() { return target_; }
  const TrainConfig& config() const { return config_; }
  std::uint64_t train_steps() const { return train_steps_; }
  Optimizer& main_optimizer() { return main_opt_; }
  Optimizer& comm_optimizer() { return comm_opt_; }
  void set_train_steps(std::uint64_t s) { train_steps_ = s; }

  // Targets per (t, b), laid out t-major as (max_length * B) x 1, plus the
  // matching validity mask. Targets are plain values (no graph).
  struct Targets {
    Matrix y;
    std::vector<double> mask;
  };
  Targets compute_targets(const Batch& batch, const std::vector<Matrix>& online_q);
  // Mean squared TD error over valid steps, recorded on `tape`.
  Var td_loss(Tape& tape, const Batch& batch, const std::vector<Var>& online_q, const Targets& targets);

  // Samples a batch and takes one update. Returns nullopt while the buffer holds
  // fewer than batch_size episodes.
  std::optional<TrainMetrics> train_step(const ReplayBuffer& buffer, std::mt19937_64& rng);
  TrainMetrics train_on(std::span<const Episode* const> episodes);

 private:
  Networks online_;
  Networks target_;
  TrainConfig config_;
  std::uint64_t seed_;
  std::uint64_t train_steps_ = 0;
  Optimizer main_opt_;
  Optimizer comm_opt_;
};

}  // namespace mactas
