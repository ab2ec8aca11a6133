#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mactas/comm.hpp"

namespace mactas {

struct AgentNetConfig {
  std::size_t obs_dim = 0;
  std::size_t n_actions = 0;
  std::size_t n_agents = 0;
  std::size_t mlp_dim = 64;
  std::size_t rnn_dim = 64;

  // observation | last-action one-hot | agent-id one-hot
  std::size_t input_dim() const { return obs_dim + n_actions + n_agents; }
};

// Per-agent network f, shared by every agent: MLP -> GRU -> (communication) -> MLP.
class AgentNet {
 public:
  AgentNet() = default;
  AgentNet(const AgentNetConfig& config, std::uint64_t seed);

  const AgentNetConfig& config() const { return config_; }

  // h_t = GRU(relu(W x + b), h_{t-1})
  Var encode(Tape& tape, Var inputs, Var h_prev);
  // Per-action local Q values from the (possibly communicated) hidden state.
  Var q_head(Tape& tape, Var h_tilde);

  Dense& input_layer() { return input_; }
  GruCell& gru() { return gru_; }
  Dense& output_layer() { return output_; }

  template <class F>
  void visit(F&& f) {
    input_.visit(f);
    gru_.visit(f);
    output_.visit(f);
  }

 private:
  AgentNetConfig config_;
  Dense input_;
  GruCell gru_;
  Dense output_;
};

// Row layout used by every batched call: row b * n + i is agent i of team b.
Matrix build_agent_inputs(const Matrix& observations, std::span<const std::size_t> last_actions, bool first_step,
                          std::size_t n_agents, std::size_t n_actions);

struct TeamFlags {
  bool use_comm = true;
  bool use_residual = true;
};

// Replaces the in-graph communication block during evaluation, e.g. with a
// simulated deployment. Receives one team's n x n_h stack, returns increments.
using CommOverride = std::function<Matrix(const Matrix& h)>;

struct TeamStep {
  Var q;       // (B*n) x |A| local Q values
  Var hidden;  // (B*n) x n_h, pre-communication; carried to the next step
};

// Full f wiring for B teams of n agents at one timestep.
TeamStep team_forward(Tape& tape, AgentNet& agent, CommModule* comm, TeamFlags flags, Var inputs, Var h_prev,
                      std::size_t n_agents, ForwardContext& ctx, const CommOverride* override_comm = nullptr);

}  // namespace mactas
