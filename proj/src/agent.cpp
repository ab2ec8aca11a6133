#include "mactas/agent.hpp"

#include <string>

#include "mactas/errors.hpp"

namespace mactas {

AgentNet::AgentNet(const AgentNetConfig& config, std::uint64_t seed) : config_(config) {
  if (config.n_actions == 0 || config.n_agents == 0 || config.rnn_dim == 0 || config.mlp_dim == 0)
    throw ConfigError("AgentNet: empty dimension in configuration");
  InitRng rng(hash_keys({seed, 0xa6e17ULL}));
  input_ = Dense("agent.input", config.input_dim(), config.mlp_dim, ParamGroup::main, rng);
  gru_ = GruCell("agent.gru", config.mlp_dim, config.rnn_dim, ParamGroup::main, rng);
  output_ = Dense("agent.q", config.rnn_dim, config.n_actions, ParamGroup::main, rng);
}

Var AgentNet::encode(Tape& tape, Var inputs, Var h_prev) {
  if (inputs.cols() != config_.input_dim())
    throw DimensionError("AgentNet::encode: input width " + std::to_string(inputs.cols()) + " but expected " +
                         std::to_string(config_.input_dim()));
  return gru_.forward(tape, ad::relu(input_.forward(tape, inputs)), h_prev);
}

Var AgentNet::q_head(Tape& tape, Var h_tilde) {
  if (h_tilde.cols() != config_.rnn_dim)
    throw DimensionError("AgentNet::q_head: width " + std::to_string(h_tilde.cols()) + " but n_h = " +
                         std::to_string(config_.rnn_dim));
  return output_.forward(tape, h_tilde);
}

Matrix build_agent_inputs(const Matrix& observations, std::span<const std::size_t> last_actions, bool first_step,
                          std::size_t n_agents, std::size_t n_actions) {
  const std::size_t rows = observations.rows();
  if (n_agents == 0 || rows % n_agents != 0)
    throw DimensionError("build_agent_inputs: " + std::to_string(rows) + " rows for teams of " +
                         std::to_string(n_agents));
  if (!first_step && last_actions.size() != rows)
    throw DimensionError("build_agent_inputs: last-action count does not match rows");
  const std::size_t obs = observations.cols();
  Matrix x(rows, obs + n_actions + n_agents);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(observations.data() + r * obs, obs, x.data() + r * x.cols());
    if (!first_step) {
      if (last_actions[r] >= n_actions) throw DimensionError("build_agent_inputs: action index out of range");
      x(r, obs + last_actions[r]) = 1.0;
    }
    x(r, obs + n_actions + r % n_agents) = 1.0;
  }
  return x;
}

TeamStep team_forward(Tape& tape, AgentNet& agent, CommModule* comm, TeamFlags flags, Var inputs, Var h_prev,
                      std::size_t n_agents, ForwardContext& ctx, const CommOverride* override_comm) {
  if (inputs.rows() != h_prev.rows() || n_agents == 0 || inputs.rows() % n_agents != 0)
    throw DimensionError("team_forward: inconsistent team size");
  Var h = agent.encode(tape, inputs, h_prev);
  Var h_tilde = h;
  if (flags.use_comm) {
    if (!comm && !override_comm) throw ConfigError("team_forward: communication enabled without a comm module");
    Var z;
    if (override_comm) {
      const Matrix& hv = h.value();
      Matrix zv(hv.rows(), hv.cols());
      for (std::size_t b = 0; b < hv.rows() / n_agents; ++b) {
        std::vector<std::size_t> idx(n_agents);
        for (std::size_t i = 0; i < n_agents; ++i) idx[i] = b * n_agents + i;
        const Matrix zb = (*override_comm)(hv.rows_subset(idx));
        std::copy_n(zb.data(), zb.size(), zv.data() + b * n_agents * hv.cols());
      }
      z = tape.constant(std::move(zv));
    } else {
      z = comm->forward(tape, h, n_agents, ctx);
    }
    h_tilde = flags.use_residual ? ad::add(h, z) : z;
  }
  return {agent.q_head(tape, h_tilde), h};
}

}  // namespace mactas
