#include "mactas/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mactas/errors.hpp"
#include "mactas/exploration.hpp"

namespace mactas {

void Episode::validate() const {
  const std::size_t T = length;
  if (obs.size() != T + 1 || state.size() != T + 1 || avail.size() != T + 1 || actions.size() != T ||
      rewards.size() != T)
    throw ContractViolation("Episode: per-step arrays do not match length " + std::to_string(T));
  for (const auto& o : obs)
    if (o.rows() != n_agents) throw ContractViolation("Episode: observation rows != n_agents");
  for (const auto& a : avail)
    if (a.size() != n_agents * n_actions) throw ContractViolation("Episode: availability size mismatch");
  for (const auto& a : actions) {
    if (a.size() != n_agents) throw ContractViolation("Episode: action count mismatch");
    for (std::size_t x : a)
      if (x >= n_actions) throw ContractViolation("Episode: action out of range");
  }
}

double Episode::total_reward() const { return std::accumulate(rewards.begin(), rewards.end(), 0.0); }

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::add(Episode episode) {
  episode.validate();
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
}

std::vector<const Episode*> ReplayBuffer::sample(std::size_t count, std::mt19937_64& rng) const {
  if (count > episodes_.size())
    throw ContractViolation("ReplayBuffer::sample: requested " + std::to_string(count) + " of " +
                            std::to_string(episodes_.size()));
  std::vector<std::size_t> idx(episodes_.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates keeps the draw cost proportional to `count`.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<const Episode*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(&episodes_[idx[i]]);
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(lr >= 0.0) || !(comm_lr >= 0.0)) fail("learning rates must be nonnegative");
  if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_finish >= 0.0 && eps_finish <= 1.0))
    fail("epsilon bounds must lie in [0, 1]");
  if (eps_finish > eps_start) fail("eps_finish must not exceed eps_start");
  if (target_update_interval == 0) fail("target_update_interval must be positive");
  if (!(grad_clip > 0.0)) fail("grad_clip must be positive");
  if (test_interval == 0) fail("test_interval must be positive");
  if (buffer_capacity < batch_size) fail("buffer_capacity must be at least batch_size");
  if (rnn_dim == 0 || mlp_dim == 0) fail("network widths must be positive");
}

double epsilon(std::uint64_t env_step, const TrainConfig& config) {
  if (config.anneal_steps == 0 || env_step >= config.anneal_steps) return config.eps_finish;
  const double frac = static_cast<double>(env_step) / static_cast<double>(config.anneal_steps);
  return config.eps_start + frac * (config.eps_finish - config.eps_start);
}

std::vector<Parameter*> Networks::parameters() {
  std::vector<Parameter*> out = parameters_of(agent);
  if (comm) {
    auto c = parameters_of(*comm);
    out.insert(out.end(), c.begin(), c.end());
  }
  auto m = parameters_of(mixer);
  out.insert(out.end(), m.begin(), m.end());
  return out;
}

std::vector<Parameter*> Networks::parameters(ParamGroup group) {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters())
    if (p->group == group) out.push_back(p);
  return out;
}

void Networks::copy_from(Networks& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw ContractViolation("Networks::copy_from: parameter lists differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i]->value.same_shape(src[i]->value))
      throw DimensionError("Networks::copy_from: shape mismatch at " + dst[i]->name);
    dst[i]->value = src[i]->value;
  }
}

Batch Batch::from_episodes(std::span<const Episode* const> episodes) {
  if (episodes.empty()) throw ContractViolation("Batch: no episodes");
  Batch b;
  const Episode& first = *episodes.front();
  b.teams = episodes.size();
  b.n_agents = first.n_agents;
  b.n_actions = first.n_actions;
  const std::size_t obs_dim = first.obs.front().cols();
  const std::size_t state_dim = first.state.front().size();
  for (const Episode* e : episodes) {
    if (e->n_agents != b.n_agents || e->n_actions != b.n_actions || e->obs.front().cols() != obs_dim ||
        e->state.front().size() != state_dim)
      throw DimensionError("Batch: episodes come from different environments");
    if (e->length == 0) throw ContractViolation("Batch: empty episode");
    b.max_length = std::max(b.max_length, e->length);
  }
  for (const Episode* e : episodes)
    if (e->length == b.max_length && !e->terminated) b.needs_bootstrap_step = true;

  const std::size_t n = b.n_agents, A = b.n_actions, B = b.teams;
  const std::size_t input_dim = obs_dim + A + n;
  for (std::size_t t = 0; t <= b.max_length; ++t) {
    Matrix inputs(B * n, input_dim);
    Matrix states(B, state_dim);
    std::vector<std::uint8_t> avail(B * n * A, 1);
    for (std::size_t k = 0; k < B; ++k) {
      const Episode& e = *episodes[k];
      if (t > e.length) continue;  // padding: zeros, everything available
      static const std::vector<std::size_t> none;
      const auto& last = t == 0 ? none : e.actions[t - 1];
      const Matrix x = build_agent_inputs(e.obs[t], last, t == 0, n, A);
      std::copy_n(x.data(), x.size(), inputs.data() + k * n * input_dim);
      std::copy(e.state[t].begin(), e.state[t].end(), states.data() + k * state_dim);
      std::copy(e.avail[t].begin(), e.avail[t].end(), avail.begin() + k * n * A);
    }
    b.inputs.push_back(std::move(inputs));
    b.states.push_back(std::move(states));
    b.avail.push_back(std::move(avail));
  }
  for (std::size_t t = 0; t < b.max_length; ++t) {
    std::vector<std::size_t> actions(B * n, 0);
    std::vector<double> rewards(B, 0.0), valid(B, 0.0);
    std::vector<std::uint8_t> terminal(B, 1);
    for (std::size_t k = 0; k < B; ++k) {
      const Episode& e = *episodes[k];
      if (t >= e.length) continue;
      std::copy(e.actions[t].begin(), e.actions[t].end(), actions.begin() + k * n);
      rewards[k] = e.rewards[t];
      valid[k] = 1.0;
      terminal[k] = (t + 1 == e.length && e.terminated) ? 1 : 0;
    }
    b.actions.push_back(std::move(actions));
    b.rewards.push_back(std::move(rewards));
    b.valid.push_back(std::move(valid));
    b.terminal.push_back(std::move(terminal));
  }
  return b;
}

std::vector<Var> unroll(Tape& tape, Networks& nets, const Batch& batch, std::size_t steps, ForwardContext& ctx) {
  if (steps > batch.inputs.size()) throw ContractViolation("unroll: more steps than stored inputs");
  const std::size_t rows = batch.teams * batch.n_agents;
  Var h = tape.constant(Matrix(rows, nets.agent.config().rnn_dim));
  CommModule* comm = nets.comm ? &*nets.comm : nullptr;
  std::vector<Var> qs;
  qs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    TeamStep s = team_forward(tape, nets.agent, comm, nets.flags, tape.constant(batch.inputs[t]), h,
                              batch.n_agents, ctx);
    qs.push_back(s.q);
    h = s.hidden;
  }
  return qs;
}

Matrix double_q_targets(std::span<const double> rewards, std::span<const std::uint8_t> terminal, double gamma,
                        const Matrix& online_next_q, const Matrix& target_next_q,
                        std::span<const std::uint8_t> next_avail, std::size_t n_agents, Mixer& target_mixer,
                        const Matrix& next_state) {
  const std::size_t B = rewards.size();
  const std::size_t A = online_next_q.cols();
  if (terminal.size() != B || online_next_q.rows() != B * n_agents || !online_next_q.same_shape(target_next_q) ||
      next_avail.size() != B * n_agents * A || next_state.rows() != B)
    throw DimensionError("double_q_targets: inconsistent batch shapes");
  Matrix chosen(B, n_agents);
  for (std::size_t r = 0; r < B * n_agents; ++r) {
    const std::size_t a =
        greedy_action(std::span<const double>(online_next_q.data() + r * A, A), next_avail.subspan(r * A, A));
    chosen[r] = target_next_q(r, a);
  }
  Tape tape(false);
  const Matrix mixed = target_mixer.forward(tape, tape.constant(std::move(chosen)), tape.constant(next_state)).value();
  Matrix y(B, 1);
  for (std::size_t b = 0; b < B; ++b) y[b] = rewards[b] + (terminal[b] ? 0.0 : gamma * mixed[b]);
  return y;
}

namespace {

OptimizerConfig main_optimizer_config(const TrainConfig& c) {
  return OptimizerConfig::rmsprop(c.lr, c.rms_decay, c.rms_eps);
}

OptimizerConfig comm_optimizer_config(const TrainConfig& c) {
  return OptimizerConfig::adam(c.comm_lr, c.adam_beta1, c.adam_beta2, c.adam_eps);
}

}  // namespace

Learner::Learner(Networks online, TrainConfig config, std::uint64_t seed)
    : online_(std::move(online)),
      target_(online_),
      config_(config),
      seed_(seed),
      main_opt_(main_optimizer_config(config)),
      comm_opt_(comm_optimizer_config(config)) {
  config_.validate();
}

Learner::Targets Learner::compute_targets(const Batch& batch, const std::vector<Matrix>& online_q) {
  const std::size_t T = batch.max_length, B = batch.teams;
  const std::size_t steps = std::min(batch.unroll_steps(), online_q.size());
  Tape tape(false);
  ForwardContext ctx = ForwardContext::eval();
  std::vector<Var> target_q = unroll(tape, target_, batch, steps, ctx);

  Targets out{Matrix(T * B, 1), std::vector<double>(T * B, 0.0)};
  for (std::size_t t = 0; t < T; ++t) {
    Matrix y;
    if (t + 1 < steps) {
      y = double_q_targets(batch.rewards[t], batch.terminal[t], config_.gamma, online_q[t + 1],
                           target_q[t + 1].value(), batch.avail[t + 1], batch.n_agents, target_.mixer,
                           batch.states[t + 1]);
    } else {
      // No successor was unrolled: every valid transition here must be terminal.
      y = Matrix(B, 1);
      for (std::size_t b = 0; b < B; ++b) {
        if (batch.valid[t][b] > 0.0 && !batch.terminal[t][b])
          throw ContractViolation("compute_targets: missing bootstrap step");
        y[b] = batch.rewards[t][b];
      }
    }
    for (std::size_t b = 0; b < B; ++b) {
      out.y[t * B + b] = y[b];
      out.mask[t * B + b] = batch.valid[t][b];
    }
  }
  return out;
}

Var Learner::td_loss(Tape& tape, const Batch& batch, const std::vector<Var>& online_q, const Targets& targets) {
  const std::size_t T = batch.max_length, B = batch.teams, n = batch.n_agents;
  if (online_q.size() < T) throw ContractViolation("td_loss: unroll shorter than the batch");
  std::vector<Var> per_step;
  per_step.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    Var chosen = ad::reshape(ad::gather_cols(online_q[t], batch.actions[t]), B, n);
    per_step.push_back(online_.mixer.forward(tape, chosen, tape.constant(batch.states[t])));
  }
  Var q_tot = ad::concat_rows(per_step);
  return ad::masked_mse(q_tot, targets.y, targets.mask);
}

TrainMetrics Learner::train_on(std::span<const Episode* const> episodes) {
  const Batch batch = Batch::from_episodes(episodes);
  Tape tape(true);
  ForwardContext ctx = ForwardContext::training(seed_, train_steps_);
  const std::vector<Var> q = unroll(tape, online_, batch, batch.unroll_steps(), ctx);
  std::vector<Matrix> q_values;
  q_values.reserve(q.size());
  for (const Var& v : q) q_values.push_back(v.value());
  const Targets targets = compute_targets(batch, q_values);
  Var loss = td_loss(tape, batch, q, targets);

  auto all = online_.parameters();
  for (Parameter* p : all) p->zero_grad();
  tape.backward(loss);

  auto main_params = online_.parameters(ParamGroup::main);
  auto comm_params = online_.parameters(ParamGroup::comm);
  TrainMetrics m;
  m.loss = loss.value()[0];
  m.grad_norm_main = global_grad_norm(main_params);
  m.grad_norm_comm = comm_params.empty() ? 0.0 : global_grad_norm(comm_params);
  m.grad_norm = clip_global_norm(all, config_.grad_clip);
  main_opt_.step(main_params);
  if (!comm_params.empty()) comm_opt_.step(comm_params);

  ++train_steps_;
  if (train_steps_ % config_.target_update_interval == 0) {
    target_.copy_from(online_);
    m.target_updated = true;
  }
  return m;
}

std::optional<TrainMetrics> Learner::train_step(const ReplayBuffer& buffer, std::mt19937_64& rng) {
  if (buffer.size() < config_.batch_size) return std::nullopt;
  const auto episodes = buffer.sample(config_.batch_size, rng);
  return train_on(episodes);
}

}  // namespace mactas
