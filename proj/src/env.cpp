#include "mactas/env.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "mactas/errors.hpp"
#include "mactas/rng.hpp"

namespace mactas {

void Environment::reset(std::uint64_t seed) {
  t_ = 0;
  done_ = false;
  return_ = 0.0;
  on_reset(seed);
}

StepResult Environment::step(std::span<const std::size_t> actions) {
  if (done_) throw UsageError(name() + ": step() called on a finished episode");
  if (actions.size() != n_agents())
    throw DimensionError(name() + ": expected " + std::to_string(n_agents()) + " actions, got " +
                         std::to_string(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto avail = available_actions(i);
    if (actions[i] >= avail.size() || !avail[actions[i]])
      throw ContractViolation(name() + ": agent " + std::to_string(i) + " chose unavailable action " +
                              std::to_string(actions[i]));
  }
  StepResult r = on_step(actions);
  ++t_;
  return_ += r.reward;
  if (t_ >= episode_limit()) r.terminal = true;
  done_ = r.terminal;
  return r;
}

std::vector<std::uint8_t> Environment::available_actions(std::size_t) const {
  return std::vector<std::uint8_t>(n_actions(), 1);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> MatrixGame::climbing_payoff() {
  return {{11.0, -30.0, 0.0}, {-30.0, 7.0, 0.0}, {0.0, 6.0, 5.0}};
}

MatrixGame::MatrixGame(std::vector<std::vector<double>> payoff) : payoff_(std::move(payoff)) {
  if (payoff_.empty() || payoff_[0].empty()) throw ConfigError("MatrixGame: empty payoff table");
  for (const auto& row : payoff_)
    if (row.size() != payoff_[0].size()) throw ConfigError("MatrixGame: ragged payoff table");
  best_ = payoff_[0][0];
  for (const auto& row : payoff_)
    for (double v : row) best_ = std::max(best_, v);
}

std::vector<std::uint8_t> MatrixGame::available_actions(std::size_t agent) const {
  const std::size_t own = agent == 0 ? payoff_.size() : payoff_[0].size();
  std::vector<std::uint8_t> a(n_actions(), 0);
  for (std::size_t k = 0; k < own; ++k) a[k] = 1;
  return a;
}

StepResult MatrixGame::on_step(std::span<const std::size_t> actions) {
  last_reward_ = payoff_[actions[0]][actions[1]];
  return {last_reward_, true};
}

// ---------------------------------------------------------------------------

CuePassing::CuePassing(CuePassingSpec spec) : spec_(spec), cues_(spec.n_agents, 0) {
  if (spec.n_agents < 1 || spec.n_cues < 1) throw ConfigError("CuePassing: need at least one agent and one cue");
}

void CuePassing::on_reset(std::uint64_t seed) {
  std::mt19937_64 rng(hash_keys({seed, 0xc0e5ULL}));
  std::uniform_int_distribution<std::size_t> cue(0, spec_.n_cues - 1);
  for (auto& c : cues_) c = cue(rng);
  last_reward_ = 0.0;
}

void CuePassing::set_cues(std::vector<std::size_t> cues) {
  if (cues.size() != spec_.n_agents) throw DimensionError("CuePassing::set_cues: wrong number of cues");
  for (auto c : cues)
    if (c >= spec_.n_cues) throw DimensionError("CuePassing::set_cues: cue out of range");
  cues_ = std::move(cues);
}

Matrix CuePassing::observations() const {
  Matrix o(spec_.n_agents, obs_dim());
  for (std::size_t i = 0; i < spec_.n_agents; ++i) {
    o(i, cues_[i]) = 1.0;
    o(i, spec_.n_cues + std::min<std::size_t>(t(), 1)) = 1.0;
  }
  return o;
}

std::vector<double> CuePassing::state() const {
  std::vector<double> s(state_dim(), 0.0);
  for (std::size_t i = 0; i < spec_.n_agents; ++i) s[i * spec_.n_cues + cues_[i]] = 1.0;
  s[spec_.n_agents * spec_.n_cues + std::min<std::size_t>(t(), 1)] = 1.0;
  return s;
}

StepResult CuePassing::on_step(std::span<const std::size_t> actions) {
  if (t() == 0) return {0.0, false};
  const std::size_t n = spec_.n_agents;
  bool all = true;
  for (std::size_t i = 0; i < n; ++i) all = all && actions[i] == cues_[(i + n - 1) % n];
  last_reward_ = all ? 1.0 : 0.0;
  return {last_reward_, true};
}

// ---------------------------------------------------------------------------

Matrix TwoStepCoop::observations() const {
  Matrix o(2, 3);
  o(0, stage_) = 1.0;
  o(1, stage_) = 1.0;
  return o;
}

std::vector<double> TwoStepCoop::state() const {
  std::vector<double> s(3, 0.0);
  s[stage_] = 1.0;
  return s;
}

StepResult TwoStepCoop::on_step(std::span<const std::size_t> actions) {
  if (stage_ == 0) {
    stage_ = actions[0] == 0 ? 1 : 2;
    return {0.0, false};
  }
  const double r = stage_ == 1 ? kStageA : kStageB[actions[0]][actions[1]];
  return {r, true};
}

// ---------------------------------------------------------------------------

std::size_t TabularModel::joint_actions() const {
  std::size_t n = 1;
  for (auto c : action_counts) n *= c;
  return n;
}

std::vector<std::size_t> TabularModel::decode(std::size_t joint) const {
  std::vector<std::size_t> a(action_counts.size());
  for (std::size_t i = action_counts.size(); i-- > 0;) {
    a[i] = joint % action_counts[i];
    joint /= action_counts[i];
  }
  return a;
}

std::size_t TabularModel::encode(std::span<const std::size_t> actions) const {
  std::size_t j = 0;
  for (std::size_t i = 0; i < action_counts.size(); ++i) j = j * action_counts[i] + actions[i];
  return j;
}

namespace {

void check_capacity(const TabularModel& m) {
  const std::size_t pairs = m.n_states * m.joint_actions();
  if (pairs > kMaxTabularPairs)
    throw CapacityError("value_iteration: " + std::to_string(pairs) + " state-action pairs exceed the limit of " +
                        std::to_string(kMaxTabularPairs));
  if (m.transitions.size() != pairs) throw DimensionError("TabularModel: transition table has the wrong size");
  if (m.initial.size() != m.n_states) throw DimensionError("TabularModel: initial distribution has the wrong size");
}

double backup(const TabularModel& m, const std::vector<double>& v, std::size_t s, std::size_t a, double gamma) {
  double q = 0.0;
  for (const auto& o : m.at(s, a)) q += o.prob * (o.reward + (o.terminal ? 0.0 : gamma * v[o.next]));
  return q;
}

}  // namespace

ValueSolution value_iteration(const TabularModel& model, double gamma) {
  check_capacity(model);
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("value_iteration: gamma must lie in [0, 1]");
  const std::size_t A = model.joint_actions();
  ValueSolution sol;
  sol.values.assign(model.n_states, 0.0);
  sol.policy.assign(model.n_states, 0);
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < model.n_states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t a = 0; a < A; ++a) {
        if (model.at(s, a).empty()) continue;
        const double q = backup(model, sol.values, s, a, gamma);
        if (q > best) {
          best = q;
          arg = a;
        }
      }
      if (best == -std::numeric_limits<double>::infinity()) best = 0.0;
      delta = std::max(delta, std::abs(best - sol.values[s]));
      sol.values[s] = best;
      sol.policy[s] = arg;
    }
    if (delta < 1e-13) break;
  }
  for (std::size_t s = 0; s < model.n_states; ++s) sol.start_value += model.initial[s] * sol.values[s];
  return sol;
}

double evaluate_policy(const TabularModel& model, std::span<const std::size_t> policy, double gamma) {
  check_capacity(model);
  if (policy.size() != model.n_states) throw DimensionError("evaluate_policy: one action per state required");
  std::vector<double> v(model.n_states, 0.0);
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double delta = 0.0;
    for (std::size_t s = 0; s < model.n_states; ++s) {
      const double nv = model.at(s, policy[s]).empty() ? 0.0 : backup(model, v, s, policy[s], gamma);
      delta = std::max(delta, std::abs(nv - v[s]));
      v[s] = nv;
    }
    if (delta < 1e-13) break;
  }
  double total = 0.0;
  for (std::size_t s = 0; s < model.n_states; ++s) total += model.initial[s] * v[s];
  return total;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double g = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) g = rewards[i] + gamma * g;
  return g;
}

TabularModel tabular_model(const MatrixGame& game) {
  const auto& p = game.payoff();
  TabularModel m;
  m.n_states = 1;
  m.action_counts = {p.size(), p[0].size()};
  m.initial = {1.0};
  for (std::size_t a = 0; a < m.joint_actions(); ++a) {
    const auto ja = m.decode(a);
    m.transitions.push_back({Outcome{1.0, 0, p[ja[0]][ja[1]], true}});
  }
  return m;
}

TabularModel tabular_model(const TwoStepCoop&) {
  TabularModel m;
  m.n_states = 3;
  m.action_counts = {2, 2};
  m.initial = {1.0, 0.0, 0.0};
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 4; ++a) {
      const auto ja = m.decode(a);
      if (s == 0)
        m.transitions.push_back({Outcome{1.0, ja[0] == 0 ? 1u : 2u, 0.0, false}});
      else if (s == 1)
        m.transitions.push_back({Outcome{1.0, 0, TwoStepCoop::kStageA, true}});
      else
        m.transitions.push_back({Outcome{1.0, 0, TwoStepCoop::kStageB[ja[0]][ja[1]], true}});
    }
  return m;
}

TabularModel tabular_model(const CuePassingSpec& spec) {
  // State (cue profile k, step t) -> index t * profiles + k.
  std::size_t profiles = 1;
  for (std::size_t i = 0; i < spec.n_agents; ++i) {
    profiles *= spec.n_cues;
    if (profiles > kMaxTabularPairs) throw CapacityError("tabular_model: cue space too large");
  }
  TabularModel m;
  m.n_states = 2 * profiles;
  m.action_counts.assign(spec.n_agents, spec.n_cues);
  const std::size_t A = m.joint_actions();
  if (m.n_states > kMaxTabularPairs || A > kMaxTabularPairs || m.n_states * A > kMaxTabularPairs)
    throw CapacityError("tabular_model: " + std::to_string(m.n_states * A) + " state-action pairs exceed the limit");
  m.initial.assign(m.n_states, 0.0);
  for (std::size_t k = 0; k < profiles; ++k) m.initial[k] = 1.0 / static_cast<double>(profiles);
  m.transitions.resize(m.n_states * A);
  TabularModel cues_decoder;
  cues_decoder.action_counts.assign(spec.n_agents, spec.n_cues);
  for (std::size_t k = 0; k < profiles; ++k) {
    const auto cues = cues_decoder.decode(k);
    for (std::size_t a = 0; a < A; ++a) {
      m.transitions[k * A + a] = {Outcome{1.0, profiles + k, 0.0, false}};
      const auto acts = m.decode(a);
      bool all = true;
      for (std::size_t i = 0; i < spec.n_agents; ++i)
        all = all && acts[i] == cues[(i + spec.n_agents - 1) % spec.n_agents];
      m.transitions[(profiles + k) * A + a] = {Outcome{1.0, 0, all ? 1.0 : 0.0, true}};
    }
  }
  return m;
}

double blind_optimum(const CuePassingSpec& spec) {
  const std::size_t n = spec.n_agents, m = spec.n_cues;
  // A local policy maps own cue -> answer: m^m of them per agent.
  std::size_t per_agent = 1;
  for (std::size_t c = 0; c < m; ++c) per_agent *= m;
  double profiles_total = 1.0;
  for (std::size_t i = 0; i < n; ++i) profiles_total *= static_cast<double>(per_agent);
  if (profiles_total > 1e7) throw CapacityError("blind_optimum: too many local policy profiles to enumerate");

  std::size_t cue_profiles = 1;
  for (std::size_t i = 0; i < n; ++i) cue_profiles *= m;
  auto digits = [](std::size_t x, std::size_t base, std::size_t len) {
    std::vector<std::size_t> d(len);
    for (std::size_t i = 0; i < len; ++i) {
      d[i] = x % base;
      x /= base;
    }
    return d;
  };
  std::vector<std::vector<std::size_t>> tables(per_agent);
  for (std::size_t p = 0; p < per_agent; ++p) tables[p] = digits(p, m, m);
  std::vector<std::vector<std::size_t>> cue_list(cue_profiles);
  for (std::size_t k = 0; k < cue_profiles; ++k) cue_list[k] = digits(k, m, n);

  double best = 0.0;
  std::vector<std::size_t> choice(n, 0);
  const auto total = static_cast<std::size_t>(profiles_total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    choice = digits(idx, per_agent, n);
    std::size_t wins = 0;
    for (const auto& cues : cue_list) {
      bool all = true;
      for (std::size_t i = 0; i < n && all; ++i) all = tables[choice[i]][cues[i]] == cues[(i + n - 1) % n];
      wins += all ? 1 : 0;
    }
    best = std::max(best, static_cast<double>(wins) / static_cast<double>(cue_profiles));
  }
  return best;
}

std::vector<NashProfile> strict_nash_equilibria(const std::vector<std::vector<double>>& payoff) {
  std::vector<NashProfile> out;
  for (std::size_t r = 0; r < payoff.size(); ++r)
    for (std::size_t c = 0; c < payoff[r].size(); ++c) {
      const double v = payoff[r][c];
      bool strict = true;
      for (std::size_t r2 = 0; r2 < payoff.size() && strict; ++r2)
        if (r2 != r && payoff[r2][c] >= v) strict = false;
      for (std::size_t c2 = 0; c2 < payoff[r].size() && strict; ++c2)
        if (c2 != c && payoff[r][c2] >= v) strict = false;
      if (strict) out.push_back({r, c, v});
    }
  return out;
}

}  // namespace mactas
