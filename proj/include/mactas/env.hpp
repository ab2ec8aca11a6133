#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mactas/matrix.hpp"

namespace mactas {

struct StepResult {
  double reward = 0.0;
  bool terminal = false;
};

// Cooperative partially observable environment with a single team reward.
// This is also the integration point for external simulators: an adapter only
// needs to implement the protected hooks.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t n_agents() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t episode_limit() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  // Starts a new episode; all randomness of the episode derives from `seed`.
  void reset(std::uint64_t seed);
  // Throws UsageError after termination, DimensionError on a wrong action
  // count and ContractViolation on an unavailable action.
  StepResult step(std::span<const std::size_t> actions);

  // n x obs_dim, a deterministic function of the current state.
  virtual Matrix observations() const = 0;
  virtual std::vector<double> state() const = 0;
  virtual std::vector<std::uint8_t> available_actions(std::size_t agent) const;
  // Meaningful once the episode has ended.
  virtual bool success() const = 0;

  std::size_t t() const { return t_; }
  bool done() const { return done_; }
  double episode_return() const { return return_; }

 protected:
  virtual void on_reset(std::uint64_t seed) = 0;
  virtual StepResult on_step(std::span<const std::size_t> actions) = 0;

 private:
  std::size_t t_ = 0;
  bool done_ = true;
  double return_ = 0.0;
};

// One-step two-player cooperative matrix game with a constant dummy observation.
class MatrixGame final : public Environment {
 public:
  // Relative-overgeneralisation instance: optimum (0,0) = 11 is surrounded by -30 penalties.
  static std::vector<std::vector<double>> climbing_payoff();

  explicit MatrixGame(std::vector<std::vector<double>> payoff = climbing_payoff());

  std::string name() const override { return "matrix_game"; }
  std::size_t n_agents() const override { return 2; }
  std::size_t n_actions() const override { return std::max(payoff_.size(), payoff_[0].size()); }
  std::size_t obs_dim() const override { return 1; }
  std::size_t state_dim() const override { return 1; }
  std::size_t episode_limit() const override { return 1; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<MatrixGame>(*this); }

  Matrix observations() const override { return Matrix(2, 1, 1.0); }
  std::vector<double> state() const override { return {1.0}; }
  std::vector<std::uint8_t> available_actions(std::size_t agent) const override;
  bool success() const override { return last_reward_ == best_; }

  const std::vector<std::vector<double>>& payoff() const { return payoff_; }
  double best() const { return best_; }

 protected:
  void on_reset(std::uint64_t) override { last_reward_ = 0.0; }
  StepResult on_step(std::span<const std::size_t> actions) override;

 private:
  std::vector<std::vector<double>> payoff_;
  double best_ = 0.0;
  double last_reward_ = 0.0;
};

struct CuePassingSpec {
  std::size_t n_agents = 3;
  std::size_t n_cues = 3;
};

// Two steps. Each agent privately sees its own cue c_i (uniform over m symbols)
// together with a timestep one-hot; at the second step agent i must output
// c_{(i-1) mod n}. Reward 1 iff every agent is right. The global state holds all
// cues and is visible only to mixers.
class CuePassing final : public Environment {
 public:
  explicit CuePassing(CuePassingSpec spec);

  std::string name() const override { return "cue_passing"; }
  std::size_t n_agents() const override { return spec_.n_agents; }
  std::size_t n_actions() const override { return spec_.n_cues; }
  std::size_t obs_dim() const override { return spec_.n_cues + 2; }
  std::size_t state_dim() const override { return spec_.n_agents * spec_.n_cues + 2; }
  std::size_t episode_limit() const override { return 2; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<CuePassing>(*this); }

  Matrix observations() const override;
  std::vector<double> state() const override;
  bool success() const override { return last_reward_ == 1.0; }

  const CuePassingSpec& spec() const { return spec_; }
  const std::vector<std::size_t>& cues() const { return cues_; }
  void set_cues(std::vector<std::size_t> cues);

 protected:
  void on_reset(std::uint64_t seed) override;
  StepResult on_step(std::span<const std::size_t> actions) override;

 private:
  CuePassingSpec spec_;
  std::vector<std::size_t> cues_;
  double last_reward_ = 0.0;
};

// Two agents, two actions, two steps. Agent 0's first action picks the second
// stage: 0 -> every joint action pays 7; 1 -> payoff [[0, 1], [1, 8]]. Both
// agents observe the stage one-hot.
class TwoStepCoop final : public Environment {
 public:
  static constexpr double kStageA = 7.0;
  static constexpr double kStageB[2][2] = {{0.0, 1.0}, {1.0, 8.0}};

  std::string name() const override { return "two_step"; }
  std::size_t n_agents() const override { return 2; }
  std::size_t n_actions() const override { return 2; }
  std::size_t obs_dim() const override { return 3; }
  std::size_t state_dim() const override { return 3; }
  std::size_t episode_limit() const override { return 2; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<TwoStepCoop>(*this); }

  Matrix observations() const override;
  std::vector<double> state() const override;
  bool success() const override { return episode_return() == 8.0; }

  std::size_t stage() const { return stage_; }

 protected:
  void on_reset(std::uint64_t) override { stage_ = 0; }
  StepResult on_step(std::span<const std::size_t> actions) override;

 private:
  std::size_t stage_ = 0;  // 0 = first step, 1 = stage A, 2 = stage B
};

// ---------------------------------------------------------------------------
// Exact oracles for enumerable instances.

struct Outcome {
  double prob = 1.0;
  std::size_t next = 0;
  double reward = 0.0;
  bool terminal = false;
};

// Fully enumerated joint decision process; the joint policy may see the state.
struct TabularModel {
  std::size_t n_states = 0;
  std::vector<std::size_t> action_counts;  // per agent
  std::vector<double> initial;             // start distribution over states
  std::vector<std::vector<Outcome>> transitions;  // index s * joint_actions + a

  std::size_t joint_actions() const;
  std::vector<std::size_t> decode(std::size_t joint) const;
  std::size_t encode(std::span<const std::size_t> actions) const;
  const std::vector<Outcome>& at(std::size_t s, std::size_t a) const { return transitions[s * joint_actions() + a]; }
};

inline constexpr std::size_t kMaxTabularPairs = 10000;

struct ValueSolution {
  std::vector<double> values;        // V*(s)
  std::vector<std::size_t> policy;   // greedy joint action per state
  double start_value = 0.0;          // sum_s initial(s) V*(s)
};

// Bellman optimality sweeps to a fixed point. Throws CapacityError when
// states x joint actions exceeds kMaxTabularPairs.
ValueSolution value_iteration(const TabularModel& model, double gamma);
// Expected discounted return of a fixed state -> joint-action policy.
double evaluate_policy(const TabularModel& model, std::span<const std::size_t> policy, double gamma);
double discounted_return(std::span<const double> rewards, double gamma);

TabularModel tabular_model(const MatrixGame& game);
TabularModel tabular_model(const TwoStepCoop& game);
// Cue-revealing variant: the joint policy sees every cue.
TabularModel tabular_model(const CuePassingSpec& spec);

// Best expected return of policies that map each agent's own cue to its
// answer, found by enumerating every deterministic local policy profile.
double blind_optimum(const CuePassingSpec& spec);

struct NashProfile {
  std::size_t row = 0, col = 0;
  double value = 0.0;
};
// Joint actions of a two-player common-payoff game from which every unilateral
// deviation strictly loses.
std::vector<NashProfile> strict_nash_equilibria(const std::vector<std::vector<double>>& payoff);

}  // namespace mactas
