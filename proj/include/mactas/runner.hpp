#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mactas/config.hpp"
#include "mactas/ipu.hpp"

namespace mactas {

// Builds agent, communication block (when enabled) and mixer for `config`,
// all initialised from `seed`.
Networks make_networks(const RunConfig& config, const Environment& env, std::uint64_t seed,
                       bool comm_zero_init = true);

struct EpisodeOutcome {
  Episode episode;
  double episode_return = 0.0;
  bool success = false;
  std::vector<double> q_tot;  // mixer output for the taken joint action, per step
};

// Plays one episode with the networks in evaluation mode. Agent i at global step
// step_base + t samples from the exploration distribution with the stream keyed
// by (action_seed, i, step_base + t).
EpisodeOutcome run_episode(Environment& env, Networks& nets, std::uint64_t env_seed, const ExplorationConfig& explore,
                           std::uint64_t action_seed, std::uint64_t step_base,
                           const CommOverride* comm_override = nullptr);

struct TestSummary {
  double mean_return = 0.0;
  double success_rate = 0.0;
};

// Greedy episodes (epsilon = 0, temperature = 0) with env seeds derived from seed_base.
TestSummary run_test_episodes(Environment& env, Networks& nets, std::size_t count, std::uint64_t seed_base,
                              const CommOverride* comm_override = nullptr);

// One row of the metrics CSV. `loss` is the mean training loss since the
// previous test point, NaN when no update happened.
struct MetricRow {
  std::uint64_t seed = 0;
  std::uint64_t env_step = 0;
  double mean_test_return = 0.0;
  double success_rate = 0.0;
  double loss = 0.0;
  double epsilon = 0.0;
};

inline constexpr const char* kMetricsHeader = "seed,env_step,mean_test_return,success_rate,loss,epsilon";
std::string to_csv(const MetricRow& row);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

// Training loop for one seed: one episode, then one update once the buffer holds
// a batch; greedy tests at env step 0 and every test_interval steps.
class Trainer {
 public:
  Trainer(RunConfig config, std::uint64_t seed);

  // Continues until at least total_env_steps environment steps have been taken.
  void run(std::uint64_t total_env_steps);

  const RunConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t env_steps() const { return env_steps_; }
  std::uint64_t episodes() const { return episodes_; }
  const std::vector<MetricRow>& rows() const { return rows_; }
  Learner& learner() { return *learner_; }
  Environment& env() { return *env_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  // <stem>.bin / <stem>.json: online and target parameters, optimizer state,
  // replay contents, counters and metric rows.
  void save(const std::filesystem::path& stem);
  void load(const std::filesystem::path& stem);

 private:
  void test_point();

  RunConfig config_;
  std::uint64_t seed_;
  std::unique_ptr<Environment> env_;
  std::unique_ptr<Environment> test_env_;
  std::unique_ptr<Learner> learner_;
  ReplayBuffer buffer_;
  std::mt19937_64 sampler_;
  std::uint64_t env_steps_ = 0;
  std::uint64_t episodes_ = 0;
  std::uint64_t next_test_ = 0;
  std::uint64_t tests_ = 0;
  double loss_sum_ = 0.0;
  std::uint64_t loss_count_ = 0;
  std::vector<MetricRow> rows_;
};

// Trapezoid rule over (x, y) pairs; x must be nondecreasing.
double trapezoid_auc(std::span<const double> x, std::span<const double> y);

// Seed-mean curves keyed by env_step (only steps present for every seed).
struct MeanCurve {
  std::vector<double> env_step;
  std::vector<double> mean_return;
  std::vector<double> success_rate;
};
MeanCurve mean_curve(std::span<const MetricRow> rows);

// Output root: $MACTAS_OUT_ROOT/<out_dir> when the variable is set and out_dir is
// relative, out_dir otherwise.
std::filesystem::path resolve_out_dir(const std::string& out_dir);

// Trains every seed of `config`, writing into `out`:
//   config.json, metrics.csv, seed_<s>/checkpoint.{bin,json}
// With resume, seeds whose checkpoint exists continue from it.
std::vector<MetricRow> cmd_train(const RunConfig& config, const std::filesystem::path& out, bool resume,
                                 std::ostream& log);

struct SweepGrid {
  std::vector<std::size_t> layers;
  std::vector<std::size_t> ffn_dim;
  std::vector<double> dropout;
  std::vector<double> temperature;

  // Throws UsageError if every axis is empty.
  void validate() const;
  std::size_t cells() const;
};

struct SweepCell {
  std::string name;
  RunConfig config;
  double auc = 0.0;
  double final_return = 0.0;
  double final_success = 0.0;
};

// Cartesian product of the non-empty axes; empty axes keep the base value.
std::vector<SweepCell> expand_grid(const RunConfig& base, const SweepGrid& grid);
// Runs every cell as cmd_train under out/<cell> and writes out/summary.csv.
std::vector<SweepCell> cmd_sweep(const RunConfig& base, const SweepGrid& grid, const std::filesystem::path& out,
                                 std::ostream& log);

struct EvalResult {
  TestSummary summary;
  std::string mode;  // none | centralized | distributed
  TrafficStats traffic;
};

// Loads networks from a checkpoint stem and plays greedy episodes. Communication
// runs through the deployment simulator: centralized without a topology,
// distributed with one. Writes eval.json and traffic.csv into `out`.
EvalResult cmd_eval(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& checkpoint_stem,
                    const std::optional<Topology>& topology, std::size_t episodes, const std::filesystem::path& out);

}  // namespace mactas
