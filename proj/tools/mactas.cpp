// Command-line front end: train | sweep | check | eval.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mactas/checks.hpp"
#include "mactas/config.hpp"
#include "mactas/errors.hpp"
#include "mactas/runner.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out;
  bool no_residual = false;
  std::string explore;
  std::optional<double> temperature;
  std::optional<std::size_t> k;
  std::string comm;
  std::string mixer;
  std::optional<std::uint64_t> steps;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seeds, "Seed(s); replaces the configured list");
  app->add_option("--out", o.out, "Output directory; replaces out_dir");
  app->add_flag("--no-residual", o.no_residual, "Feed increments to the Q head without the residual connection");
  app->add_option("--explore", o.explore, "Exploration mode")->check(CLI::IsMember({"egreedy", "topk"}));
  app->add_option("--temperature", o.temperature, "Boltzmann temperature for topk");
  app->add_option("--k", o.k, "Number of candidate actions for topk");
  app->add_option("--comm", o.comm, "Communication block")->check(CLI::IsMember({"none", "mactas"}));
  app->add_option("--mixer", o.mixer, "Value mixer")->check(CLI::IsMember({"vdn", "qmix"}));
  app->add_option("--steps", o.steps, "Total environment steps per seed");
}

mactas::RunConfig resolve(const Overrides& o) {
  mactas::RunConfig c = o.config_path.empty() ? mactas::RunConfig{} : mactas::load_run_config(o.config_path);
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.no_residual) c.comm.residual = false;
  if (!o.explore.empty()) c.explore.mode = mactas::parse_explore_mode(o.explore);
  if (o.temperature) c.explore.temperature = *o.temperature;
  if (o.k) c.explore.k = *o.k;
  if (!o.comm.empty()) c.comm.enabled = o.comm == "mactas";
  if (!o.mixer.empty()) c.mixer = mactas::parse_mixer_kind(o.mixer);
  if (o.steps) c.total_env_steps = *o.steps;
  c.validate();
  return c;
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(static_cast<T>(std::stod(item)));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer-based inter-agent communication on value-decomposition learners"};
  app.require_subcommand(1);

  Overrides train_o, sweep_o, eval_o;
  bool resume = false;
  auto* train = app.add_subcommand("train", "Train every configured seed and write metrics.csv");
  add_common(train, train_o);
  train->add_flag("--resume", resume, "Continue seeds from their checkpoints when present");

  std::string grid_layers, grid_ffn, grid_dropout, grid_temperature;
  auto* sweep = app.add_subcommand("sweep", "Grid over layers, ffn_dim, dropout and temperature");
  add_common(sweep, sweep_o);
  sweep->add_option("--layers", grid_layers, "Comma-separated layer counts");
  sweep->add_option("--ffn", grid_ffn, "Comma-separated feed-forward widths");
  sweep->add_option("--dropout", grid_dropout, "Comma-separated dropout rates");
  sweep->add_option("--temperatures", grid_temperature, "Comma-separated Boltzmann temperatures");

  mactas::CheckOptions check_o;
  std::string check_report;
  auto* check = app.add_subcommand("check", "Run the invariant suite; nonzero exit on failure");
  check->add_option("--seed", check_o.seed, "Seed for the randomized instances");
  check->add_flag("--fault-qmix-no-abs", check_o.qmix_without_abs, "Inject: drop QMIX weight positivity");
  check->add_flag("--fault-comm-nonzero-init", check_o.comm_nonzero_init, "Inject: random comm output layer");
  check->add_option("--report", check_report, "Write the JSON report here as well as to stdout");

  std::string checkpoint, topology_path;
  std::size_t eval_episodes = 32;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint through the deployment simulator");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint stem (without .bin/.json)")->required();
  eval->add_option("--topology", topology_path, "Reachability JSON; enables distributed mode")
      ->check(CLI::ExistingFile);
  eval->add_option("--episodes", eval_episodes, "Number of greedy episodes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto config = resolve(train_o);
      mactas::cmd_train(config, mactas::resolve_out_dir(config.out_dir), resume, std::cout);
    } else if (*sweep) {
      const auto config = resolve(sweep_o);
      mactas::SweepGrid grid;
      grid.layers = parse_list<std::size_t>(grid_layers);
      grid.ffn_dim = parse_list<std::size_t>(grid_ffn);
      grid.dropout = parse_list<double>(grid_dropout);
      grid.temperature = parse_list<double>(grid_temperature);
      mactas::cmd_sweep(config, grid, mactas::resolve_out_dir(config.out_dir), std::cout);
    } else if (*check) {
      const auto report = mactas::run_checks(check_o);
      const std::string text = report.to_json().dump(2);
      std::cout << text << "\n";
      if (!check_report.empty()) std::ofstream(check_report) << text << "\n";
      return report.passed() ? 0 : 1;
    } else if (*eval) {
      const auto config = resolve(eval_o);
      std::optional<mactas::Topology> topology;
      if (!topology_path.empty()) topology = mactas::Topology::load(topology_path);
      const auto result = mactas::cmd_eval(config, config.seeds.front(), checkpoint, topology, eval_episodes,
                                           mactas::resolve_out_dir(config.out_dir));
      std::cout << "mode " << result.mode << ": mean return " << result.summary.mean_return << ", success "
                << result.summary.success_rate << ", messages " << result.traffic.messages << "\n";
    }
  } catch (const mactas::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const mactas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
