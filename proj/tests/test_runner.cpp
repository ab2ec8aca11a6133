#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mactas/checks.hpp"
#include "mactas/errors.hpp"
#include "mactas/runner.hpp"

using namespace mactas;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.env.name = "cue_passing";
  c.env.n_agents = 2;
  c.env.n_cues = 2;
  c.comm.ffn_dim = 12;
  c.comm.heads = 2;
  c.train.rnn_dim = 8;
  c.train.mlp_dim = 8;
  c.train.batch_size = 4;
  c.train.buffer_capacity = 32;
  c.train.test_interval = 40;
  c.train.test_episodes = 4;
  c.train.target_update_interval = 10;
  c.seeds = {1, 2};
  c.total_env_steps = 120;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mactas_runner_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Matrix> values(Networks& nets) {
  std::vector<Matrix> out;
  for (auto* p : nets.parameters()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST(Config, RejectsUnknownAndMistypedKeys) {
  EXPECT_NO_THROW(run_config_from_json(nlohmann::json::object()));
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"comm": {"layerz": 2}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"train": {"gamma": "high"}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(nlohmann::json::parse(R"({"mixer": "qplex"})")), ConfigError);
  try {
    run_config_from_json(nlohmann::json::parse(R"({"explore": {"temp": 1}})"));
    FAIL() << "unknown key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("temp"), std::string::npos);
  }
}

TEST(Config, JsonRoundTrip) {
  const RunConfig c = tiny_config();
  const RunConfig back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, ShippedConfigsLoad) {
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(MACTAS_SOURCE_DIR "/configs")) {
    if (entry.path().extension() != ".json" || entry.path().filename().string().rfind("topology", 0) == 0) continue;
    EXPECT_NO_THROW(load_run_config(entry.path()).validate()) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 1u);
}

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.seeds.size(), 5u);
  EXPECT_EQ(c.total_env_steps, 50000u);
  EXPECT_EQ(c.train.test_interval, 2000u);
  EXPECT_EQ(c.train.test_episodes, 32u);
  EXPECT_EQ(c.comm.layers, 1u);
  EXPECT_EQ(c.comm.ffn_dim, 128u);
  EXPECT_DOUBLE_EQ(c.comm.dropout, 0.1);
}

TEST(Auc, Trapezoid) {
  const std::vector<double> x{0, 1, 3}, y{0, 2, 2};
  EXPECT_DOUBLE_EQ(trapezoid_auc(x, y), 5.0);
  const std::vector<double> back{0, 2, 1};
  EXPECT_THROW(trapezoid_auc(back, y), ContractViolation);
  const std::vector<double> short_y{0, 1};
  EXPECT_THROW(trapezoid_auc(x, short_y), DimensionError);
}

TEST(MeanCurve, AveragesStepsSharedByAllSeeds) {
  const std::vector<MetricRow> rows{{1, 0, 0.0, 0.0, NAN, 1.0},
                                    {1, 10, 1.0, 1.0, 0.5, 0.9},
                                    {2, 0, 0.5, 0.0, NAN, 1.0},
                                    {2, 10, 0.0, 0.0, 0.5, 0.9},
                                    {2, 20, 1.0, 1.0, 0.5, 0.8}};
  const MeanCurve c = mean_curve(rows);
  EXPECT_EQ(c.env_step, (std::vector<double>{0, 10}));
  EXPECT_EQ(c.mean_return, (std::vector<double>{0.25, 0.5}));
  EXPECT_EQ(c.success_rate, (std::vector<double>{0.0, 0.5}));
}

TEST(Trainer, MetricsAreBitIdenticalAcrossRuns) {
  const RunConfig c = tiny_config();
  const fs::path a = scratch("a"), b = scratch("b");
  std::ostringstream log;
  const auto rows = cmd_train(c, a, false, log);
  cmd_train(c, b, false, log);
  const std::string csv = slurp(a / "metrics.csv");
  EXPECT_EQ(csv, slurp(b / "metrics.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  // Test points at 0, 40, 80, 120 for each of the two seeds.
  EXPECT_EQ(rows.size(), 8u);
  EXPECT_EQ(read_metrics_csv(a / "metrics.csv").size(), rows.size());
  EXPECT_TRUE(fs::exists(a / "config.json"));
  EXPECT_TRUE(fs::exists(a / "seed_2" / "checkpoint.bin"));
  // Seeds differ from each other.
  EXPECT_NE(slurp(a / "seed_1" / "checkpoint.bin"), slurp(a / "seed_2" / "checkpoint.bin"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  RunConfig c = tiny_config();
  c.mixer = MixerKind::qmix;
  const fs::path dir = scratch("resume");
  fs::create_directories(dir);
  Trainer straight(c, 3);
  straight.run(200);

  Trainer first(c, 3);
  first.run(80);
  first.save(dir / "ckpt");
  Trainer second(c, 3);
  second.load(dir / "ckpt");
  EXPECT_EQ(second.env_steps(), first.env_steps());
  EXPECT_EQ(second.buffer().size(), first.buffer().size());
  EXPECT_EQ(values(second.learner().online()), values(first.learner().online()));
  EXPECT_EQ(values(second.learner().target()), values(first.learner().target()));
  second.run(200);

  ASSERT_EQ(second.rows().size(), straight.rows().size());
  for (std::size_t i = 0; i < straight.rows().size(); ++i) {
    EXPECT_EQ(second.rows()[i].mean_test_return, straight.rows()[i].mean_test_return);
    EXPECT_EQ(second.rows()[i].env_step, straight.rows()[i].env_step);
    EXPECT_EQ(std::isnan(second.rows()[i].loss), std::isnan(straight.rows()[i].loss));
    if (!std::isnan(straight.rows()[i].loss)) EXPECT_EQ(second.rows()[i].loss, straight.rows()[i].loss);
  }
  EXPECT_EQ(values(second.learner().online()), values(straight.learner().online()));
  EXPECT_EQ(second.learner().train_steps(), straight.learner().train_steps());
  fs::remove_all(dir);
}

TEST(Trainer, CommBlockDoesNotChangeInitialPolicy) {
  RunConfig with = tiny_config();
  RunConfig without = with;
  without.comm.enabled = false;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Trainer a(with, seed), b(without, seed);
    a.run(0);
    b.run(0);
    ASSERT_EQ(a.rows().size(), 1u);
    EXPECT_EQ(a.rows()[0].mean_test_return, b.rows()[0].mean_test_return);
    EXPECT_EQ(a.rows()[0].success_rate, b.rows()[0].success_rate);
  }
}

TEST(Trainer, RowsCarryEpsilonAndLoss) {
  Trainer t(tiny_config(), 1);
  t.run(120);
  ASSERT_GE(t.rows().size(), 2u);
  EXPECT_TRUE(std::isnan(t.rows()[0].loss));
  EXPECT_DOUBLE_EQ(t.rows()[0].epsilon, 1.0);
  EXPECT_FALSE(std::isnan(t.rows().back().loss));
  EXPECT_LT(t.rows().back().epsilon, 1.0);
}

TEST(Sweep, GridExpansion) {
  EXPECT_THROW(expand_grid(tiny_config(), SweepGrid{}), UsageError);
  SweepGrid g;
  g.layers = {1, 2};
  g.temperature = {0.1, 0.33, 1.0};
  const auto cells = expand_grid(tiny_config(), g);
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(g.cells(), 6u);
  std::set<std::string> names;
  for (const auto& c : cells) {
    names.insert(c.name);
    EXPECT_EQ(c.config.comm.ffn_dim, 12u);
  }
  EXPECT_EQ(names.size(), 6u);
  EXPECT_EQ(cells.back().config.comm.layers, 2u);
  EXPECT_DOUBLE_EQ(cells.back().config.explore.temperature, 1.0);
}

TEST(OutDir, EnvironmentRoot) {
  ::setenv("MACTAS_OUT_ROOT", "/tmp/root_x", 1);
  EXPECT_EQ(resolve_out_dir("runs/a"), fs::path("/tmp/root_x/runs/a"));
  EXPECT_EQ(resolve_out_dir("/abs/b"), fs::path("/abs/b"));
  ::unsetenv("MACTAS_OUT_ROOT");
  EXPECT_EQ(resolve_out_dir("runs/a"), fs::path("runs/a"));
}

TEST(Eval, SimulatorModesAgree) {
  RunConfig c = tiny_config();
  c.env.n_agents = 3;
  c.seeds = {4};
  const fs::path dir = scratch("eval");
  std::ostringstream log;
  cmd_train(c, dir, false, log);
  const fs::path stem = dir / "seed_4" / "checkpoint";
  const auto central = cmd_eval(c, 4, stem, std::nullopt, 6, dir / "central");
  const auto dist = cmd_eval(c, 4, stem, Topology(3), 6, dir / "dist");
  EXPECT_EQ(central.mode, "centralized");
  EXPECT_EQ(dist.mode, "distributed");
  EXPECT_EQ(central.summary.mean_return, dist.summary.mean_return);
  // Two steps per episode, six episodes.
  EXPECT_EQ(central.traffic.messages, 12u * 6);
  EXPECT_EQ(dist.traffic.messages, 12u * 6);
  EXPECT_TRUE(fs::exists(dir / "dist" / "eval.json"));
  EXPECT_TRUE(fs::exists(dir / "dist" / "traffic.csv"));
  EXPECT_THROW(cmd_eval(c, 4, stem, Topology(4), 1, dir / "bad"), DimensionError);

  RunConfig none = c;
  none.comm.enabled = false;
  const fs::path plain = scratch("eval_none");
  cmd_train(none, plain, false, log);
  EXPECT_EQ(cmd_eval(none, 4, plain / "seed_4" / "checkpoint", std::nullopt, 2, plain / "e").mode, "none");
  fs::remove_all(dir);
  fs::remove_all(plain);
}

TEST(Checks, SuitePassesAndFaultsAreCaught) {
  const CheckReport ok = run_checks({});
  for (const auto& r : ok.results) EXPECT_TRUE(r.passed) << r.name << " value " << r.value << " tol " << r.tolerance;
  EXPECT_TRUE(ok.passed());
  CheckOptions no_abs;
  no_abs.qmix_without_abs = true;
  EXPECT_FALSE(run_checks(no_abs).passed());
  CheckOptions loud;
  loud.comm_nonzero_init = true;
  EXPECT_FALSE(run_checks(loud).passed());
}
