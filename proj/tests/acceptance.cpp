// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.
// Tolerances and budgets are fixed here. `--only 8 9` restricts the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mactas/checks.hpp"
#include "mactas/config.hpp"
#include "mactas/exploration.hpp"
#include "mactas/ipu.hpp"
#include "mactas/runner.hpp"

using namespace mactas;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

Matrix uniform_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

RunConfig shipped(const std::string& name) { return load_run_config(MACTAS_SOURCE_DIR "/configs/" + name); }

Verdict gradient_fidelity() {
  const auto start = std::chrono::steady_clock::now();
  double single = 0.0, composite = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    single = std::max({single, dense_gradient_error(seed), gru_gradient_error(seed), attention_gradient_error(seed),
                       encoder_gradient_error(seed)});
    composite = std::max({composite, qmix_gradient_error(seed), td_loss_gradient_error(seed)});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {single <= 1e-4 && composite <= 1e-3 && secs < 60.0,
          "layers " + num(single) + " (<= 1e-4), qmix/td " + num(composite) + " (<= 1e-3), " + num(secs) + " s"};
}

Verdict zero_init_passthrough() {
  const RunConfig config = shipped("cue_passing_mactas_vdn.json");
  auto env = make_env(config.env);
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    Networks nets = make_networks(config, *env, 1000 + k);
    const std::size_t teams = 1 + k % 4, n = env->n_agents();
    const Matrix x = uniform_matrix(teams * n, nets.agent.config().input_dim(), rng, 2.0);
    const Matrix h = uniform_matrix(teams * n, config.train.rnn_dim, rng);
    Tape tape(false);
    auto ctx = ForwardContext::eval();
    const Matrix with = team_forward(tape, nets.agent, &*nets.comm, {true, true}, tape.constant(x),
                                     tape.constant(h), n, ctx).q.value();
    const Matrix without = team_forward(tape, nets.agent, nullptr, {false, true}, tape.constant(x),
                                        tape.constant(h), n, ctx).q.value();
    worst = std::max(worst, max_abs_diff(with, without));
  }
  return {worst == 0.0, "max |Q_comm - Q_plain| = " + num(worst) + " over 100 inputs"};
}

Verdict param_count_invariance() {
  const CommConfig cc = shipped("cue_passing_mactas_vdn.json").comm_config();
  std::vector<std::size_t> counts;
  bool shapes = true;
  std::mt19937_64 rng(3);
  for (std::size_t n : {2, 8, 27}) {
    CommModule comm(cc, 3);
    auto ctx = ForwardContext::eval();
    shapes = shapes && communicate(comm, uniform_matrix(n, cc.model_dim, rng), ctx).rows() == n;
    counts.push_back(comm.param_count());
  }
  const bool same = counts[0] == counts[1] && counts[1] == counts[2] &&
                    counts[0] == CommModule::expected_param_count(cc);
  return {same && shapes, "counts " + std::to_string(counts[0]) + ", " + std::to_string(counts[1]) + ", " +
                              std::to_string(counts[2])};
}

Verdict permutation_equivariance() {
  CommConfig cc = shipped("cue_passing_mactas_vdn.json").comm_config();
  cc.num_layers = 2;
  CommModule comm(cc, 4, false);
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + k % 9;
    const Matrix h = uniform_matrix(n, cc.model_dim, rng, 2.0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto ctx = ForwardContext::eval();
    const Matrix z = communicate(comm, h, ctx);
    worst = std::max(worst, max_abs_diff(communicate(comm, h.rows_subset(perm), ctx), z.rows_subset(perm)));
  }
  return {worst <= 1e-6, "max-abs " + num(worst) + " (<= 1e-6)"};
}

Verdict mixer_contracts() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10, 10);
  Mixer vdn = Mixer::vdn(5);
  double vdn_err = 0.0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> q(5);
    for (auto& v : q) v = u(rng);
    vdn_err = std::max(vdn_err, std::abs(vdn.mix(q, {}) - (q[0] + q[1] + q[2] + q[3] + q[4])));
  }
  double slope = 1e300;
  const double h = 1e-5;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Mixer qmix = Mixer::qmix(3, 7, seed);
    for (int k = 0; k < 1000; ++k) {
      std::vector<double> q(3), s(7);
      for (auto& v : q) v = u(rng) / 2;
      for (auto& v : s) v = u(rng) / 5;
      const std::size_t i = k % 3;
      const double q0 = q[i];
      q[i] = q0 + h;
      const double up = qmix.mix(q, s);
      q[i] = q0 - h;
      slope = std::min(slope, (up - qmix.mix(q, s)) / (2 * h));
    }
  }
  return {vdn_err == 0.0 && slope >= -1e-6, "vdn error " + num(vdn_err) + ", min qmix slope " + num(slope)};
}

Verdict deployment_equivalence() {
  const CommConfig base = shipped("cue_passing_mactas_vdn.json").comm_config();
  std::mt19937_64 rng(6);
  double worst = 0.0;
  bool traffic = true;
  for (std::size_t layers : {1, 2, 3})
    for (std::size_t n : {1, 2, 3, 5, 8}) {
      CommConfig cc = base;
      cc.num_layers = layers;
      CommModule comm(cc, 10 * layers + n, false);
      const Matrix h = uniform_matrix(n, cc.model_dim, rng, 2.0);
      const RoundResult c = centralized_round(comm, h);
      const RoundResult d = distributed_round(comm, h, Topology::full(n));
      worst = std::max(worst, max_abs_diff(c.increments, d.increments));
      traffic = traffic && c.stats.floats_transferred == 2 * n * cc.model_dim &&
                d.stats.messages == layers * n * (n - 1);
    }
  return {worst <= 1e-6 && traffic, "max-abs " + num(worst) + ", traffic counters " + (traffic ? "exact" : "wrong")};
}

Verdict exploration_reductions() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3), unit(0, 1);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t A = 2 + k % 8;
    std::vector<double> q(A);
    for (auto& v : q) v = u(rng);
    std::vector<std::uint8_t> avail(A, 1);
    if (k % 4 == 0) avail[k % A] = 0;
    const double eps = unit(rng);
    const auto ref = action_distribution(q, avail, {eps, 1, 0.0});
    const auto k1 = action_distribution(q, avail, {eps, 1, 0.05 + 2 * unit(rng)});
    const auto t0 = action_distribution(q, avail, {eps, static_cast<std::size_t>(2 + k % 3), 0.0});
    for (std::size_t a = 0; a < A; ++a) worst = std::max({worst, std::abs(ref[a] - k1[a]), std::abs(ref[a] - t0[a])});
  }
  double mc = 0.0;
  const std::vector<ExplorationConfig> cfgs{{0.05, 2, 0.33}, {0.3, 3, 1.0}, {0.6, 1, 0.0}, {0.0, 4, 0.5}};
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    std::vector<double> q(5);
    for (auto& v : q) v = u(rng);
    const std::vector<std::uint8_t> avail{1, 1, 0, 1, 1};
    const auto p = action_distribution(q, avail, cfgs[c]);
    std::vector<double> freq(5, 0.0);
    const std::size_t samples = 100000;
    for (std::uint64_t s = 0; s < samples; ++s) freq[select_action(q, avail, cfgs[c], 77, c, s)] += 1.0 / samples;
    for (std::size_t a = 0; a < 5; ++a) mc = std::max(mc, std::abs(freq[a] - p[a]));
  }
  return {worst <= 1e-15 && mc <= 0.01, "reduction error " + num(worst) + ", Monte Carlo gap " + num(mc) + " (<= 0.01)"};
}

double mean_last_success(std::vector<Trainer>& trainers) {
  double s = 0.0;
  for (auto& t : trainers) s += t.rows().back().success_rate;
  return s / static_cast<double>(trainers.size());
}

Verdict communication_necessity() {
  const RunConfig with = shipped("cue_passing_mactas_vdn.json");
  const RunConfig without = shipped("cue_passing_none_vdn.json");
  // Fixed ceiling; the best blind policy (everyone answers its own cue) scores 1/9.
  const double ceiling = 0.187;
  const std::uint64_t budget = 50000;

  std::vector<Trainer> comm;
  comm.reserve(with.seeds.size());
  for (std::uint64_t s : with.seeds) comm.emplace_back(with, s);
  std::uint64_t reached = 0;
  double best = 0.0;
  for (std::uint64_t step = 0; step <= budget && reached == 0; step += with.train.test_interval) {
    for (auto& t : comm) t.run(step);
    best = std::max(best, mean_last_success(comm));
    if (best >= 0.9) reached = step;
  }

  std::vector<Trainer> plain;
  plain.reserve(without.seeds.size());
  for (std::uint64_t s : without.seeds) plain.emplace_back(without, s);
  for (auto& t : plain) t.run(budget);
  std::vector<MetricRow> rows;
  for (auto& t : plain) rows.insert(rows.end(), t.rows().begin(), t.rows().end());
  const MeanCurve curve = mean_curve(rows);
  const double worst = *std::max_element(curve.success_rate.begin(), curve.success_rate.end());

  const bool pass = reached > 0 && worst <= ceiling && with.seeds.size() == 5 && without.seeds.size() == 5;
  return {pass, "mactas mean success " + num(best) + (reached ? " at " + std::to_string(reached) + " steps" : "") +
                    "; baseline max mean success " + num(worst) + " (<= " + num(ceiling) + ")"};
}

Verdict oracle_convergence() {
  const RunConfig config = shipped("two_step_mactas_qmix.json");
  const auto optimum = value_iteration(tabular_model(TwoStepCoop{}), config.train.gamma);
  const std::vector<double> expected{optimum.start_value, optimum.values[2]};
  std::size_t ok = 0;
  double worst = 0.0;
  for (std::uint64_t seed : config.seeds) {
    Trainer t(config, seed);
    t.run(20000);
    auto env = make_env(config.env);
    const auto o = run_episode(*env, t.learner().online(), seed, {0.0, 1, 0.0}, 0, 0);
    double err = 1e300;
    if (o.q_tot.size() == 2) err = std::max(std::abs(o.q_tot[0] - expected[0]), std::abs(o.q_tot[1] - expected[1]));
    worst = std::max(worst, err);
    ok += err <= 0.05;
  }
  return {ok == 5 && config.seeds.size() == 5,
          std::to_string(ok) + "/5 seeds within 0.05 of V* = (" + num(expected[0]) + ", " + num(expected[1]) +
              "), worst " + num(worst)};
}

Verdict exploration_benefit() {
  const RunConfig topk = shipped("climbing_topk.json"), egreedy = shipped("climbing_egreedy.json");
  // Repetition r runs seeds 1-5 offset by 100 r, so repetition 0 is seeds 1-5 themselves.
  auto successes = [](const RunConfig& c, std::uint64_t rep) {
    std::size_t wins = 0;
    for (std::uint64_t s = 1; s <= 5; ++s) {
      Trainer t(c, s + 100 * rep);
      t.run(c.total_env_steps);
      wins += t.rows().back().mean_test_return == 11.0;
    }
    return wins;
  };
  std::vector<std::size_t> a, b;
  for (std::uint64_t rep = 0; rep < 3; ++rep) {
    a.push_back(successes(topk, rep));
    b.push_back(successes(egreedy, rep));
  }
  std::vector<std::size_t> sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  auto list = [](const std::vector<std::size_t>& v) {
    return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]);
  };
  return {a[0] >= b[0] && sa[1] > sb[1],
          "optimal seeds per repetition: top-2 [" + list(a) + "], epsilon-greedy [" + list(b) + "]"};
}

Verdict fault_detection() {
  const bool clean = run_checks({}).passed();
  CheckOptions no_abs, loud;
  no_abs.qmix_without_abs = true;
  loud.comm_nonzero_init = true;
  const bool abs_caught = !run_checks(no_abs).passed();
  const bool init_caught = !run_checks(loud).passed();
  return {clean && abs_caught && init_caught, std::string("clean suite ") + (clean ? "passes" : "FAILS") +
                                                  ", qmix without abs " + (abs_caught ? "caught" : "missed") +
                                                  ", nonzero comm init " + (init_caught ? "caught" : "missed")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Criterion numbers to run");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"zero-init passthrough", zero_init_passthrough},
      {"parameter count independent of n", param_count_invariance},
      {"permutation equivariance", permutation_equivariance},
      {"mixer contracts", mixer_contracts},
      {"deployment equivalence", deployment_equivalence},
      {"exploration reductions", exploration_reductions},
      {"communication necessity", communication_necessity},
      {"oracle convergence", oracle_convergence},
      {"exploration benefit", exploration_benefit},
      {"fault detection", fault_detection},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << " ["
              << num(secs) << " s]" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
