#include "mactas/checks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mactas/config.hpp"
#include "mactas/gradcheck.hpp"
#include "mactas/ipu.hpp"
#include "mactas/kernels.hpp"
#include "mactas/rng.hpp"
#include "mactas/runner.hpp"

namespace mactas {

using nlohmann::json;

bool CheckReport::passed() const {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

json CheckReport::to_json() const {
  json checks = json::array();
  for (const auto& r : results)
    checks.push_back({{"name", r.name},
                      {"passed", r.passed},
                      {"value", r.value},
                      {"tolerance", r.tolerance},
                      {"detail", r.detail}});
  return {{"passed", passed()}, {"checks", checks}};
}

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.values()) v = d(rng);
  return m;
}

// Worst relative error between the tape gradient of `loss` and central
// differences, over `params`.
template <class Build>
double gradient_error(Build build, const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape(true);
    tape.backward(build(tape));
  }
  std::vector<Matrix> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  const auto numeric = finite_difference_gradient(
      [&] {
        Tape tape(false);
        return build(tape).value()[0];
      },
      params);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) worst = std::max(worst, max_relative_error(analytic[i], numeric[i]));
  return worst;
}

// Scalar probe sum(out .* R) with a fixed random R.
Var project(Tape& tape, Var out, const Matrix& r) { return ad::sum(ad::mul(out, tape.constant(r))); }

}  // namespace

double dense_gradient_error(std::uint64_t seed) {
  InitRng rng(seed);
  Dense d("dense", 5, 4, ParamGroup::main, rng);
  const Matrix x = random_matrix(3, 5, rng), r = random_matrix(3, 4, rng);
  return gradient_error([&](Tape& t) { return project(t, ad::tanh(d.forward(t, t.constant(x))), r); },
                        parameters_of(d));
}

double gru_gradient_error(std::uint64_t seed) {
  InitRng rng(seed);
  GruCell g("gru", 4, 6, ParamGroup::main, rng);
  const Matrix x = random_matrix(3, 4, rng), h = random_matrix(3, 6, rng, 0.5), r = random_matrix(3, 6, rng);
  return gradient_error([&](Tape& t) { return project(t, g.forward(t, t.constant(x), t.constant(h)), r); },
                        parameters_of(g));
}

double attention_gradient_error(std::uint64_t seed) {
  InitRng rng(seed);
  MultiHeadAttention a("attn", 8, 2, ParamGroup::comm, rng);
  const Matrix x = random_matrix(6, 8, rng), r = random_matrix(6, 8, rng);
  return gradient_error([&](Tape& t) { return project(t, a.forward(t, t.constant(x), 3), r); }, parameters_of(a));
}

double encoder_gradient_error(std::uint64_t seed) {
  InitRng rng(seed);
  EncoderLayer e("enc", 8, 2, 12, 0.1, 1, ParamGroup::comm, rng);
  const Matrix x = random_matrix(6, 8, rng), r = random_matrix(6, 8, rng);
  return gradient_error(
      [&](Tape& t) {
        ForwardContext ctx = ForwardContext::training(seed, 3);
        return project(t, e.forward(t, t.constant(x), 3, ctx), r);
      },
      parameters_of(e));
}

double qmix_gradient_error(std::uint64_t seed, bool positive_weights) {
  QmixConfig cfg;
  cfg.embed_dim = 4;
  cfg.hypernet_dim = 6;
  cfg.positive_weights = positive_weights;
  Mixer m = Mixer::qmix(3, 5, seed, cfg);
  std::mt19937_64 rng(seed + 1);
  const Matrix q = random_matrix(4, 3, rng), s = random_matrix(4, 5, rng), r = random_matrix(4, 1, rng);
  return gradient_error([&](Tape& t) { return project(t, m.forward(t, t.constant(q), t.constant(s)), r); },
                        parameters_of(m));
}

double td_loss_gradient_error(std::uint64_t seed) {
  RunConfig rc;
  rc.env.name = "two_step";
  rc.mixer = MixerKind::qmix;
  rc.comm.layers = 1;
  rc.comm.ffn_dim = 12;
  rc.comm.heads = 2;
  rc.comm.dropout = 0.1;
  rc.train.rnn_dim = 8;
  rc.train.mlp_dim = 6;
  rc.train.batch_size = 3;
  rc.train.buffer_capacity = 3;
  auto env = make_env(rc.env);
  // Nonzero output projection so every communication parameter gets a gradient.
  Networks nets = make_networks(rc, *env, seed, false);
  std::vector<Episode> episodes;
  const ExplorationConfig explore{1.0, 1, 0.0};
  for (std::uint64_t e = 0; e < 3; ++e)
    episodes.push_back(run_episode(*env, nets, hash_keys({seed, e}), explore, seed, 10 * e).episode);
  std::vector<const Episode*> ptrs;
  for (const auto& e : episodes) ptrs.push_back(&e);

  Learner learner(nets, rc.train, seed);
  const Batch batch = Batch::from_episodes(ptrs);
  std::vector<Matrix> q_values;
  {
    Tape tape(false);
    ForwardContext ctx = ForwardContext::training(seed, 0);
    for (const Var& v : unroll(tape, learner.online(), batch, batch.unroll_steps(), ctx)) q_values.push_back(v.value());
  }
  const auto targets = learner.compute_targets(batch, q_values);
  return gradient_error(
      [&](Tape& t) {
        ForwardContext ctx = ForwardContext::training(seed, 0);
        auto q = unroll(t, learner.online(), batch, batch.unroll_steps(), ctx);
        return learner.td_loss(t, batch, q, targets);
      },
      learner.online().parameters());
}

namespace {

CheckResult bound_check(std::string name, double value, double tol, std::string detail = {}) {
  return {std::move(name), value <= tol, value, tol, std::move(detail)};
}

CommConfig small_comm(std::size_t layers = 2) {
  CommConfig c;
  c.num_layers = layers;
  c.model_dim = 16;
  c.ffn_dim = 24;
  c.heads = 4;
  c.dropout = 0.1;
  return c;
}

CheckResult passthrough_check(const CheckOptions& o) {
  AgentNetConfig ac{5, 4, 3, 16, 16};
  CommConfig cc = small_comm();
  double worst = 0.0;
  std::mt19937_64 rng(o.seed);
  for (std::uint64_t k = 0; k < 100; ++k) {
    AgentNet agent(ac, o.seed + k);
    CommModule comm(cc, o.seed + 1000 + k, !o.comm_nonzero_init);
    const std::size_t teams = 1 + k % 3;
    const Matrix x = random_matrix(teams * 3, ac.input_dim(), rng);
    const Matrix h = random_matrix(teams * 3, 16, rng, 0.5);
    Tape tape(false);
    ForwardContext ctx = ForwardContext::eval();
    const Matrix with =
        team_forward(tape, agent, &comm, {true, true}, tape.constant(x), tape.constant(h), 3, ctx).q.value();
    const Matrix without =
        team_forward(tape, agent, nullptr, {false, true}, tape.constant(x), tape.constant(h), 3, ctx).q.value();
    worst = std::max(worst, max_abs_diff(with, without));
  }
  return {"comm_zero_init_passthrough", worst == 0.0, worst, 0.0, "team_forward with vs without comm, 100 inputs"};
}

CheckResult param_count_check(const CheckOptions& o) {
  const CommConfig cc = small_comm(3);
  CommModule comm(cc, o.seed);
  const std::size_t count = comm.param_count();
  bool ok = count == CommModule::expected_param_count(cc);
  std::mt19937_64 rng(o.seed);
  for (std::size_t n : {2, 8, 27}) {
    CommModule fresh(cc, o.seed + n);
    ForwardContext ctx = ForwardContext::eval();
    const Matrix z = communicate(fresh, random_matrix(n, cc.model_dim, rng), ctx);
    ok = ok && fresh.param_count() == count && z.rows() == n;
  }
  return {"comm_param_count_invariance", ok, static_cast<double>(count), 0.0, "n in {2, 8, 27}"};
}

CheckResult equivariance_check(const CheckOptions& o) {
  CommModule comm(small_comm(), o.seed, false);
  std::mt19937_64 rng(o.seed + 5);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + k % 7;
    const Matrix h = random_matrix(n, 16, rng);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    ForwardContext ctx = ForwardContext::eval();
    const Matrix z = communicate(comm, h, ctx);
    const Matrix zp = communicate(comm, h.rows_subset(perm), ctx);
    worst = std::max(worst, max_abs_diff(zp, z.rows_subset(perm)));
  }
  return bound_check("comm_permutation_equivariance", worst, 1e-6, "100 random (H, permutation) pairs");
}

CheckResult vdn_check(const CheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  Mixer vdn = Mixer::vdn(4);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Matrix q = random_matrix(1, 4, rng, 10.0);
    double exact = 0.0;
    for (double v : q.values()) exact += v;
    worst = std::max(worst, std::abs(vdn.mix(q.values(), {}) - exact));
  }
  return {"vdn_exact_sum", worst == 0.0, worst, 0.0, ""};
}

CheckResult monotonicity_check(const CheckOptions& o) {
  QmixConfig cfg;
  cfg.positive_weights = !o.qmix_without_abs;
  const std::size_t n = 3, sd = 6;
  Mixer m = Mixer::qmix(n, sd, o.seed, cfg);
  std::mt19937_64 rng(o.seed + 9);
  std::uniform_int_distribution<std::size_t> agent(0, n - 1);
  double worst = std::numeric_limits<double>::infinity();
  const double step = 1e-5;
  for (int k = 0; k < 1000; ++k) {
    Matrix q = random_matrix(1, n, rng, 2.0);
    const Matrix s = random_matrix(1, sd, rng);
    const std::size_t i = agent(rng);
    const double base = q[i];
    q[i] = base + step;
    const double up = m.mix(q.values(), s.values());
    q[i] = base - step;
    const double down = m.mix(q.values(), s.values());
    worst = std::min(worst, (up - down) / (2.0 * step));
  }
  return {"qmix_monotonicity", worst >= -1e-6, worst, -1e-6, "min dQ_tot/dq_i over 1000 probes"};
}

CheckResult mode_equivalence_check(const CheckOptions& o) {
  std::mt19937_64 rng(o.seed + 13);
  double worst = 0.0;
  bool traffic_ok = true;
  for (std::size_t n : {1, 3, 5, 8}) {
    for (std::size_t layers : {1, 3}) {
      CommModule comm(small_comm(layers), o.seed + n, false);
      const Matrix h = random_matrix(n, 16, rng);
      const RoundResult c = centralized_round(comm, h);
      const RoundResult d = distributed_round(comm, h, Topology::full(n));
      worst = std::max(worst, max_abs_diff(c.increments, d.increments));
      traffic_ok = traffic_ok && c.stats.messages == 2 * n && c.stats.floats_transferred == 2 * n * 16 &&
                   c.stats.rounds == 1 && d.stats.messages == layers * n * (n - 1) &&
                   d.stats.floats_transferred == layers * n * (n - 1) * 16 && d.stats.rounds == layers;
    }
  }
  CheckResult r = bound_check("deployment_mode_equivalence", worst, 1e-6, "centralized vs distributed, full topology");
  r.passed = r.passed && traffic_ok;
  if (!traffic_ok) r.detail += "; traffic counters wrong";
  return r;
}

CheckResult isolation_check(const CheckOptions& o) {
  std::mt19937_64 rng(o.seed + 17);
  CommModule comm(small_comm(2), o.seed, false);
  double worst = 0.0;
  for (std::size_t n : {3, 5}) {
    for (std::size_t j = 0; j < n; ++j) {
      const Matrix h = random_matrix(n, 16, rng);
      Topology topo = Topology::full(n);
      topo.isolate(j);
      const Matrix z = distributed_round(comm, h, topo).increments;
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (i != j) rest.push_back(i);
      ForwardContext ctx = ForwardContext::eval();
      const Matrix sub = communicate(comm, h.rows_subset(rest), ctx);
      worst = std::max(worst, max_abs_diff(z.rows_subset(rest), sub));
    }
  }
  return bound_check("masked_attention_isolation", worst, 1e-9, "isolated agent vs run without it");
}

CheckResult exploration_check(const CheckOptions& o) {
  std::mt19937_64 rng(o.seed + 21);
  std::uniform_real_distribution<double> eps_d(0.0, 1.0), tau_d(0.05, 2.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t A = 2 + k % 6;
    const Matrix q = random_matrix(1, A, rng);
    std::vector<std::uint8_t> avail(A, 1);
    avail[k % A] = static_cast<std::uint8_t>(k % 3 != 0);
    const double eps = eps_d(rng);
    const auto plain = action_distribution(q.values(), avail, {eps, 1, 0.0});
    const auto k1 = action_distribution(q.values(), avail, {eps, 1, tau_d(rng)});
    const auto t0 = action_distribution(q.values(), avail, {eps, 3, 0.0});
    for (std::size_t a = 0; a < A; ++a)
      worst = std::max({worst, std::abs(plain[a] - k1[a]), std::abs(plain[a] - t0[a])});
  }
  return bound_check("exploration_reductions", worst, 1e-15, "k = 1 and tau = 0 vs epsilon-greedy");
}

CheckResult kernel_check(const CheckOptions& o) {
  std::mt19937_64 rng(o.seed + 25);
  bool same = true;
  for (std::size_t m : {3, 64, 200})
    for (std::size_t k : {5, 64, 130})
      for (std::size_t n : {7, 64, 190}) {
        const Matrix a = random_matrix(m, k, rng), b = random_matrix(k, n, rng), bt = b.transposed();
        const Matrix at = a.transposed();
        Matrix s(m, n), p(m, n);
        kernels::serial::gemm_nn(a.data(), b.data(), s.data(), m, k, n, false);
        kernels::parallel::gemm_nn(a.data(), b.data(), p.data(), m, k, n, false);
        same = same && s == p;
        kernels::serial::gemm_nt(a.data(), bt.data(), s.data(), m, k, n, false);
        kernels::parallel::gemm_nt(a.data(), bt.data(), p.data(), m, k, n, false);
        same = same && s == p;
        kernels::serial::gemm_tn(at.data(), b.data(), s.data(), m, k, n, false);
        kernels::parallel::gemm_tn(at.data(), b.data(), p.data(), m, k, n, false);
        same = same && s == p;
      }
  return {"parallel_kernels_match_serial", same, same ? 0.0 : 1.0, 0.0, "bitwise GEMM comparison"};
}

CheckResult env_determinism_check(const CheckOptions& o) {
  bool same = true;
  for (const char* name : {"cue_passing", "matrix_game", "two_step"}) {
    EnvConfig ec;
    ec.name = name;
    auto a = make_env(ec), b = make_env(ec);
    std::mt19937_64 rng(o.seed);
    for (std::uint64_t ep = 0; ep < 20; ++ep) {
      a->reset(o.seed + ep);
      b->reset(o.seed + ep);
      while (!a->done()) {
        std::vector<std::size_t> acts(a->n_agents());
        for (std::size_t i = 0; i < acts.size(); ++i) {
          const auto av = a->available_actions(i);
          std::vector<std::size_t> ok;
          for (std::size_t x = 0; x < av.size(); ++x)
            if (av[x]) ok.push_back(x);
          acts[i] = ok[rng() % ok.size()];
        }
        same = same && a->observations() == b->observations() && a->state() == b->state();
        const auto ra = a->step(acts), rb = b->step(acts);
        same = same && ra.reward == rb.reward && ra.terminal == rb.terminal && b->done() == a->done();
      }
    }
  }
  return {"environment_determinism", same, same ? 0.0 : 1.0, 0.0, "same seed and actions, two instances"};
}

}  // namespace

CheckReport run_checks(const CheckOptions& o) {
  CheckReport report;
  auto& r = report.results;
  r.push_back(bound_check("gradient_dense", dense_gradient_error(o.seed), 1e-4));
  r.push_back(bound_check("gradient_gru", gru_gradient_error(o.seed), 1e-4));
  r.push_back(bound_check("gradient_attention", attention_gradient_error(o.seed), 1e-4));
  r.push_back(bound_check("gradient_encoder_layer", encoder_gradient_error(o.seed), 1e-4));
  r.push_back(bound_check("gradient_qmix", qmix_gradient_error(o.seed, !o.qmix_without_abs), 1e-4));
  r.push_back(bound_check("gradient_td_loss", td_loss_gradient_error(o.seed), 1e-3));
  r.push_back(passthrough_check(o));
  r.push_back(param_count_check(o));
  r.push_back(equivariance_check(o));
  r.push_back(vdn_check(o));
  r.push_back(monotonicity_check(o));
  r.push_back(mode_equivalence_check(o));
  r.push_back(isolation_check(o));
  r.push_back(exploration_check(o));
  r.push_back(kernel_check(o));
  r.push_back(env_determinism_check(o));
  return report;
}

}  // namespace mactas
