#include "mactas/runner.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "mactas/checkpoint.hpp"
#include "mactas/errors.hpp"
#include "mactas/rng.hpp"

namespace mactas {

using nlohmann::json;

namespace {

// Stream tags for seed derivation.
enum : std::uint64_t {
  kAgentInit = 101,
  kCommInit = 102,
  kMixerInit = 103,
  kTrainEpisode = 201,
  kTestEpisode = 202,
  kActions = 203,
  kSampler = 204,
  kDropout = 205,
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<CheckpointRecord> param_records(const std::string& prefix, Networks& nets) {
  std::vector<CheckpointRecord> out;
  for (Parameter* p : nets.parameters()) out.push_back({prefix + "/" + p->name, p->value});
  return out;
}

void load_params(const std::string& prefix, Networks& nets, const std::map<std::string, const Matrix*>& records) {
  for (Parameter* p : nets.parameters()) {
    auto it = records.find(prefix + "/" + p->name);
    if (it == records.end()) throw ContractViolation("checkpoint: missing tensor " + prefix + "/" + p->name);
    if (!it->second->same_shape(p->value))
      throw DimensionError("checkpoint: " + it->first + " has shape " + it->second->shape_string() + ", expected " +
                           p->value.shape_string());
    p->value = *it->second;
  }
}

void optimizer_records(const std::string& prefix, const Optimizer& opt, std::vector<CheckpointRecord>& out) {
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i)
    out.push_back({prefix + "/m/" + std::to_string(i), opt.first_moments()[i]});
  for (std::size_t i = 0; i < opt.second_moments().size(); ++i)
    out.push_back({prefix + "/v/" + std::to_string(i), opt.second_moments()[i]});
}

void load_optimizer(const std::string& prefix, Optimizer& opt, const json& meta,
                    const std::map<std::string, const Matrix*>& records) {
  auto collect = [&](const char* part, std::size_t count) {
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < count; ++i) {
      auto it = records.find(prefix + "/" + part + "/" + std::to_string(i));
      if (it == records.end()) throw ContractViolation("checkpoint: missing optimizer state " + prefix);
      out.push_back(*it->second);
    }
    return out;
  };
  opt.restore(meta.at("steps").get<std::uint64_t>(), collect("m", meta.at("first").get<std::size_t>()),
              collect("v", meta.at("second").get<std::size_t>()));
}

json optimizer_meta(const Optimizer& opt) {
  return {{"steps", opt.step_count()}, {"first", opt.first_moments().size()}, {"second", opt.second_moments().size()}};
}

// One matrix per episode, one row per timestep 0..T:
//   [obs (n * obs_dim) | state | avail (n * A) | actions (n) | reward | terminated]
// Row T carries zeros in the action and reward columns.
Matrix pack_episode(const Episode& e) {
  const std::size_t n = e.n_agents, A = e.n_actions;
  const std::size_t od = e.obs.front().cols(), sd = e.state.front().size();
  Matrix m(e.length + 1, n * od + sd + n * A + n + 2);
  for (std::size_t t = 0; t <= e.length; ++t) {
    double* row = m.data() + t * m.cols();
    std::copy_n(e.obs[t].data(), n * od, row);
    std::copy(e.state[t].begin(), e.state[t].end(), row + n * od);
    for (std::size_t k = 0; k < n * A; ++k) row[n * od + sd + k] = e.avail[t][k];
    if (t < e.length) {
      for (std::size_t i = 0; i < n; ++i) row[n * od + sd + n * A + i] = static_cast<double>(e.actions[t][i]);
      row[n * od + sd + n * A + n] = e.rewards[t];
    }
    row[m.cols() - 1] = e.terminated ? 1.0 : 0.0;
  }
  return m;
}

Episode unpack_episode(const Matrix& m, std::size_t n, std::size_t A, std::size_t od, std::size_t sd) {
  if (m.rows() < 2 || m.cols() != n * od + sd + n * A + n + 2)
    throw DimensionError("checkpoint: replay episode has shape " + m.shape_string());
  Episode e;
  e.n_agents = n;
  e.n_actions = A;
  e.length = m.rows() - 1;
  e.terminated = m(0, m.cols() - 1) != 0.0;
  for (std::size_t t = 0; t <= e.length; ++t) {
    const double* row = m.data() + t * m.cols();
    Matrix o(n, od);
    std::copy_n(row, n * od, o.data());
    e.obs.push_back(std::move(o));
    e.state.emplace_back(row + n * od, row + n * od + sd);
    std::vector<std::uint8_t> av(n * A);
    for (std::size_t k = 0; k < n * A; ++k) av[k] = row[n * od + sd + k] != 0.0 ? 1 : 0;
    e.avail.push_back(std::move(av));
    if (t < e.length) {
      std::vector<std::size_t> acts(n);
      for (std::size_t i = 0; i < n; ++i) acts[i] = static_cast<std::size_t>(row[n * od + sd + n * A + i]);
      e.actions.push_back(std::move(acts));
      e.rewards.push_back(row[n * od + sd + n * A + n]);
    }
  }
  return e;
}

json row_json(const MetricRow& r) {
  return {r.seed, r.env_step, r.mean_test_return, r.success_rate, std::isnan(r.loss) ? json(nullptr) : json(r.loss),
          r.epsilon};
}

MetricRow row_from_json(const json& j) {
  MetricRow r;
  r.seed = j.at(0).get<std::uint64_t>();
  r.env_step = j.at(1).get<std::uint64_t>();
  r.mean_test_return = j.at(2).get<double>();
  r.success_rate = j.at(3).get<double>();
  r.loss = j.at(4).is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at(4).get<double>();
  r.epsilon = j.at(5).get<double>();
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

Networks make_networks(const RunConfig& config, const Environment& env, std::uint64_t seed, bool comm_zero_init) {
  AgentNetConfig ac;
  ac.obs_dim = env.obs_dim();
  ac.n_actions = env.n_actions();
  ac.n_agents = env.n_agents();
  ac.mlp_dim = config.train.mlp_dim;
  ac.rnn_dim = config.train.rnn_dim;
  Networks nets{AgentNet(ac, hash_keys({seed, kAgentInit})), std::nullopt, Mixer::vdn(env.n_agents()),
                TeamFlags{config.comm.enabled, config.comm.residual}};
  if (config.comm.enabled) nets.comm.emplace(config.comm_config(), hash_keys({seed, kCommInit}), comm_zero_init);
  if (config.mixer == MixerKind::qmix)
    nets.mixer = Mixer::qmix(env.n_agents(), env.state_dim(), hash_keys({seed, kMixerInit}));
  return nets;
}

EpisodeOutcome run_episode(Environment& env, Networks& nets, std::uint64_t env_seed, const ExplorationConfig& explore,
                           std::uint64_t action_seed, std::uint64_t step_base, const CommOverride* comm_override) {
  const std::size_t n = env.n_agents(), A = env.n_actions();
  EpisodeOutcome out;
  Episode& ep = out.episode;
  ep.n_agents = n;
  ep.n_actions = A;
  env.reset(env_seed);

  auto record_view = [&] {
    ep.obs.push_back(env.observations());
    ep.state.push_back(env.state());
    std::vector<std::uint8_t> avail;
    avail.reserve(n * A);
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = env.available_actions(i);
      avail.insert(avail.end(), a.begin(), a.end());
    }
    ep.avail.push_back(std::move(avail));
  };

  CommModule* comm = nets.comm ? &*nets.comm : nullptr;
  ForwardContext ctx = ForwardContext::eval();
  Matrix h(n, nets.agent.config().rnn_dim);
  std::vector<std::size_t> last(n, 0);
  for (std::size_t t = 0; !env.done(); ++t) {
    record_view();
    Tape tape(false);
    const Matrix x = build_agent_inputs(ep.obs.back(), last, t == 0, n, A);
    const TeamStep s =
        team_forward(tape, nets.agent, comm, nets.flags, tape.constant(x), tape.constant(h), n, ctx, comm_override);
    const Matrix& q = s.q.value();
    std::vector<std::size_t> actions(n);
    std::vector<double> chosen(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::span<const double> qi(q.data() + i * A, A);
      std::span<const std::uint8_t> ai(ep.avail.back().data() + i * A, A);
      actions[i] = select_action(qi, ai, explore, action_seed, i, step_base + t);
      chosen[i] = qi[actions[i]];
    }
    out.q_tot.push_back(nets.mixer.mix(chosen, ep.state.back()));
    h = s.hidden.value();
    const StepResult r = env.step(actions);
    ep.actions.push_back(actions);
    ep.rewards.push_back(r.reward);
    last = std::move(actions);
    if (r.terminal) ep.terminated = true;
  }
  record_view();
  ep.length = ep.actions.size();
  out.episode_return = env.episode_return();
  out.success = env.success();
  return out;
}

TestSummary run_test_episodes(Environment& env, Networks& nets, std::size_t count, std::uint64_t seed_base,
                              const CommOverride* comm_override) {
  if (count == 0) throw ContractViolation("run_test_episodes: zero episodes");
  TestSummary s;
  const ExplorationConfig greedy{0.0, 1, 0.0};
  for (std::size_t j = 0; j < count; ++j) {
    const auto o = run_episode(env, nets, hash_keys({seed_base, j}), greedy, 0, 0, comm_override);
    s.mean_return += o.episode_return;
    s.success_rate += o.success ? 1.0 : 0.0;
  }
  s.mean_return /= static_cast<double>(count);
  s.success_rate /= static_cast<double>(count);
  return s;
}

std::string to_csv(const MetricRow& r) {
  return std::to_string(r.seed) + "," + std::to_string(r.env_step) + "," + fmt(r.mean_test_return) + "," +
         fmt(r.success_rate) + "," + fmt(r.loss) + "," + fmt(r.epsilon);
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw ContractViolation("metrics CSV: unexpected header in " + path.string());
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[6];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw ContractViolation("metrics CSV: short row in " + path.string());
    rows.push_back({std::stoull(f[0]), std::stoull(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                    std::stod(f[5])});
  }
  return rows;
}

Trainer::Trainer(RunConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      seed_(seed),
      env_(make_env(config_.env)),
      test_env_(env_->clone()),
      buffer_(config_.train.buffer_capacity),
      sampler_(hash_keys({seed, kSampler})) {
  config_.validate();
  learner_ = std::make_unique<Learner>(make_networks(config_, *env_, seed), config_.train, hash_keys({seed, kDropout}));
}

void Trainer::test_point() {
  const TestSummary s = run_test_episodes(*test_env_, learner_->online(), config_.train.test_episodes,
                                          hash_keys({seed_, kTestEpisode, tests_}));
  MetricRow r;
  r.seed = seed_;
  r.env_step = env_steps_;
  r.mean_test_return = s.mean_return;
  r.success_rate = s.success_rate;
  r.loss = loss_count_ ? loss_sum_ / static_cast<double>(loss_count_) : std::numeric_limits<double>::quiet_NaN();
  r.epsilon = epsilon(env_steps_, config_.train);
  rows_.push_back(r);
  ++tests_;
  loss_sum_ = 0.0;
  loss_count_ = 0;
  const std::uint64_t interval = config_.train.test_interval;
  next_test_ = (env_steps_ / interval + 1) * interval;
}

void Trainer::run(std::uint64_t total_env_steps) {
  const std::uint64_t action_seed = hash_keys({seed_, kActions});
  while (true) {
    if (env_steps_ >= next_test_) test_point();
    if (env_steps_ >= total_env_steps) break;
    const ExplorationConfig explore = config_.exploration(epsilon(env_steps_, config_.train));
    EpisodeOutcome o = run_episode(*env_, learner_->online(), hash_keys({seed_, kTrainEpisode, episodes_}), explore,
                                   action_seed, env_steps_);
    env_steps_ += o.episode.length;
    ++episodes_;
    buffer_.add(std::move(o.episode));
    if (auto m = learner_->train_step(buffer_, sampler_)) {
      loss_sum_ += m->loss;
      ++loss_count_;
    }
  }
}

void Trainer::save(const std::filesystem::path& stem) {
  std::vector<CheckpointRecord> records = param_records("online", learner_->online());
  auto target = param_records("target", learner_->target());
  records.insert(records.end(), target.begin(), target.end());
  optimizer_records("opt_main", learner_->main_optimizer(), records);
  optimizer_records("opt_comm", learner_->comm_optimizer(), records);
  for (std::size_t i = 0; i < buffer_.size(); ++i)
    records.push_back({"replay/" + std::to_string(i), pack_episode(buffer_.at(i))});

  std::ostringstream rng_state;
  rng_state << sampler_;
  json rows = json::array();
  for (const auto& r : rows_) rows.push_back(row_json(r));
  json meta = {{"config", to_json(config_)},
               {"seed", seed_},
               {"env_steps", env_steps_},
               {"episodes", episodes_},
               {"next_test", next_test_},
               {"tests", tests_},
               {"loss_sum", loss_sum_},
               {"loss_count", loss_count_},
               {"train_steps", learner_->train_steps()},
               {"opt_main", optimizer_meta(learner_->main_optimizer())},
               {"opt_comm", optimizer_meta(learner_->comm_optimizer())},
               {"replay_size", buffer_.size()},
               {"sampler_state", rng_state.str()},
               {"rows", rows}};
  std::filesystem::create_directories(stem.parent_path().empty() ? "." : stem.parent_path());
  save_checkpoint(stem, records, meta);
}

void Trainer::load(const std::filesystem::path& stem) {
  std::filesystem::path bin = stem, manifest = stem;
  bin += ".bin";
  manifest += ".json";
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read " + manifest.string());
  const json meta = json::parse(in).at("meta");
  if (meta.at("seed").get<std::uint64_t>() != seed_) throw ContractViolation("checkpoint: seed mismatch");
  const auto records = read_checkpoint(bin);
  std::map<std::string, const Matrix*> by_name;
  for (const auto& r : records) by_name[r.name] = &r.tensor;

  load_params("online", learner_->online(), by_name);
  load_params("target", learner_->target(), by_name);
  load_optimizer("opt_main", learner_->main_optimizer(), meta.at("opt_main"), by_name);
  load_optimizer("opt_comm", learner_->comm_optimizer(), meta.at("opt_comm"), by_name);
  learner_->set_train_steps(meta.at("train_steps").get<std::uint64_t>());

  buffer_ = ReplayBuffer(config_.train.buffer_capacity);
  const std::size_t replay = meta.at("replay_size").get<std::size_t>();
  for (std::size_t i = 0; i < replay; ++i) {
    auto it = by_name.find("replay/" + std::to_string(i));
    if (it == by_name.end()) throw ContractViolation("checkpoint: missing replay episode " + std::to_string(i));
    buffer_.add(unpack_episode(*it->second, env_->n_agents(), env_->n_actions(), env_->obs_dim(), env_->state_dim()));
  }
  std::istringstream rng_state(meta.at("sampler_state").get<std::string>());
  rng_state >> sampler_;
  env_steps_ = meta.at("env_steps").get<std::uint64_t>();
  episodes_ = meta.at("episodes").get<std::uint64_t>();
  next_test_ = meta.at("next_test").get<std::uint64_t>();
  tests_ = meta.at("tests").get<std::uint64_t>();
  loss_sum_ = meta.at("loss_sum").get<double>();
  loss_count_ = meta.at("loss_count").get<std::uint64_t>();
  rows_.clear();
  for (const auto& r : meta.at("rows")) rows_.push_back(row_from_json(r));
}

double trapezoid_auc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("trapezoid_auc: x and y lengths differ");
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] < x[i - 1]) throw ContractViolation("trapezoid_auc: x must be nondecreasing");
    area += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  }
  return area;
}

MeanCurve mean_curve(std::span<const MetricRow> rows) {
  std::map<std::uint64_t, std::map<std::uint64_t, const MetricRow*>> by_step;
  std::map<std::uint64_t, bool> seeds;
  for (const auto& r : rows) {
    by_step[r.env_step][r.seed] = &r;
    seeds[r.seed] = true;
  }
  MeanCurve c;
  for (const auto& [step, per_seed] : by_step) {
    if (per_seed.size() != seeds.size()) continue;
    double ret = 0.0, succ = 0.0;
    for (const auto& [s, r] : per_seed) {
      ret += r->mean_test_return;
      succ += r->success_rate;
    }
    c.env_step.push_back(static_cast<double>(step));
    c.mean_return.push_back(ret / static_cast<double>(per_seed.size()));
    c.success_rate.push_back(succ / static_cast<double>(per_seed.size()));
  }
  return c;
}

std::filesystem::path resolve_out_dir(const std::string& out_dir) {
  const std::filesystem::path p(out_dir);
  if (const char* root = std::getenv("MACTAS_OUT_ROOT"); root && *root && p.is_relative())
    return std::filesystem::path(root) / p;
  return p;
}

std::vector<MetricRow> cmd_train(const RunConfig& config, const std::filesystem::path& out, bool resume,
                                 std::ostream& log) {
  config.validate();
  std::filesystem::create_directories(out);
  write_text(out / "config.json", to_json(config).dump(2) + "\n");
  std::vector<MetricRow> all;
  for (std::uint64_t seed : config.seeds) {
    Trainer trainer(config, seed);
    const auto seed_dir = out / ("seed_" + std::to_string(seed));
    const auto stem = seed_dir / "checkpoint";
    if (resume && std::filesystem::exists(std::filesystem::path(stem).concat(".bin"))) {
      trainer.load(stem);
      log << "seed " << seed << ": resumed at env step " << trainer.env_steps() << "\n";
    }
    trainer.run(config.total_env_steps);
    trainer.save(stem);
    const auto& last = trainer.rows().back();
    log << "seed " << seed << ": " << trainer.env_steps() << " env steps, final test return "
        << fmt(last.mean_test_return) << ", success " << fmt(last.success_rate) << "\n";
    all.insert(all.end(), trainer.rows().begin(), trainer.rows().end());
  }
  std::string csv = std::string(kMetricsHeader) + "\n";
  for (const auto& r : all) csv += to_csv(r) + "\n";
  write_text(out / "metrics.csv", csv);
  return all;
}

void SweepGrid::validate() const {
  if (cells() == 0) throw UsageError("sweep: the grid is empty");
}

std::size_t SweepGrid::cells() const {
  if (layers.empty() && ffn_dim.empty() && dropout.empty() && temperature.empty()) return 0;
  auto count = [](std::size_t n) { return n == 0 ? std::size_t{1} : n; };
  return count(layers.size()) * count(ffn_dim.size()) * count(dropout.size()) * count(temperature.size());
}

std::vector<SweepCell> expand_grid(const RunConfig& base, const SweepGrid& grid) {
  grid.validate();
  auto axis = [](const auto& values, auto base_value) {
    using T = decltype(base_value);
    return values.empty() ? std::vector<T>{base_value} : std::vector<T>(values.begin(), values.end());
  };
  const auto L = axis(grid.layers, base.comm.layers);
  const auto F = axis(grid.ffn_dim, base.comm.ffn_dim);
  const auto D = axis(grid.dropout, base.comm.dropout);
  const auto T = axis(grid.temperature, base.explore.temperature);
  std::vector<SweepCell> cells;
  for (auto l : L)
    for (auto f : F)
      for (auto d : D)
        for (auto t : T) {
          SweepCell c;
          c.config = base;
          c.config.comm.layers = l;
          c.config.comm.ffn_dim = f;
          c.config.comm.dropout = d;
          c.config.explore.temperature = t;
          if (!grid.temperature.empty()) c.config.explore.mode = ExploreMode::topk;
          c.config.validate();
          c.name = "layers" + std::to_string(l) + "_ffn" + std::to_string(f) + "_drop" + fmt(d) + "_temp" + fmt(t);
          cells.push_back(std::move(c));
        }
  return cells;
}

std::vector<SweepCell> cmd_sweep(const RunConfig& base, const SweepGrid& grid, const std::filesystem::path& out,
                                 std::ostream& log) {
  auto cells = expand_grid(base, grid);
  std::filesystem::create_directories(out);
  std::string csv = "cell,layers,ffn_dim,dropout,temperature,auc,final_return,final_success\n";
  for (auto& c : cells) {
    log << "cell " << c.name << "\n";
    const auto rows = cmd_train(c.config, out / c.name, false, log);
    const MeanCurve curve = mean_curve(rows);
    c.auc = trapezoid_auc(curve.env_step, curve.mean_return);
    c.final_return = curve.mean_return.empty() ? 0.0 : curve.mean_return.back();
    c.final_success = curve.success_rate.empty() ? 0.0 : curve.success_rate.back();
    csv += c.name + "," + std::to_string(c.config.comm.layers) + "," + std::to_string(c.config.comm.ffn_dim) + "," +
           fmt(c.config.comm.dropout) + "," + fmt(c.config.explore.temperature) + "," + fmt(c.auc) + "," +
           fmt(c.final_return) + "," + fmt(c.final_success) + "\n";
  }
  write_text(out / "summary.csv", csv);
  return cells;
}

EvalResult cmd_eval(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& checkpoint_stem,
                    const std::optional<Topology>& topology, std::size_t episodes, const std::filesystem::path& out) {
  Trainer trainer(config, seed);
  trainer.load(checkpoint_stem);
  Networks& nets = trainer.learner().online();
  Environment& env = trainer.env();
  if (topology && topology->size() != env.n_agents())
    throw DimensionError("eval: topology has " + std::to_string(topology->size()) + " agents, environment has " +
                         std::to_string(env.n_agents()));

  EvalResult result;
  result.mode = !nets.comm || !nets.flags.use_comm ? "none" : topology ? "distributed" : "centralized";
  std::vector<TrafficStats> per_step;
  CommOverride simulated = [&](const Matrix& h) {
    RoundResult r = topology ? distributed_round(*nets.comm, h, *topology) : centralized_round(*nets.comm, h);
    per_step.push_back(r.stats);
    return r.increments;
  };
  const CommOverride* override_ptr = result.mode == "none" ? nullptr : &simulated;

  std::string traffic_csv = "episode,step,mode,messages,floats_transferred,rounds\n";
  const ExplorationConfig greedy{0.0, 1, 0.0};
  for (std::size_t j = 0; j < episodes; ++j) {
    per_step.clear();
    const auto o = run_episode(env, nets, hash_keys({seed, kTestEpisode, ~std::uint64_t{0}, j}), greedy, 0, 0,
                               override_ptr);
    result.summary.mean_return += o.episode_return;
    result.summary.success_rate += o.success ? 1.0 : 0.0;
    for (std::size_t t = 0; t < per_step.size(); ++t) {
      result.traffic += per_step[t];
      traffic_csv += std::to_string(j) + "," + std::to_string(t) + "," + result.mode + "," +
                     std::to_string(per_step[t].messages) + "," + std::to_string(per_step[t].floats_transferred) +
                     "," + std::to_string(per_step[t].rounds) + "\n";
    }
  }
  if (episodes > 0) {
    result.summary.mean_return /= static_cast<double>(episodes);
    result.summary.success_rate /= static_cast<double>(episodes);
  }
  std::filesystem::create_directories(out);
  write_text(out / "traffic.csv", traffic_csv);
  const json report = {{"seed", seed},
                       {"episodes", episodes},
                       {"mode", result.mode},
                       {"mean_return", result.summary.mean_return},
                       {"success_rate", result.summary.success_rate},
                       {"messages", result.traffic.messages},
                       {"floats_transferred", result.traffic.floats_transferred},
                       {"rounds", result.traffic.rounds}};
  write_text(out / "eval.json", report.dump(2) + "\n");
  return result;
}

}  // namespace mactas
