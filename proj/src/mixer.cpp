#include "mactas/mixer.hpp"

#include "mactas/errors.hpp"

namespace mactas {

MixerKind parse_mixer_kind(const std::string& s) {
  if (s == "vdn") return MixerKind::vdn;
  if (s == "qmix") return MixerKind::qmix;
  throw ConfigError("unknown mixer '" + s + "' (expected vdn or qmix)");
}

std::string to_string(MixerKind k) { return k == MixerKind::vdn ? "vdn" : "qmix"; }

Mixer Mixer::vdn(std::size_t n_agents) {
  if (n_agents == 0) throw ConfigError("Mixer: team must have at least one agent");
  Mixer m;
  m.kind_ = MixerKind::vdn;
  m.n_agents_ = n_agents;
  return m;
}

Mixer Mixer::qmix(std::size_t n_agents, std::size_t state_dim, std::uint64_t seed, QmixConfig config) {
  if (n_agents == 0 || state_dim == 0) throw ConfigError("Mixer: QMIX needs agents and a non-empty state");
  Mixer m;
  m.kind_ = MixerKind::qmix;
  m.n_agents_ = n_agents;
  m.state_dim_ = state_dim;
  m.qmix_ = config;
  InitRng rng(hash_keys({seed, 0x9a1cULL}));
  const auto e = config.embed_dim, h = config.hypernet_dim;
  m.hyper_w1_a_ = Dense("mixer.hyper_w1.0", state_dim, h, ParamGroup::main, rng);
  m.hyper_w1_b_ = Dense("mixer.hyper_w1.1", h, n_agents * e, ParamGroup::main, rng);
  m.hyper_b1_ = Dense("mixer.hyper_b1", state_dim, e, ParamGroup::main, rng);
  m.hyper_w2_a_ = Dense("mixer.hyper_w2.0", state_dim, h, ParamGroup::main, rng);
  m.hyper_w2_b_ = Dense("mixer.hyper_w2.1", h, e, ParamGroup::main, rng);
  m.v_a_ = Dense("mixer.value.0", state_dim, e, ParamGroup::main, rng);
  m.v_b_ = Dense("mixer.value.1", e, 1, ParamGroup::main, rng);
  return m;
}

Var Mixer::forward(Tape& tape, Var q_chosen, Var state) {
  if (q_chosen.cols() != n_agents_)
    throw DimensionError("Mixer: expected " + std::to_string(n_agents_) + " local values per team, got " +
                         q_chosen.value().shape_string());
  if (kind_ == MixerKind::vdn) {
    // Row sums as a column: reshape to (B*n) x 1 and sum consecutive groups.
    return ad::group_sum(ad::reshape(q_chosen, q_chosen.rows() * n_agents_, 1), n_agents_);
  }
  if (state.cols() != state_dim_ || state.rows() != q_chosen.rows())
    throw DimensionError("Mixer: state " + state.value().shape_string() + " does not match " +
                         std::to_string(q_chosen.rows()) + " teams of state width " + std::to_string(state_dim_));
  auto positive = [&](Var w) { return qmix_.positive_weights ? ad::abs(w) : w; };
  Var w1 = positive(hyper_w1_b_.forward(tape, ad::relu(hyper_w1_a_.forward(tape, state))));
  Var b1 = hyper_b1_.forward(tape, state);
  Var hidden = ad::elu(ad::add(ad::rowwise_vecmat(q_chosen, w1, qmix_.embed_dim), b1));
  Var w2 = positive(hyper_w2_b_.forward(tape, ad::relu(hyper_w2_a_.forward(tape, state))));
  Var v = v_b_.forward(tape, ad::relu(v_a_.forward(tape, state)));
  return ad::add(ad::rowwise_dot(hidden, w2), v);
}

double Mixer::mix(std::span<const double> q_locals, std::span<const double> state) {
  if (q_locals.size() != n_agents_)
    throw DimensionError("Mixer::mix: expected " + std::to_string(n_agents_) + " local values, got " +
                         std::to_string(q_locals.size()));
  if (kind_ == MixerKind::vdn) {
    double s = 0.0;
    for (double q : q_locals) s += q;
    return s;
  }
  if (state.size() != state_dim_)
    throw DimensionError("Mixer::mix: state width " + std::to_string(state.size()) + " but expected " +
                         std::to_string(state_dim_));
  Tape tape(false);
  Var q = tape.constant(Matrix(1, q_locals.size(), std::vector<double>(q_locals.begin(), q_locals.end())));
  Var s = tape.constant(Matrix(1, state.size(), std::vector<double>(state.begin(), state.end())));
  return forward(tape, q, s).value()[0];
}

}  // namespace mactas
