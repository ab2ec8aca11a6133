#pragma once

#include <span>
#include <string>

#include "mactas/layers.hpp"

namespace mactas {

enum class MixerKind { vdn, qmix };

MixerKind parse_mixer_kind(const std::string& s);
std::string to_string(MixerKind k);

struct QmixConfig {
  std::size_t embed_dim = 32;
  std::size_t hypernet_dim = 64;
  // Absolute value on hypernetwork weight outputs. Disabling it breaks
  // monotonicity and exists only for fault-injection checks.
  bool positive_weights = true;
};

// Maps the chosen local Q values of B teams (B x n) and their global states
// (B x state_dim) to joint values (B x 1).
//
// VDN: Q_tot = sum_i q_i (no parameters).
// QMIX: Q_tot = elu(q W1 + b1) . w2 + V(s), with W1 = |Hw1(s)|, w2 = |Hw2(s)|,
// Hw1/Hw2 two-layer hypernetworks, b1 linear in s and V a two-layer network.
class Mixer {
 public:
  Mixer() = default;
  static Mixer vdn(std::size_t n_agents);
  static Mixer qmix(std::size_t n_agents, std::size_t state_dim, std::uint64_t seed, QmixConfig config = {});

  MixerKind kind() const { return kind_; }
  std::size_t n_agents() const { return n_agents_; }
  std::size_t state_dim() const { return state_dim_; }
  const QmixConfig& qmix_config() const { return qmix_; }

  Var forward(Tape& tape, Var q_chosen, Var state);
  // Single team convenience.
  double mix(std::span<const double> q_locals, std::span<const double> state);

  std::size_t param_count() const { return scalar_count(*this); }

  // Direct access to the hypernetwork layers (tests zero them out).
  Dense& hyper_w1_hidden() { return hyper_w1_a_; }
  Dense& hyper_w1() { return hyper_w1_b_; }
  Dense& hyper_b1() { return hyper_b1_; }
  Dense& hyper_w2_hidden() { return hyper_w2_a_; }
  Dense& hyper_w2() { return hyper_w2_b_; }
  Dense& value_hidden() { return v_a_; }
  Dense& value_out() { return v_b_; }

  template <class F>
  void visit(F&& f) {
    if (kind_ != MixerKind::qmix) return;
    hyper_w1_a_.visit(f);
    hyper_w1_b_.visit(f);
    hyper_b1_.visit(f);
    hyper_w2_a_.visit(f);
    hyper_w2_b_.visit(f);
    v_a_.visit(f);
    v_b_.visit(f);
  }

 private:
  MixerKind kind_ = MixerKind::vdn;
  std::size_t n_agents_ = 0;
  std::size_t state_dim_ = 0;
  QmixConfig qmix_;
  Dense hyper_w1_a_, hyper_w1_b_, hyper_b1_, hyper_w2_a_, hyper_w2_b_, v_a_, v_b_;
};

}  // namespace mactas
