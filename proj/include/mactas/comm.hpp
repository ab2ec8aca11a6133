#pragma once

#include <cstdint>
#include <vector>

#include "mactas/layers.hpp"

namespace mactas {

struct CommConfig {
  std::size_t num_layers = 1;
  std::size_t ffn_dim = 128;
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  double dropout = 0.10;

  // Throws ConfigError on num_layers == 0, model_dim % heads != 0 or dropout outside [0, 1).
  void validate() const;
};

// Transformer-encoder communication block. Maps the stacked hidden states of a
// team (n x d) to per-agent increments (n x d). The final projection starts at
// exactly zero, so a freshly initialised block returns z == 0 for any input.
// All parameters belong to ParamGroup::comm and none depend on the team size.
class CommModule {
 public:
  CommModule() = default;
  // `zero_output_init = false` exists only for fault-injection checks.
  CommModule(const CommConfig& config, std::uint64_t seed, bool zero_output_init = true);

  const CommConfig& config() const { return config_; }

  // H holds consecutive teams of `group` rows.
  Var forward(Tape& tape, Var h, std::size_t group, ForwardContext& ctx,
              const ad::AttentionMask* mask = nullptr);

  std::size_t param_count() const { return scalar_count(*this); }
  // Closed-form count for a config; used to cross-check param_count().
  static std::size_t expected_param_count(const CommConfig& config);

  std::vector<EncoderLayer>& layers() { return layers_; }
  Dense& output() { return output_; }

  template <class F>
  void visit(F&& f) {
    for (auto& l : layers_) l.visit(f);
    output_.visit(f);
  }

 private:
  CommConfig config_;
  std::vector<EncoderLayer> layers_;
  Dense output_;
};

// One team, n x d in, n x d increments out.
Matrix communicate(CommModule& comm, const Matrix& h, ForwardContext& ctx,
                   const ad::AttentionMask* mask = nullptr);

}  // namespace mactas
