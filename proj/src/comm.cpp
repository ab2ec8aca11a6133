#include "mactas/comm.hpp"

#include <string>

#include "mactas/errors.hpp"

namespace mactas {

void CommConfig::validate() const {
  if (num_layers < 1) throw ConfigError("CommConfig: num_layers must be >= 1");
  if (model_dim == 0 || ffn_dim == 0) throw ConfigError("CommConfig: model_dim and ffn_dim must be positive");
  if (heads == 0 || model_dim % heads != 0)
    throw ConfigError("CommConfig: model_dim " + std::to_string(model_dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("CommConfig: dropout must lie in [0, 1)");
}

CommModule::CommModule(const CommConfig& config, std::uint64_t seed, bool zero_output_init) : config_(config) {
  config_.validate();
  InitRng rng(hash_keys({seed, 0xc0337ULL}));
  for (std::size_t l = 0; l < config_.num_layers; ++l)
    layers_.emplace_back("comm.layer" + std::to_string(l), config_.model_dim, config_.heads, config_.ffn_dim,
                         config_.dropout, l + 1, ParamGroup::comm, rng);
  if (zero_output_init)
    output_ = Dense::zeros("comm.output", config_.model_dim, config_.model_dim, ParamGroup::comm);
  else
    output_ = Dense("comm.output", config_.model_dim, config_.model_dim, ParamGroup::comm, rng);
}

Var CommModule::forward(Tape& tape, Var h, std::size_t group, ForwardContext& ctx, const ad::AttentionMask* mask) {
  if (h.cols() != config_.model_dim)
    throw DimensionError("communicate: hidden width " + std::to_string(h.cols()) + " but model_dim is " +
                         std::to_string(config_.model_dim));
  Var x = h;
  for (auto& layer : layers_) x = layer.forward(tape, x, group, ctx, mask);
  return output_.forward(tape, x);
}

std::size_t CommModule::expected_param_count(const CommConfig& c) {
  const std::size_t d = c.model_dim, f = c.ffn_dim;
  const std::size_t layer = 2 * d            // ln1
                            + 3 * d * d + 3 * d  // qkv
                            + d * d + d          // attention output
                            + 2 * d              // ln2
                            + d * f + f          // ffn in
                            + f * d + d;         // ffn out
  return c.num_layers * layer + d * d + d;
}

Matrix communicate(CommModule& comm, const Matrix& h, ForwardContext& ctx, const ad::AttentionMask* mask) {
  Tape tape(false);
  return comm.forward(tape, tape.constant(h), h.rows(), ctx, mask).value();
}

}  // namespace mactas
