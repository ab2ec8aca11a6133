#include "mactas/layers.hpp"

#include <cmath>

#include "mactas/errors.hpp"

namespace mactas {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, InitRng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

Dense::Dense(const std::string& name, std::size_t in, std::size_t out, ParamGroup group, InitRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Parameter(name + ".weight", uniform_matrix(out, in, bound, rng), group);
  bias = Parameter(name + ".bias", uniform_matrix(1, out, bound, rng), group);
}

Dense Dense::zeros(const std::string& name, std::size_t in, std::size_t out, ParamGroup group) {
  Dense d;
  d.weight = Parameter(name + ".weight", Matrix(out, in), group);
  d.bias = Parameter(name + ".bias", Matrix(1, out), group);
  return d;
}

Var Dense::forward(Tape& tape, Var x) { return ad::linear(x, tape.param(weight), tape.param(bias)); }

GruCell::GruCell(const std::string& name, std::size_t in, std::size_t hidden, ParamGroup group, InitRng& rng) {
  const double bi = 1.0 / std::sqrt(static_cast<double>(in));
  const double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_ih = Parameter(name + ".w_ih", uniform_matrix(3 * hidden, in, bi, rng), group);
  w_hh = Parameter(name + ".w_hh", uniform_matrix(3 * hidden, hidden, bh, rng), group);
  b_ih = Parameter(name + ".b_ih", uniform_matrix(1, 3 * hidden, bi, rng), group);
  b_hh = Parameter(name + ".b_hh", uniform_matrix(1, 3 * hidden, bh, rng), group);
}

Var GruCell::forward(Tape& tape, Var x, Var h_prev) {
  const std::size_t H = hidden_dim();
  if (h_prev.cols() != H)
    throw DimensionError("GruCell: hidden state width " + std::to_string(h_prev.cols()) + " but n_h = " +
                         std::to_string(H));
  if (x.cols() != in_dim())
    throw DimensionError("GruCell: input width " + std::to_string(x.cols()) + " but expected " +
                         std::to_string(in_dim()));
  if (x.rows() != h_prev.rows()) throw DimensionError("GruCell: batch size of input and hidden state differ");
  Var gi = ad::linear(x, tape.param(w_ih), tape.param(b_ih));
  Var gh = ad::linear(h_prev, tape.param(w_hh), tape.param(b_hh));
  Var r = ad::sigmoid(ad::add(ad::slice_cols(gi, 0, H), ad::slice_cols(gh, 0, H)));
  Var u = ad::sigmoid(ad::add(ad::slice_cols(gi, H, 2 * H), ad::slice_cols(gh, H, 2 * H)));
  Var c = ad::tanh(ad::add(ad::slice_cols(gi, 2 * H, 3 * H), ad::mul(r, ad::slice_cols(gh, 2 * H, 3 * H))));
  return ad::add(ad::mul(ad::one_minus(u), c), ad::mul(u, h_prev));
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim, ParamGroup group)
    : gamma(name + ".gamma", Matrix(1, dim, 1.0), group), beta(name + ".beta", Matrix(1, dim), group) {}

Var LayerNorm::forward(Tape& tape, Var x) { return ad::layer_norm(x, tape.param(gamma), tape.param(beta)); }

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t heads_,
                                       ParamGroup group, InitRng& rng)
    : heads(heads_) {
  if (heads == 0 || dim % heads != 0)
    throw ConfigError("MultiHeadAttention: model width " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  w_qkv = Parameter(name + ".w_qkv", uniform_matrix(3 * dim, dim, bound, rng), group);
  b_qkv = Parameter(name + ".b_qkv", uniform_matrix(1, 3 * dim, bound, rng), group);
  out = Dense(name + ".out", dim, dim, group, rng);
}

Var MultiHeadAttention::forward(Tape& tape, Var h, std::size_t group, const ad::AttentionMask* mask) {
  const std::size_t d = dim();
  if (h.cols() != d)
    throw DimensionError("MultiHeadAttention: input width " + std::to_string(h.cols()) + " but model width " +
                         std::to_string(d));
  Var qkv = ad::linear(h, tape.param(w_qkv), tape.param(b_qkv));
  Var o = ad::attention(ad::slice_cols(qkv, 0, d), ad::slice_cols(qkv, d, 2 * d), ad::slice_cols(qkv, 2 * d, 3 * d),
                        group, heads, mask);
  return out.forward(tape, o);
}

EncoderLayer::EncoderLayer(const std::string& name, std::size_t dim, std::size_t heads, std::size_t ffn_dim,
                           double dropout_, std::uint64_t site_, ParamGroup group, InitRng& rng)
    : ln1(name + ".ln1", dim, group),
      ln2(name + ".ln2", dim, group),
      attn(name + ".attn", dim, heads, group, rng),
      ffn_in(name + ".ffn_in", dim, ffn_dim, group, rng),
      ffn_out(name + ".ffn_out", ffn_dim, dim, group, rng),
      dropout(dropout_),
      site(site_) {}

Var EncoderLayer::forward(Tape& tape, Var x, std::size_t group, ForwardContext& ctx,
                          const ad::AttentionMask* mask) {
  const double rate = ctx.train ? dropout : 0.0;
  auto drop = [&](Var v, std::uint64_t sub) { return rate > 0.0 ? ad::dropout(v, rate, ctx.next_key(site * 4 + sub)) : v; };
  Var a = drop(attn.forward(tape, ln1.forward(tape, x), group, mask), 0);
  Var x1 = ad::add(x, a);
  Var f = drop(ad::relu(ffn_in.forward(tape, ln2.forward(tape, x1))), 1);
  f = drop(ffn_out.forward(tape, f), 2);
  return ad::add(x1, f);
}

}  // namespace mactas
