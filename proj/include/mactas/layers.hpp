#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mactas/autodiff.hpp"
#include "mactas/rng.hpp"

namespace mactas {

// Per-forward state: train/eval switch plus the counter-based dropout stream.
// Every dropout site draws a fresh key from (seed, step, site, call index), so a
// forward pass is a pure function of (inputs, parameters, seed, step).
struct ForwardContext {
  bool train = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t calls = 0;

  static ForwardContext eval() { return {}; }
  static ForwardContext training(std::uint64_t seed, std::uint64_t step) { return {true, seed, step, 0}; }

  std::uint64_t next_key(std::uint64_t site) { return hash_keys({seed, step, site, calls++}); }
};

using InitRng = std::mt19937_64;

// Uniform(-bound, bound) fill.
Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound, InitRng& rng);

struct Dense {
  Parameter weight;  // out x in
  Parameter bias;    // 1 x out

  Dense() = default;
  // Weights and bias uniform in +-1/sqrt(in).
  Dense(const std::string& name, std::size_t in, std::size_t out, ParamGroup group, InitRng& rng);
  static Dense zeros(const std::string& name, std::size_t in, std::size_t out, ParamGroup group);

  std::size_t in_dim() const { return weight.value.cols(); }
  std::size_t out_dim() const { return weight.value.rows(); }
  Var forward(Tape& tape, Var x);

  template <class F>
  void visit(F&& f) {
    f(weight);
    f(bias);
  }
};

// GRU cell with gate order (reset, update, candidate):
//   r = sig(Wir x + bir + Whr h + bhr), u = sig(Wiz x + biz + Whz h + bhz)
//   c = tanh(Win x + bin + r * (Whn h + bhn)), h' = (1 - u) * c + u * h
struct GruCell {
  Parameter w_ih, w_hh, b_ih, b_hh;

  GruCell() = default;
  GruCell(const std::string& name, std::size_t in, std::size_t hidden, ParamGroup group, InitRng& rng);

  std::size_t in_dim() const { return w_ih.value.cols(); }
  std::size_t hidden_dim() const { return w_hh.value.cols(); }
  Var forward(Tape& tape, Var x, Var h_prev);

  template <class F>
  void visit(F&& f) {
    f(w_ih);
    f(w_hh);
    f(b_ih);
    f(b_hh);
  }
};

struct LayerNorm {
  Parameter gamma, beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim, ParamGroup group);
  Var forward(Tape& tape, Var x);

  template <class F>
  void visit(F&& f) {
    f(gamma);
    f(beta);
  }
};

// Multi-head self-attention over blocks of `group` rows.
struct MultiHeadAttention {
  Parameter w_qkv, b_qkv;  // (3d x d), (1 x 3d)
  Dense out;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t heads, ParamGroup group,
                     InitRng& rng);

  std::size_t dim() const { return w_qkv.value.cols(); }
  Var forward(Tape& tape, Var h, std::size_t group, const ad::AttentionMask* mask = nullptr);

  template <class F>
  void visit(F&& f) {
    f(w_qkv);
    f(b_qkv);
    out.visit(f);
  }
};

// Pre-normalisation transformer encoder layer:
//   X1 = X + Drop(Attn(LN1(X)));  X2 = X1 + Drop(W2 Drop(relu(W1 LN2(X1))))
struct EncoderLayer {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Dense ffn_in, ffn_out;
  double dropout = 0.0;
  std::uint64_t site = 0;  // distinguishes this layer's dropout streams

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, std::size_t dim, std::size_t heads, std::size_t ffn_dim,
               double dropout, std::uint64_t site, ParamGroup group, InitRng& rng);

  std::size_t dim() const { return attn.dim(); }
  Var forward(Tape& tape, Var x, std::size_t group, ForwardContext& ctx,
              const ad::AttentionMask* mask = nullptr);

  template <class F>
  void visit(F&& f) {
    ln1.visit(f);
    attn.visit(f);
    ln2.visit(f);
    ffn_in.visit(f);
    ffn_out.visit(f);
  }
};

template <class Module>
std::vector<Parameter*> parameters_of(Module& m) {
  std::vector<Parameter*> out;
  m.visit([&](Parameter& p) { out.push_back(&p); });
  return out;
}

template <class Module>
std::size_t scalar_count(const Module& m) {
  std::size_t n = 0;
  const_cast<Module&>(m).visit([&](Parameter& p) { n += p.value.size(); });
  return n;
}

}  // namespace mactas
