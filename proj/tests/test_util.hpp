#pragma once

#include <functional>
#include <random>
#include <vector>

#include "mactas/autodiff.hpp"
#include "mactas/gradcheck.hpp"

namespace mactas::tu {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

// Reduces an op's output to a scalar with fixed random weights so that every
// output entry carries a distinct upstream gradient.
inline Var weighted_sum(Tape& tape, Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Var w = tape.constant(random_matrix(out.rows(), out.cols(), rng));
  return ad::sum(ad::mul(out, w));
}

// Worst relative error between autodiff and finite differences for a scalar
// function of `params`, built afresh on every call.
inline double param_gradient_error(const std::function<Var(Tape&)>& build, std::vector<Parameter*> params,
                                   double step = 1e-4) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(build(tape));
  }
  auto f = [&] {
    Tape tape(false);
    return build(tape).value()(0, 0);
  };
  const auto numeric = finite_difference_gradient(f, params, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    worst = std::max(worst, max_relative_error(params[i]->grad, numeric[i]));
  return worst;
}

// Same for an op of one input matrix.
inline double op_gradient_error(const std::function<Var(Tape&, Var)>& op, const Matrix& x, std::uint64_t seed = 99) {
  Parameter p("x", x);
  return param_gradient_error([&](Tape& t) { return weighted_sum(t, op(t, t.param(p)), seed); }, {&p});
}

}  // namespace mactas::tu
