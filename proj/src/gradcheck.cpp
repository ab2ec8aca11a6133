#include "mactas/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mactas {

namespace {

// Fourth-order central difference: (8 (f(h) - f(-h)) - (f(2h) - f(-2h))) / 12h.
// When the h and 2h two-point estimates disagree the stencil straddles a kink
// (relu, abs); the estimate is then redone with a step 100x smaller.
template <class F>
double stencil(F&& at, double h) {
  for (int attempt = 0;; ++attempt, h *= 0.01) {
    const double d1 = at(h) - at(-h);
    const double d2 = at(2.0 * h) - at(-2.0 * h);
    const double small = d1 / (2.0 * h), large = d2 / (4.0 * h);
    if (attempt == 2 || std::abs(small - large) <= 1e-7 + 1e-5 * std::abs(small))
      return (8.0 * d1 - d2) / (12.0 * h);
  }
}

}  // namespace

std::vector<Matrix> finite_difference_gradient(const std::function<double()>& f,
                                               std::span<Parameter* const> params, double step) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (auto* p : params) {
    Matrix g(p->value.rows(), p->value.cols());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      g[i] = stencil([&](double delta) {
        p->value[i] = orig + delta;
        return f();
      }, step);
      p->value[i] = orig;
    }
    out.push_back(std::move(g));
  }
  return out;
}

Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double step) {
  Matrix probe = x;
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g[i] = stencil([&](double delta) {
      probe[i] = x[i] + delta;
      return f(probe);
    }, step);
    probe[i] = x[i];
  }
  return g;
}

double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  require_shape(analytic.same_shape(numeric), "max_relative_error", analytic, numeric);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

}  // namespace mactas
