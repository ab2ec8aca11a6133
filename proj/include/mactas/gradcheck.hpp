#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mactas/autodiff.hpp"

namespace mactas {

// Fourth-order central-difference estimate of d f / d p for every entry of every parameter.
// `f` must be deterministic; parameters are restored after each probe.
std::vector<Matrix> finite_difference_gradient(const std::function<double()>& f,
                                               std::span<Parameter* const> params, double step = 1e-4);

// Same for a free input matrix.
Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                  double step = 1e-4);

// Entry-wise relative error |a - b| / max(|a|, |b|, floor), maximised over the matrix.
// The floor keeps entries that are zero up to round-off from dominating.
double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-6);

}  // namespace mactas
