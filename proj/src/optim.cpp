#include "mactas/optim.hpp"

#include <cmath>

#include "mactas/errors.hpp"

namespace mactas {

void Optimizer::step(std::span<Parameter* const> params) {
  if (first_.empty() && second_.empty()) {
    for (const auto* p : params) {
      first_.emplace_back(p->value.rows(), p->value.cols());
      second_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (second_.size() != params.size())
    throw ContractViolation("Optimizer::step: parameter list changed size between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (!p.has_grad) throw ContractViolation("Optimizer::step: no gradient for parameter '" + p.name + "'");
    if (!second_[i].same_shape(p.value))
      throw ContractViolation("Optimizer::step: accumulator shape mismatch for '" + p.name + "'");
  }
  ++steps_;
  const double lr = config_.lr;
  if (config_.kind == OptimizerKind::adam) {
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      Matrix& m = first_[i];
      Matrix& v = second_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j];
        m[j] = b1 * m[j] + (1.0 - b1) * g;
        v[j] = b2 * v[j] + (1.0 - b2) * g * g;
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        p.value[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
      }
      p.zero_grad();
    }
  } else {
    const double decay = config_.beta2;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      Matrix& v = second_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = p.grad[j];
        v[j] = decay * v[j] + (1.0 - decay) * g * g;
        p.value[j] -= lr * g / std::sqrt(v[j] + config_.eps);
      }
      p.zero_grad();
    }
  }
}

void Optimizer::restore(std::uint64_t steps, std::vector<Matrix> first, std::vector<Matrix> second) {
  if (first.size() != second.size()) throw ContractViolation("Optimizer::restore: moment lists differ in length");
  steps_ = steps;
  first_ = std::move(first);
  second_ = std::move(second);
}

double global_grad_norm(std::span<Parameter* const> params) {
  double s = 0.0;
  for (const auto* p : params)
    for (double g : p->grad.values()) s += g * g;
  return std::sqrt(s);
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / (norm + 1e-6);
    for (auto* p : params) p->grad *= f;
  }
  return norm;
}

}  // namespace mactas
