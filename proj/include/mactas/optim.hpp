#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mactas/autodiff.hpp"

namespace mactas {

enum class OptimizerKind { adam, rmsprop };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 5e-4;
  double beta1 = 0.9;    // Adam first-moment decay
  double beta2 = 0.999;  // Adam second-moment decay; RMSProp squared-gradient decay
  double eps = 1e-8;

  static OptimizerConfig adam(double lr = 5e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    return {OptimizerKind::adam, lr, beta1, beta2, eps};
  }
  // p -= lr * g / sqrt(v + eps), v = decay * v + (1 - decay) * g^2
  static OptimizerConfig rmsprop(double lr = 5e-4, double decay = 0.99, double eps = 1e-5) {
    return {OptimizerKind::rmsprop, lr, 0.0, decay, eps};
  }
};

// Optimizer state for one parameter group. Accumulators are bound by position
// to the parameter list passed to step(); the list must keep its order.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  // Applies one update and clears the gradients. Throws ContractViolation if any
  // parameter has no gradient or the list no longer matches the accumulators.
  void step(std::span<Parameter* const> params);

  const OptimizerConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::uint64_t step_count() const { return steps_; }

  // Adam: first and second moments. RMSProp: only `second` is used.
  const std::vector<Matrix>& first_moments() const { return first_; }
  const std::vector<Matrix>& second_moments() const { return second_; }
  void restore(std::uint64_t steps, std::vector<Matrix> first, std::vector<Matrix> second);

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

double global_grad_norm(std::span<Parameter* const> params);
// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace mactas
