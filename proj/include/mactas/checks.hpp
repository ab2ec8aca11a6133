#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace mactas {

struct CheckOptions {
  std::uint64_t seed = 7;
  // Deliberate faults; each must make at least one check fail.
  bool qmix_without_abs = false;
  bool comm_nonzero_init = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured statistic
  double tolerance = 0.0;  // bound it was compared against
  std::string detail;
};

struct CheckReport {
  std::vector<CheckResult> results;

  bool passed() const;
  nlohmann::json to_json() const;
};

// Autodiff vs central differences, worst relative error over all parameters.
double dense_gradient_error(std::uint64_t seed);
double gru_gradient_error(std::uint64_t seed);
double attention_gradient_error(std::uint64_t seed);
double encoder_gradient_error(std::uint64_t seed);
double qmix_gradient_error(std::uint64_t seed, bool positive_weights = true);
// Full TD loss of a two-agent batch through mixer, Q head, communication, GRU
// (through time) and input layer, dropout active with fixed masks.
double td_loss_gradient_error(std::uint64_t seed);

// Every invariant on randomized instances drawn from options.seed.
CheckReport run_checks(const CheckOptions& options);

}  // namespace mactas
