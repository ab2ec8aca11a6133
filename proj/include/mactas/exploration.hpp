#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mactas {

// epsilon-greedy mixed with Boltzmann sampling restricted to the k best
// available actions. k = 1 or temperature = 0 reduce to plain epsilon-greedy.
struct ExplorationConfig {
  double epsilon = 0.0;
  std::size_t k = 1;
  double temperature = 0.0;

  void validate() const;
};

// Available actions ordered by (value descending, index ascending).
std::vector<std::size_t> ranked_available(std::span<const double> q, std::span<const std::uint8_t> available);

// p = eps * Uniform(available) + (1 - eps) * softmax(q_top / tau) over the top
// min(k, |available|) actions. Unavailable actions get exactly zero.
// Throws ContractViolation when nothing is available.
std::vector<double> action_distribution(std::span<const double> q, std::span<const std::uint8_t> available,
                                        const ExplorationConfig& config);

// Samples action_distribution with one uniform draw u in [0, 1).
std::size_t sample_action(std::span<const double> probs, double u);

// Per-agent stream keyed by (seed, agent, step).
std::size_t select_action(std::span<const double> q, std::span<const std::uint8_t> available,
                          const ExplorationConfig& config, std::uint64_t seed, std::uint64_t agent,
                          std::uint64_t step);

std::size_t greedy_action(std::span<const double> q, std::span<const std::uint8_t> available);

}  // namespace mactas
