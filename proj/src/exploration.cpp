#include "mactas/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mactas/errors.hpp"
#include "mactas/rng.hpp"

namespace mactas {

void ExplorationConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("exploration: epsilon must lie in [0, 1]");
  if (k < 1) throw ConfigError("exploration: k must be >= 1");
  if (!(temperature >= 0.0)) throw ConfigError("exploration: temperature must be >= 0");
}

std::vector<std::size_t> ranked_available(std::span<const double> q, std::span<const std::uint8_t> available) {
  if (q.size() != available.size()) throw DimensionError("exploration: Q and availability widths differ");
  std::vector<std::size_t> idx;
  for (std::size_t a = 0; a < q.size(); ++a)
    if (available[a]) idx.push_back(a);
  if (idx.empty()) throw ContractViolation("exploration: no available action");
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return q[x] > q[y]; });
  return idx;
}

std::vector<double> action_distribution(std::span<const double> q, std::span<const std::uint8_t> available,
                                        const ExplorationConfig& config) {
  config.validate();
  const auto ranked = ranked_available(q, available);
  std::vector<double> p(q.size(), 0.0);
  const double uniform = config.epsilon / static_cast<double>(ranked.size());
  for (auto a : ranked) p[a] = uniform;

  const std::size_t top = std::min(config.k, ranked.size());
  const double greedy_mass = 1.0 - config.epsilon;
  if (top == 1 || config.temperature == 0.0) {
    p[ranked.front()] += greedy_mass;
    return p;
  }
  const double best = q[ranked.front()];
  std::vector<double> w(top);
  for (std::size_t r = 0; r < top; ++r) w[r] = std::exp((q[ranked[r]] - best) / config.temperature);
  const double z = std::accumulate(w.begin(), w.end(), 0.0);
  for (std::size_t r = 0; r < top; ++r) p[ranked[r]] += greedy_mass * w[r] / z;
  return p;
}

std::size_t sample_action(std::span<const double> probs, double u) {
  double c = 0.0;
  std::size_t last = probs.size();
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (probs[a] <= 0.0) continue;
    c += probs[a];
    last = a;
    if (u < c) return a;
  }
  if (last == probs.size()) throw ContractViolation("sample_action: empty distribution");
  return last;  // u landed in round-off slack above the cumulative sum
}

std::size_t select_action(std::span<const double> q, std::span<const std::uint8_t> available,
                          const ExplorationConfig& config, std::uint64_t seed, std::uint64_t agent,
                          std::uint64_t step) {
  const auto p = action_distribution(q, available, config);
  const double u = unit_from_bits(hash_keys({seed, agent, step}));
  return sample_action(p, u);
}

std::size_t greedy_action(std::span<const double> q, std::span<const std::uint8_t> available) {
  return ranked_available(q, available).front();
}

}  // namespace mactas
