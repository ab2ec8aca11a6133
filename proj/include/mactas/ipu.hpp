#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "mactas/comm.hpp"

namespace mactas {

// Directed reachability between agents: receives(i, j) means agent i hears
// agent j. Every agent always hears itself.
class Topology {
 public:
  Topology() = default;
  explicit Topology(std::size_t n);  // fully connected
  Topology(std::size_t n, std::vector<std::uint8_t> reach);

  static Topology full(std::size_t n) { return Topology(n); }
  // {"n": 4, "reach": [[1,1,0,1], ...]}, row i lists whom agent i hears.
  // Alternatively {"n": 4, "edges": [[from, to], ...]} on top of the diagonal.
  static Topology from_json(const nlohmann::json& j);
  static Topology load(const std::filesystem::path& path);

  std::size_t size() const { return n_; }
  bool receives(std::size_t i, std::size_t j) const { return reach_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v);
  // Cuts every link into and out of `agent` (except its self-loop).
  void isolate(std::size_t agent);

  // Agents i hears, in ascending order (always contains i).
  std::vector<std::size_t> in_neighbourhood(std::size_t i) const;
  std::size_t directed_links() const;  // off-diagonal edges
  ad::AttentionMask as_mask() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> reach_;
};

struct TrafficStats {
  std::uint64_t messages = 0;
  std::uint64_t floats_transferred = 0;
  std::uint64_t rounds = 0;

  TrafficStats& operator+=(const TrafficStats& o) {
    messages += o.messages;
    floats_transferred += o.floats_transferred;
    rounds += o.rounds;
    return *this;
  }
  friend bool operator==(const TrafficStats&, const TrafficStats&) = default;
};

struct RoundResult {
  Matrix increments;  // n x n_h
  TrafficStats stats;
};

// Every agent uploads h_i to the processing unit, which runs the whole block and
// sends z_i back: 2n messages of n_h floats, one round.
RoundResult centralized_round(CommModule& comm, const Matrix& h);

// Each agent computes its own row. Per encoder layer every agent sends its
// current row to everyone who hears it, then updates its row from what it
// received; the output projection is applied locally. Agents within a layer
// run concurrently and layers are barrier-separated.
RoundResult distributed_round(CommModule& comm, const Matrix& h, const Topology& topology);

}  // namespace mactas
