#include "mactas/ipu.hpp"

#include <fstream>

#include "mactas/errors.hpp"

namespace mactas {

Topology::Topology(std::size_t n) : n_(n), reach_(n * n, 1) {}

Topology::Topology(std::size_t n, std::vector<std::uint8_t> reach) : n_(n), reach_(std::move(reach)) {
  if (reach_.size() != n * n) throw DimensionError("Topology: reachability matrix must be n x n");
  for (std::size_t i = 0; i < n; ++i) reach_[i * n + i] = 1;
}

Topology Topology::from_json(const nlohmann::json& j) {
  for (const auto& [key, _] : j.items())
    if (key != "n" && key != "reach" && key != "edges") throw ConfigError("topology: unknown key '" + key + "'");
  if (!j.contains("n")) throw ConfigError("topology: missing 'n'");
  const auto n = j.at("n").get<std::size_t>();
  if (n == 0) throw ConfigError("topology: n must be positive");
  if (j.contains("reach") == j.contains("edges")) throw ConfigError("topology: give exactly one of 'reach' or 'edges'");
  std::vector<std::uint8_t> reach(n * n, 0);
  if (j.contains("reach")) {
    const auto& rows = j.at("reach");
    if (!rows.is_array() || rows.size() != n) throw ConfigError("topology: 'reach' must have n rows");
    for (std::size_t i = 0; i < n; ++i) {
      if (!rows[i].is_array() || rows[i].size() != n) throw ConfigError("topology: 'reach' rows must have n entries");
      for (std::size_t k = 0; k < n; ++k) reach[i * n + k] = rows[i][k].get<int>() != 0 ? 1 : 0;
    }
  } else {
    for (const auto& e : j.at("edges")) {
      const auto from = e.at(0).get<std::size_t>();
      const auto to = e.at(1).get<std::size_t>();
      if (from >= n || to >= n) throw ConfigError("topology: edge endpoint out of range");
      reach[to * n + from] = 1;
    }
  }
  return Topology(n, std::move(reach));
}

Topology Topology::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("topology: cannot open " + path.string());
  return from_json(nlohmann::json::parse(is));
}

void Topology::set(std::size_t i, std::size_t j, bool v) {
  if (i >= n_ || j >= n_) throw DimensionError("Topology::set: index out of range");
  if (i != j) reach_[i * n_ + j] = v ? 1 : 0;
}

void Topology::isolate(std::size_t agent) {
  for (std::size_t k = 0; k < n_; ++k) {
    set(agent, k, false);
    set(k, agent, false);
  }
}

std::vector<std::size_t> Topology::in_neighbourhood(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n_; ++j)
    if (receives(i, j)) out.push_back(j);
  return out;
}

std::size_t Topology::directed_links() const {
  std::size_t e = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) e += (i != j && receives(i, j)) ? 1 : 0;
  return e;
}

ad::AttentionMask Topology::as_mask() const { return ad::AttentionMask{n_, reach_}; }

RoundResult centralized_round(CommModule& comm, const Matrix& h) {
  auto ctx = ForwardContext::eval();
  RoundResult r;
  r.increments = communicate(comm, h, ctx);
  const std::uint64_t n = h.rows();
  r.stats.messages = 2 * n;
  r.stats.floats_transferred = 2 * n * h.cols();
  r.stats.rounds = 1;
  return r;
}

RoundResult distributed_round(CommModule& comm, const Matrix& h, const Topology& topology) {
  const std::size_t n = h.rows(), d = h.cols();
  if (topology.size() != n)
    throw DimensionError("distributed_round: topology has " + std::to_string(topology.size()) + " agents, H has " +
                         std::to_string(n) + " rows");
  if (d != comm.config().model_dim) throw DimensionError("distributed_round: hidden width does not match model_dim");
  std::vector<std::vector<std::size_t>> inbox(n);
  std::vector<std::size_t> self_pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    inbox[i] = topology.in_neighbourhood(i);
    self_pos[i] = static_cast<std::size_t>(std::find(inbox[i].begin(), inbox[i].end(), i) - inbox[i].begin());
  }
  const std::uint64_t links = topology.directed_links();

  RoundResult r;
  Matrix x = h;
  auto& layers = comm.layers();
  for (auto& layer : layers) {
    r.stats.messages += links;
    r.stats.floats_transferred += links * d;
    r.stats.rounds += 1;
    Matrix next(n, d);
    const auto agents = static_cast<long>(n);
#pragma omp parallel for schedule(static)
    for (long ai = 0; ai < agents; ++ai) {
      const auto i = static_cast<std::size_t>(ai);
      Tape tape(false);
      auto ctx = ForwardContext::eval();
      const Matrix local = x.rows_subset(inbox[i]);
      const Matrix& y = layer.forward(tape, tape.constant(local), local.rows(), ctx).value();
      std::copy_n(y.data() + self_pos[i] * d, d, next.data() + i * d);
    }
    x = std::move(next);
  }
  Tape tape(false);
  r.increments = comm.output().forward(tape, tape.constant(x)).value();
  return r;
}

}  // namespace mactas
