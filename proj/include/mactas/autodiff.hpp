#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mactas/matrix.hpp"

namespace mactas {

enum class ParamGroup { main, comm };

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  ParamGroup group = ParamGroup::main;
  bool has_grad = false;

  Parameter() = default;
  Parameter(std::string n, Matrix v, ParamGroup g = ParamGroup::main)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), group(g) {}

  void zero_grad() {
    grad.fill(0.0);
    has_grad = false;
  }
  void accumulate(const Matrix& g);
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so walking them
// backwards is a valid topological order. A tape built with record = false
// never stores backward closures (used for target networks and rollouts).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  // One leaf per parameter per tape; repeated calls return the same node.
  Var param(Parameter& p);

  // Appends a derived node. `fn` is dropped when no input needs a gradient.
  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  const Matrix& value(std::size_t id) const {
    const auto& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Gradient buffer of node `id`, zero-allocated on first access.
  Matrix& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(root)/d(root) = 1 (root must be 1x1), runs the backward sweep and
  // adds leaf gradients into their Parameters.
  void backward(Var root);
  // Same, with an explicit upstream gradient of root's shape.
  void backward(Var root, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
};

// Differentiable operations. Shapes are checked eagerly and reported as DimensionError.
namespace ad {

Var matmul(Var a, Var b);     // a * b
Var matmul_nt(Var a, Var b);  // a * b^T
// x * w^T + b, with w of shape (out, in) and b of shape (1, out).
Var linear(Var x, Var w, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var one_minus(Var a);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var elu(Var a);
Var abs(Var a);

Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var reshape(Var a, std::size_t rows, std::size_t cols);

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Inverted dropout: each entry is zeroed with probability `rate`, survivors are
// scaled by 1/(1-rate). The mask is a pure function of `key`.
Var dropout(Var x, double rate, std::uint64_t key);

// Boolean attention mask over one group of `n` rows: allowed(i, j) means query i
// may attend key j.
struct AttentionMask {
  std::size_t n = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask full(std::size_t n);
  bool operator()(std::size_t i, std::size_t j) const { return allowed[i * n + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { allowed[i * n + j] = v ? 1 : 0; }
};

// Scaled dot-product attention applied independently to consecutive blocks of
// `group` rows (one block per team) and `heads` column slices. Returns the
// concatenated per-head outputs, before any output projection.
Var attention(Var q, Var k, Var v, std::size_t group, std::size_t heads,
              const AttentionMask* mask = nullptr);

// Attention weights of one (block, head) pair as an n x n matrix. Test helper
// sharing the kernel used by `attention`.
Matrix attention_weights(const Matrix& q, const Matrix& k, std::size_t group, std::size_t heads,
                         std::size_t block, std::size_t head, const AttentionMask* mask = nullptr);

// Sums consecutive blocks of `group` rows: (G*group) x c -> G x c.
Var group_sum(Var a, std::size_t group);
// out(r, 0) = a(r, index[r]).
Var gather_cols(Var a, std::vector<std::size_t> index);
// out(b, j) = sum_i x(b, i) * w(b, i * m + j), with w of shape B x (n*m).
Var rowwise_vecmat(Var x, Var w, std::size_t m);
// out(b, 0) = sum_j a(b, j) * c(b, j).
Var rowwise_dot(Var a, Var c);

Var sum(Var a);
// sum_r mask[r] * (pred(r,0) - target(r,0))^2 / sum_r mask[r]; target is a constant.
Var masked_mse(Var pred, const Matrix& target, std::span<const double> mask);

}  // namespace ad
}  // namespace mactas
