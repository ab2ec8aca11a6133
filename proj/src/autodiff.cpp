#include "mactas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mactas/errors.hpp"
#include "mactas/kernels.hpp"
#include "mactas/rng.hpp"

namespace mactas {

void Parameter::accumulate(const Matrix& g) {
  require_shape(g.same_shape(value), "Parameter::accumulate", value, g);
  if (!grad.same_shape(value)) grad = Matrix(value.rows(), value.cols());
  grad += g;
  has_grad = true;
}

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return {this, it->second};
  // Leaves read the parameter in place; parameters must not change while the tape lives.
  nodes_.push_back(Node{{}, {}, {}, &p, record_});
  param_ids_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (record_)
    for (const auto& v : inputs) needs = needs || nodes_[v.id].needs_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return {this, nodes_.size() - 1};
}

Matrix& Tape::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) {
    const Matrix& v = value(id);
    if (!v.empty()) n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.value().size() != 1)
    throw DimensionError("Tape::backward: root must be 1x1, got " + root.value().shape_string());
  backward(root, Matrix(1, 1, 1.0));
}

void Tape::backward(Var root, const Matrix& seed) {
  if (!record_) throw UsageError("Tape::backward on a non-recording tape");
  require_shape(seed.same_shape(root.value()), "Tape::backward seed", root.value(), seed);
  grad(root.id) += seed;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (auto& n : nodes_)
    if (n.param && !n.grad.empty()) n.param->accumulate(n.grad);
}

namespace ad {
namespace {

void require(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  require_shape(ok, what, a, b);
}

template <typename F, typename D>
Var unary(Var a, F f, D dfdx_from_xy) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape->push(std::move(y), {a}, [a, dfdx_from_xy](Tape& t, std::size_t self) {
    if (!t.needs_grad(a.id)) return;
    const Matrix& x = t.value(a.id);
    const Matrix& y = t.value(self);
    const Matrix& gy = t.grad(self);
    Matrix& gx = t.grad(a.id);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * dfdx_from_xy(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require(A.cols() == B.rows(), "matmul", A, B);
  Matrix C(A.rows(), B.cols());
  kernels::gemm_nn(A.data(), B.data(), C.data(), A.rows(), A.cols(), B.cols(), false);
  return a.tape->push(std::move(C), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& A = t.value(a.id);
    const Matrix& B = t.value(b.id);
    const Matrix& G = t.grad(self);
    if (t.needs_grad(a.id))  // dA = G B^T
      kernels::gemm_nt(G.data(), B.data(), t.grad(a.id).data(), A.rows(), B.cols(), A.cols(), true);
    if (t.needs_grad(b.id))  // dB = A^T G
      kernels::gemm_tn(A.data(), G.data(), t.grad(b.id).data(), B.rows(), A.rows(), B.cols(), true);
  });
}

Var matmul_nt(Var a, Var b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require(A.cols() == B.cols(), "matmul_nt", A, B);
  Matrix C(A.rows(), B.rows());
  kernels::gemm_nt(A.data(), B.data(), C.data(), A.rows(), A.cols(), B.rows(), false);
  return a.tape->push(std::move(C), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& A = t.value(a.id);
    const Matrix& B = t.value(b.id);
    const Matrix& G = t.grad(self);
    if (t.needs_grad(a.id))  // dA = G B
      kernels::gemm_nn(G.data(), B.data(), t.grad(a.id).data(), A.rows(), B.rows(), A.cols(), true);
    if (t.needs_grad(b.id))  // dB = G^T A
      kernels::gemm_tn(G.data(), A.data(), t.grad(b.id).data(), B.rows(), A.rows(), A.cols(), true);
  });
}

Var linear(Var x, Var w, Var b) {
  const Matrix& X = x.value();
  const Matrix& W = w.value();
  const Matrix& Bv = b.value();
  require(X.cols() == W.cols(), "linear (input vs weight)", X, W);
  require(Bv.rows() == 1 && Bv.cols() == W.rows(), "linear (bias vs weight)", Bv, W);
  const std::size_t m = X.rows(), in = X.cols(), out = W.rows();
  Matrix Y(m, out);
  for (std::size_t r = 0; r < m; ++r) std::copy_n(Bv.data(), out, Y.data() + r * out);
  kernels::gemm_nt(X.data(), W.data(), Y.data(), m, in, out, true);
  return x.tape->push(std::move(Y), {x, w, b}, [x, w, b, m, in, out](Tape& t, std::size_t self) {
    const Matrix& G = t.grad(self);
    if (t.needs_grad(x.id))  // dX = G W
      kernels::gemm_nn(G.data(), t.value(w.id).data(), t.grad(x.id).data(), m, out, in, true);
    if (t.needs_grad(w.id))  // dW = G^T X
      kernels::gemm_tn(G.data(), t.value(x.id).data(), t.grad(w.id).data(), out, m, in, true);
    if (t.needs_grad(b.id)) {
      Matrix& gb = t.grad(b.id);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < out; ++j) gb[j] += G(r, j);
    }
  });
}

Var add(Var a, Var b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require(A.same_shape(B), "add", A, B);
  Matrix C = A;
  C += B;
  return a.tape->push(std::move(C), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& G = t.grad(self);
    if (t.needs_grad(a.id)) t.grad(a.id) += G;
    if (t.needs_grad(b.id)) t.grad(b.id) += G;
  });
}

Var sub(Var a, Var b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require(A.same_shape(B), "sub", A, B);
  Matrix C(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] - B[i];
  return a.tape->push(std::move(C), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& G = t.grad(self);
    if (t.needs_grad(a.id)) t.grad(a.id) += G;
    if (t.needs_grad(b.id)) {
      Matrix& gb = t.grad(b.id);
      for (std::size_t i = 0; i < G.size(); ++i) gb[i] -= G[i];
    }
  });
}

Var mul(Var a, Var b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  require(A.same_shape(B), "mul", A, B);
  Matrix C(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * B[i];
  return a.tape->push(std::move(C), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& G = t.grad(self);
    const Matrix& A = t.value(a.id);
    const Matrix& B = t.value(b.id);
    if (t.needs_grad(a.id)) {
      Matrix& ga = t.grad(a.id);
      for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * B[i];
    }
    if (t.needs_grad(b.id)) {
      Matrix& gb = t.grad(b.id);
      for (std::size_t i = 0; i < G.size(); ++i) gb[i] += G[i] * A[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var one_minus(Var a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var elu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Matrix& A = a.value();
  if (begin > end || end > A.cols())
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + A.shape_string());
  const std::size_t w = end - begin;
  Matrix C(A.rows(), w);
  for (std::size_t r = 0; r < A.rows(); ++r) std::copy_n(A.data() + r * A.cols() + begin, w, C.data() + r * w);
  return a.tape->push(std::move(C), {a}, [a, begin, w](Tape& t, std::size_t self) {
    if (!t.needs_grad(a.id)) return;
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t r = 0; r < G.rows(); ++r)
      for (std::size_t j = 0; j < w; ++j) ga(r, begin + j) += G(r, j);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix C(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Matrix& P = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(P.data() + r * P.cols(), P.cols(), C.data() + r * cols + off);
    offsets.push_back(off);
    off += P.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(C), std::span<const Var>(inputs),
                             [inputs, offsets](Tape& t, std::size_t self) {
                               const Matrix& G = t.grad(self);
                               for (std::size_t k = 0; k < inputs.size(); ++k) {
                                 if (!t.needs_grad(inputs[k].id)) continue;
                                 Matrix& gp = t.grad(inputs[k].id);
                                 for (std::size_t r = 0; r < gp.rows(); ++r)
                                   for (std::size_t j = 0; j < gp.cols(); ++j) gp(r, j) += G(r, offsets[k] + j);
                               }
                             });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Matrix C(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), C.data() + off);
    offsets.push_back(off);
    off += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(C), std::span<const Var>(inputs),
                             [inputs, offsets](Tape& t, std::size_t self) {
                               const Matrix& G = t.grad(self);
                               for (std::size_t k = 0; k < inputs.size(); ++k) {
                                 if (!t.needs_grad(inputs[k].id)) continue;
                                 Matrix& gp = t.grad(inputs[k].id);
                                 for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += G[offsets[k] + i];
                               }
                             });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Matrix& A = a.value();
  if (rows * cols != A.size())
    throw DimensionError("reshape: cannot view " + A.shape_string() + " as " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  Matrix C(rows, cols, std::vector<double>(A.values().begin(), A.values().end()));
  return a.tape->push(std::move(C), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a.id)) return;
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& X = x.value();
  const std::size_t m = X.rows(), d = X.cols();
  require(gamma.rows() == 1 && gamma.cols() == d, "layer_norm (gamma)", X, gamma.value());
  require(beta.rows() == 1 && beta.cols() == d, "layer_norm (beta)", X, beta.value());
  const Matrix& g = gamma.value();
  const Matrix& bt = beta.value();
  Matrix xhat(m, d), Y(m, d);
  std::vector<double> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += X(r, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (X(r, j) - mu) * (X(r, j) - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(r, j) = (X(r, j) - mu) * inv_std[r];
      Y(r, j) = xhat(r, j) * g[j] + bt[j];
    }
  }
  return x.tape->push(
      std::move(Y), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), m, d](Tape& t, std::size_t self) {
        const Matrix& G = t.grad(self);
        const Matrix& gv = t.value(gamma.id);
        if (t.needs_grad(gamma.id)) {
          Matrix& gg = t.grad(gamma.id);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += G(r, j) * xhat(r, j);
        }
        if (t.needs_grad(beta.id)) {
          Matrix& gb = t.grad(beta.id);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += G(r, j);
        }
        if (t.needs_grad(x.id)) {
          Matrix& gx = t.grad(x.id);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < m; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = G(r, j) * gv[j];
              s1 += dxh;
              s2 += dxh * xhat(r, j);
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = G(r, j) * gv[j];
              gx(r, j) += inv_std[r] * (dxh - inv_d * s1 - xhat(r, j) * inv_d * s2);
            }
          }
        }
      });
}

Var dropout(Var x, double rate, std::uint64_t key) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
  const Matrix& X = x.value();
  const CounterRng rng(key);
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(X.rows(), X.cols());
  Matrix Y(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.size(); ++i) {
    mask[i] = rng.uniform(i) < rate ? 0.0 : keep_scale;
    Y[i] = X[i] * mask[i];
  }
  return x.tape->push(std::move(Y), {x}, [x, mask = std::move(mask)](Tape& t, std::size_t self) {
    if (!t.needs_grad(x.id)) return;
    const Matrix& G = t.grad(self);
    Matrix& gx = t.grad(x.id);
    for (std::size_t i = 0; i < G.size(); ++i) gx[i] += G[i] * mask[i];
  });
}

AttentionMask AttentionMask::full(std::size_t n) { return AttentionMask{n, std::vector<std::uint8_t>(n * n, 1)}; }

namespace {

void check_mask(const AttentionMask* mask, std::size_t group) {
  if (!mask) return;
  if (mask->n != group || mask->allowed.size() != group * group)
    throw DimensionError("attention: mask is " + std::to_string(mask->n) + "x" + std::to_string(mask->n) +
                         " but the group size is " + std::to_string(group));
  for (std::size_t i = 0; i < group; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < group; ++j) any = any || (*mask)(i, j);
    if (!any) throw DegenerateMaskError("attention: query row " + std::to_string(i) + " has every key masked");
  }
}

// Softmax weights for block g, head h, written into p (group x group).
void block_probs(const Matrix& Q, const Matrix& K, std::size_t group, std::size_t dk, std::size_t g,
                 std::size_t h, const AttentionMask* mask, double* p) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::size_t d = Q.cols();
  for (std::size_t i = 0; i < group; ++i) {
    const double* qi = Q.data() + (g * group + i) * d + h * dk;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < group; ++j) {
      if (mask && !(*mask)(i, j)) {
        p[i * group + j] = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double* kj = K.data() + (g * group + j) * d + h * dk;
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += qi[c] * kj[c];
      s *= inv_sqrt;
      p[i * group + j] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < group; ++j) {
      const double e = (mask && !(*mask)(i, j)) ? 0.0 : std::exp(p[i * group + j] - mx);
      p[i * group + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < group; ++j) p[i * group + j] /= z;
  }
}

void check_attention_shapes(const Matrix& Q, const Matrix& K, std::size_t group, std::size_t heads) {
  require(Q.same_shape(K), "attention (query vs key)", Q, K);
  if (heads == 0 || Q.cols() % heads != 0)
    throw ConfigError("attention: width " + std::to_string(Q.cols()) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (group == 0 || Q.rows() % group != 0)
    throw DimensionError("attention: " + std::to_string(Q.rows()) + " rows do not split into groups of " +
                         std::to_string(group));
}

}  // namespace

Matrix attention_weights(const Matrix& q, const Matrix& k, std::size_t group, std::size_t heads,
                         std::size_t block, std::size_t head, const AttentionMask* mask) {
  check_attention_shapes(q, k, group, heads);
  check_mask(mask, group);
  Matrix p(group, group);
  block_probs(q, k, group, q.cols() / heads, block, head, mask, p.data());
  return p;
}

Var attention(Var q, Var k, Var v, std::size_t group, std::size_t heads, const AttentionMask* mask) {
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  check_attention_shapes(Q, K, group, heads);
  require(Q.same_shape(V), "attention (query vs value)", Q, V);
  check_mask(mask, group);
  const std::size_t d = Q.cols(), dk = d / heads, blocks = Q.rows() / group;
  const std::size_t nn = group * group;
  std::vector<double> probs(blocks * heads * nn);
  Matrix O(Q.rows(), d);
  for (std::size_t g = 0; g < blocks; ++g)
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + (g * heads + h) * nn;
      block_probs(Q, K, group, dk, g, h, mask, p);
      for (std::size_t i = 0; i < group; ++i) {
        double* oi = O.data() + (g * group + i) * d + h * dk;
        for (std::size_t j = 0; j < group; ++j) {
          const double w = p[i * group + j];
          if (w == 0.0) continue;
          const double* vj = V.data() + (g * group + j) * d + h * dk;
          for (std::size_t c = 0; c < dk; ++c) oi[c] += w * vj[c];
        }
      }
    }
  return q.tape->push(
      std::move(O), {q, k, v},
      [q, k, v, group, heads, probs = std::move(probs)](Tape& t, std::size_t self) {
        const Matrix& Q = t.value(q.id);
        const Matrix& K = t.value(k.id);
        const Matrix& V = t.value(v.id);
        const Matrix& G = t.grad(self);
        const std::size_t d = Q.cols(), dk = d / heads, blocks = Q.rows() / group, nn = group * group;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
        const bool gq = t.needs_grad(q.id), gk = t.needs_grad(k.id), gv = t.needs_grad(v.id);
        Matrix* dQ = gq ? &t.grad(q.id) : nullptr;
        Matrix* dK = gk ? &t.grad(k.id) : nullptr;
        Matrix* dV = gv ? &t.grad(v.id) : nullptr;
        std::vector<double> dS(nn);
        for (std::size_t g = 0; g < blocks; ++g)
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + (g * heads + h) * nn;
            for (std::size_t i = 0; i < group; ++i) {
              const double* goi = G.data() + (g * group + i) * d + h * dk;
              // dP(i, j) = dO_i . V_j ; dS = P * (dP - sum_j P dP)
              double acc = 0.0;
              for (std::size_t j = 0; j < group; ++j) {
                const double* vj = V.data() + (g * group + j) * d + h * dk;
                double s = 0.0;
                for (std::size_t c = 0; c < dk; ++c) s += goi[c] * vj[c];
                dS[i * group + j] = s;
                acc += s * p[i * group + j];
              }
              for (std::size_t j = 0; j < group; ++j)
                dS[i * group + j] = p[i * group + j] * (dS[i * group + j] - acc) * inv_sqrt;
              if (dV)
                for (std::size_t j = 0; j < group; ++j) {
                  const double w = p[i * group + j];
                  if (w == 0.0) continue;
                  double* dvj = dV->data() + (g * group + j) * d + h * dk;
                  for (std::size_t c = 0; c < dk; ++c) dvj[c] += w * goi[c];
                }
            }
            for (std::size_t i = 0; i < group; ++i)
              for (std::size_t j = 0; j < group; ++j) {
                const double s = dS[i * group + j];
                if (s == 0.0) continue;
                const std::size_t ri = (g * group + i) * d + h * dk;
                const std::size_t rj = (g * group + j) * d + h * dk;
                if (dQ)
                  for (std::size_t c = 0; c < dk; ++c) (*dQ)[ri + c] += s * K[rj + c];
                if (dK)
                  for (std::size_t c = 0; c < dk; ++c) (*dK)[rj + c] += s * Q[ri + c];
              }
          }
      });
}

Var group_sum(Var a, std::size_t group) {
  const Matrix& A = a.value();
  if (group == 0 || A.rows() % group != 0)
    throw DimensionError("group_sum: " + A.shape_string() + " does not split into groups of " + std::to_string(group));
  const std::size_t blocks = A.rows() / group, c = A.cols();
  Matrix C(blocks, c);
  for (std::size_t g = 0; g < blocks; ++g)
    for (std::size_t i = 0; i < group; ++i)
      for (std::size_t j = 0; j < c; ++j) C(g, j) += A(g * group + i, j);
  return a.tape->push(std::move(C), {a}, [a, group](Tape& t, std::size_t self) {
    if (!t.needs_grad(a.id)) return;
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(r, j) += G(r / group, j);
  });
}

Var gather_cols(Var a, std::vector<std::size_t> index) {
  const Matrix& A = a.value();
  if (index.size() != A.rows())
    throw DimensionError("gather_cols: " + std::to_string(index.size()) + " indices for " + A.shape_string());
  Matrix C(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    if (index[r] >= A.cols()) throw DimensionError("gather_cols: column index out of range");
    C(r, 0) = A(r, index[r]);
  }
  return a.tape->push(std::move(C), {a}, [a, index = std::move(index)](Tape& t, std::size_t self) {
    if (!t.needs_grad(a.id)) return;
    const Matrix& G = t.grad(self);
    Matrix& ga = t.grad(a.id);
    for (std::size_t r = 0; r < index.size(); ++r) ga(r, index[r]) += G(r, 0);
  });
}

Var rowwise_vecmat(Var x, Var w, std::size_t m) {
  const Matrix& X = x.value();
  const Matrix& W = w.value();
  const std::size_t n = X.cols();
  require(W.rows() == X.rows() && W.cols() == n * m, "rowwise_vecmat", X, W);
  Matrix C(X.rows(), m);
  for (std::size_t b = 0; b < X.rows(); ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) C(b, j) += X(b, i) * W(b, i * m + j);
  return x.tape->push(std::move(C), {x, w}, [x, w, n, m](Tape& t, std::size_t self) {
    const Matrix& G = t.grad(self);
    const Matrix& X = t.value(x.id);
    const Matrix& W = t.value(w.id);
    const bool gx = t.needs_grad(x.id), gw = t.needs_grad(w.id);
    for (std::size_t b = 0; b < X.rows(); ++b)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          if (gx) t.grad(x.id)(b, i) += G(b, j) * W(b, i * m + j);
          if (gw) t.grad(w.id)(b, i * m + j) += G(b, j) * X(b, i);
        }
  });
}

Var rowwise_dot(Var a, Var c) {
  const Matrix& A = a.value();
  const Matrix& Cm = c.value();
  require(A.same_shape(Cm), "rowwise_dot", A, Cm);
  Matrix out(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t j = 0; j < A.cols(); ++j) out(r, 0) += A(r, j) * Cm(r, j);
  return a.tape->push(std::move(out), {a, c}, [a, c](Tape& t, std::size_t self) {
    const Matrix& G = t.grad(self);
    const Matrix& A = t.value(a.id);
    const Matrix& Cm = t.value(c.id);
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t j = 0; j < A.cols(); ++j) {
        if (t.needs_grad(a.id)) t.grad(a.id)(r, j) += G(r, 0) * Cm(r, j);
        if (t.needs_grad(c.id)) t.grad(c.id)(r, j) += G(r, 0) * A(r, j);
      }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape->push(Matrix(1, 1, s), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a.id)) return;
    const double g = t.grad(self)[0];
    Matrix& ga = t.grad(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var masked_mse(Var pred, const Matrix& target, std::span<const double> mask) {
  const Matrix& P = pred.value();
  require(P.same_shape(target) && P.cols() == 1, "masked_mse", P, target);
  if (mask.size() != P.rows()) throw DimensionError("masked_mse: mask length does not match predictions");
  double denom = 0.0;
  for (double m : mask) denom += m;
  if (denom <= 0.0) throw ContractViolation("masked_mse: no valid entries");
  std::vector<double> w(mask.begin(), mask.end());
  double loss = 0.0;
  for (std::size_t r = 0; r < P.rows(); ++r) {
    const double e = P[r] - target[r];
    loss += w[r] * e * e;
  }
  loss /= denom;
  return pred.tape->push(Matrix(1, 1, loss), {pred},
                         [pred, target, w = std::move(w), denom](Tape& t, std::size_t self) {
                           if (!t.needs_grad(pred.id)) return;
                           const double g = t.grad(self)[0];
                           const Matrix& P = t.value(pred.id);
                           Matrix& gp = t.grad(pred.id);
                           for (std::size_t r = 0; r < P.rows(); ++r)
                             gp[r] += g * 2.0 * w[r] * (P[r] - target[r]) / denom;
                         });
}

}  // namespace ad
}  // namespace mactas
