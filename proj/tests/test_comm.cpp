#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "mactas/comm.hpp"
#include "mactas/errors.hpp"
#include "test_util.hpp"

using namespace mactas;
using mactas::tu::random_matrix;

namespace {

CommConfig small_config(std::size_t layers = 2) {
  CommConfig c;
  c.num_layers = layers;
  c.model_dim = 8;
  c.ffn_dim = 16;
  c.heads = 2;
  c.dropout = 0.1;
  return c;
}

std::vector<std::size_t> random_perm(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace

TEST(Comm, FreshModuleIsExactPassthrough) {
  CommModule comm(CommConfig{}, 3);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix h = random_matrix(1 + trial % 7, 64, rng, -3, 3);
    auto eval = ForwardContext::eval();
    auto train = ForwardContext::training(1, trial);
    const Matrix z = communicate(comm, h, eval);
    EXPECT_EQ(z, Matrix(h.rows(), 64));
    EXPECT_EQ(communicate(comm, h, train), Matrix(h.rows(), 64));
    Matrix sum = h;
    sum += z;
    EXPECT_EQ(sum, h);
  }
}

TEST(Comm, LargeConfigurationConstructs) {
  CommConfig c;
  c.num_layers = 3;
  c.ffn_dim = 512;
  CommModule comm(c, 1);
  EXPECT_EQ(comm.layers().size(), 3u);
  EXPECT_EQ(comm.param_count(), CommModule::expected_param_count(c));
}

TEST(Comm, SameSeedSameParameters) {
  CommModule a(small_config(), 9, false), b(small_config(), 9, false), c(small_config(), 10, false);
  auto pa = parameters_of(a), pb = parameters_of(b), pc = parameters_of(c);
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
    any_diff |= pa[i]->value != pc[i]->value;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Comm, EveryParameterIsInTheCommGroup) {
  CommModule comm(small_config(), 1);
  for (auto* p : parameters_of(comm)) EXPECT_EQ(p->group, ParamGroup::comm) << p->name;
}

TEST(Comm, InvalidConfigsRejected) {
  CommConfig zero = small_config();
  zero.num_layers = 0;
  EXPECT_THROW(CommModule(zero, 1), ConfigError);
  CommConfig heads = small_config();
  heads.heads = 3;
  EXPECT_THROW(CommModule(heads, 1), ConfigError);
  CommConfig drop = small_config();
  drop.dropout = 1.0;
  EXPECT_THROW(CommModule(drop, 1), ConfigError);
}

TEST(Comm, WidthMismatchIsDimensionError) {
  CommModule comm(small_config(), 1);
  auto ctx = ForwardContext::eval();
  EXPECT_THROW(communicate(comm, Matrix(3, 7), ctx), DimensionError);
}

TEST(Comm, ParamCountDecomposesPerLayer) {
  const auto one = CommModule(small_config(1), 1).param_count();
  const auto two = CommModule(small_config(2), 1).param_count();
  const std::size_t d = 8;
  const std::size_t output = d * d + d;
  const std::size_t layer = one - output;
  EXPECT_EQ(two, output + 2 * layer);
  // ln (2d) twice, fused qkv, attention out, ffn in/out
  EXPECT_EQ(layer, 4 * d + (3 * d * d + 3 * d) + (d * d + d) + (d * 16 + 16) + (16 * d + d));
}

TEST(Comm, ParamCountDoesNotDependOnTeamSize) {
  // Nothing in the module is sized by n; running teams of different size on the
  // same module leaves the count untouched.
  CommModule comm(small_config(), 1, false);
  const auto before = comm.param_count();
  std::mt19937_64 rng(2);
  for (std::size_t n : {2, 8, 27}) {
    auto ctx = ForwardContext::eval();
    EXPECT_EQ(communicate(comm, random_matrix(n, 8, rng), ctx).rows(), n);
    EXPECT_EQ(comm.param_count(), before);
  }
}

TEST(Comm, PermutationEquivariance) {
  CommModule comm(small_config(), 5, false);
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 6;
    const Matrix h = random_matrix(n, 8, rng, -2, 2);
    const auto perm = random_perm(n, rng);
    auto ctx = ForwardContext::eval();
    const Matrix z = communicate(comm, h, ctx);
    const Matrix zp = communicate(comm, h.rows_subset(perm), ctx);
    worst = std::max(worst, max_abs_diff(zp, z.rows_subset(perm)));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Comm, IsolatedAgentSubsetOracle) {
  CommModule comm(small_config(), 7, false);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix h = random_matrix(3, 8, rng);
    auto mask = ad::AttentionMask::full(3);
    for (std::size_t i = 0; i < 3; ++i) {
      if (i == 2) continue;
      mask.set(i, 2, false);
      mask.set(2, i, false);
    }
    auto ctx = ForwardContext::eval();
    const Matrix z = communicate(comm, h, ctx, &mask);
    std::vector<std::size_t> keep{0, 1};
    const Matrix sub = communicate(comm, h.rows_subset(keep), ctx);
    EXPECT_LE(max_abs_diff(z.rows_subset(keep), sub), 1e-12);
  }
}

TEST(Comm, BatchedTeamsMatchPerTeamCalls) {
  CommModule comm(small_config(), 11, false);
  std::mt19937_64 rng(12);
  const Matrix h = random_matrix(12, 8, rng);
  Tape t(false);
  auto ctx = ForwardContext::eval();
  const Matrix batched = comm.forward(t, t.constant(h), 4, ctx).value();
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<std::size_t> rows{4 * b, 4 * b + 1, 4 * b + 2, 4 * b + 3};
    const Matrix single = communicate(comm, h.rows_subset(rows), ctx);
    EXPECT_LE(max_abs_diff(batched.rows_subset(rows), single), 1e-12);
  }
}

TEST(Comm, EveryIncrementDependsOnEveryHiddenState) {
  CommModule comm(small_config(), 13, false);
  std::mt19937_64 rng(14);
  const std::size_t n = 4;
  Parameter h("h", random_matrix(n, 8, rng));
  for (std::size_t i = 0; i < n; ++i) {
    h.zero_grad();
    Tape t;
    auto ctx = ForwardContext::eval();
    Var z = comm.forward(t, t.param(h), n, ctx);
    Matrix pick(n, 8);
    for (std::size_t c = 0; c < 8; ++c) pick(i, c) = 1.0;
    t.backward(ad::sum(ad::mul(z, t.constant(pick))));
    for (std::size_t j = 0; j < n; ++j) {
      double norm = 0;
      for (double g : h.grad.row_span(j)) norm += g * g;
      EXPECT_GT(norm, 0.0) << "dz_" << i << "/dh_" << j;
    }
  }
}

TEST(Comm, ZeroOutputStillReceivesGradient) {
  // The zero projection must be trainable: its gradient is the encoder output.
  CommModule comm(small_config(), 15);
  std::mt19937_64 rng(16);
  Tape t;
  auto ctx = ForwardContext::eval();
  Var z = comm.forward(t, t.constant(random_matrix(3, 8, rng)), 3, ctx);
  t.backward(tu::weighted_sum(t, z, 1));
  EXPECT_GT(comm.output().weight.grad.max_abs(), 0.0);
}
