#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mactas/autodiff.hpp"
#include "mactas/errors.hpp"
#include "mactas/gradcheck.hpp"
#include "test_util.hpp"

using namespace mactas;
using mactas::tu::op_gradient_error;
using mactas::tu::param_gradient_error;
using mactas::tu::random_matrix;

namespace {

// Shifts entries away from zero so relu/abs/elu stay off their kinks.
Matrix away_from_zero(Matrix m) {
  for (auto& v : m.values()) v += v >= 0 ? 0.1 : -0.1;
  return m;
}

}  // namespace

TEST(Tape, MatmulValueAndGradient) {
  Parameter a("a", Matrix(2, 2, {1, 2, 3, 4}));
  Parameter b("b", Matrix(2, 1, {5, 6}));
  Tape t;
  Var y = ad::sum(ad::matmul(t.param(a), t.param(b)));
  EXPECT_EQ(y.value()(0, 0), 17.0 + 39.0);
  t.backward(y);
  // d sum(AB)/dA = 1 * B^T, d/dB = A^T * 1
  EXPECT_EQ(a.grad, Matrix(2, 2, {5, 6, 5, 6}));
  EXPECT_EQ(b.grad, Matrix(2, 1, {4, 6}));
  EXPECT_TRUE(a.has_grad);
}

TEST(Tape, ParamLeafIsShared) {
  Parameter p("p", Matrix(1, 1, {3.0}));
  Tape t;
  Var a = t.param(p);
  Var b = t.param(p);
  EXPECT_EQ(a.id, b.id);
  t.backward(ad::mul(a, b));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 6.0);
}

TEST(Tape, GradientsAccumulateAcrossBackwardCalls) {
  Parameter p("p", Matrix(1, 1, {2.0}));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(ad::scale(t.param(p), 3.0));
  }
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 6.0);
  p.zero_grad();
  EXPECT_FALSE(p.has_grad);
  EXPECT_EQ(p.grad(0, 0), 0.0);
}

TEST(Tape, BackwardContracts) {
  Parameter p("p", Matrix(2, 2, 1.0));
  Tape t;
  EXPECT_THROW(t.backward(t.param(p)), DimensionError);
  Tape off(false);
  Var y = ad::sum(off.param(p));
  EXPECT_THROW(off.backward(y), UsageError);
}

TEST(Tape, ShapeErrorsNameBothShapes) {
  Tape t(false);
  Var a = t.constant(Matrix(2, 3));
  Var b = t.constant(Matrix(2, 3));
  try {
    ad::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos);
  }
  EXPECT_THROW(ad::add(a, t.constant(Matrix(3, 2))), DimensionError);
  EXPECT_THROW(ad::slice_cols(a, 2, 5), DimensionError);
  EXPECT_THROW(ad::reshape(a, 4, 2), DimensionError);
}

TEST(Tape, ConstantsReceiveNoParameterGradient) {
  Parameter p("p", Matrix(1, 2, {1, 2}));
  Tape t;
  Var c = t.constant(Matrix(1, 2, {3, 4}));
  t.backward(ad::sum(ad::mul(t.param(p), c)));
  EXPECT_EQ(p.grad, Matrix(1, 2, {3, 4}));
}

// ---------------------------------------------------------------------------
// Every op against central differences.

class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, ElementwiseOps) {
  std::mt19937_64 rng(GetParam());
  const Matrix x = away_from_zero(random_matrix(3, 4, rng, -2, 2));
  const Matrix c = random_matrix(3, 4, rng);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::sigmoid(v); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::tanh(v); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::relu(v); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::elu(v); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::abs(v); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::one_minus(v); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::scale(v, -1.7); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([&](Tape& t, Var v) { return ad::mul(v, ad::tanh(v)); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([&](Tape& t, Var v) { return ad::sub(t.constant(c), v); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([&](Tape& t, Var v) { return ad::add(v, ad::mul(v, t.constant(c))); }, x), 1e-4);
}

TEST_P(OpGradient, ProductsAndLinear) {
  std::mt19937_64 rng(100 + GetParam());
  Parameter x("x", random_matrix(3, 5, rng));
  Parameter w("w", random_matrix(4, 5, rng));
  Parameter b("b", random_matrix(1, 4, rng));
  Parameter m("m", random_matrix(5, 2, rng));
  auto linear = [&](Tape& t) { return tu::weighted_sum(t, ad::linear(t.param(x), t.param(w), t.param(b)), 1); };
  EXPECT_LE(param_gradient_error(linear, {&x, &w, &b}), 1e-4);
  auto nt = [&](Tape& t) { return tu::weighted_sum(t, ad::matmul_nt(t.param(x), t.param(w)), 2); };
  EXPECT_LE(param_gradient_error(nt, {&x, &w}), 1e-4);
  auto nn = [&](Tape& t) { return tu::weighted_sum(t, ad::matmul(t.param(x), t.param(m)), 3); };
  EXPECT_LE(param_gradient_error(nn, {&x, &m}), 1e-4);
}

TEST_P(OpGradient, StructuralOps) {
  std::mt19937_64 rng(200 + GetParam());
  const Matrix x = random_matrix(6, 4, rng);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::slice_cols(v, 1, 3); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::reshape(v, 3, 8); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::group_sum(v, 3); }, x), 1e-4);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::gather_cols(v, {0, 3, 2, 2, 1, 0}); }, x), 1e-4);
  EXPECT_LE(op_gradient_error(
                [](Tape&, Var v) {
                  std::vector<Var> parts{ad::tanh(v), v};
                  return ad::concat_cols(parts);
                },
                x),
            1e-4);
  EXPECT_LE(op_gradient_error(
                [](Tape&, Var v) {
                  std::vector<Var> parts{v, ad::sigmoid(v), v};
                  return ad::concat_rows(parts);
                },
                x),
            1e-4);
}

TEST_P(OpGradient, RowwiseOps) {
  std::mt19937_64 rng(300 + GetParam());
  Parameter x("x", random_matrix(4, 3, rng));
  Parameter w("w", random_matrix(4, 3 * 2, rng));
  Parameter c("c", random_matrix(4, 3, rng));
  auto vecmat = [&](Tape& t) { return tu::weighted_sum(t, ad::rowwise_vecmat(t.param(x), t.param(w), 2), 4); };
  EXPECT_LE(param_gradient_error(vecmat, {&x, &w}), 1e-4);
  auto dot = [&](Tape& t) { return tu::weighted_sum(t, ad::rowwise_dot(t.param(x), t.param(c)), 5); };
  EXPECT_LE(param_gradient_error(dot, {&x, &c}), 1e-4);
}

TEST_P(OpGradient, LayerNorm) {
  std::mt19937_64 rng(400 + GetParam());
  Parameter x("x", random_matrix(3, 8, rng, -2, 2));
  Parameter g("g", random_matrix(1, 8, rng, 0.5, 1.5));
  Parameter b("b", random_matrix(1, 8, rng));
  auto f = [&](Tape& t) { return tu::weighted_sum(t, ad::layer_norm(t.param(x), t.param(g), t.param(b)), 6); };
  EXPECT_LE(param_gradient_error(f, {&x, &g, &b}), 1e-4);
}

TEST_P(OpGradient, AttentionWithAndWithoutMask) {
  std::mt19937_64 rng(500 + GetParam());
  Parameter q("q", random_matrix(6, 8, rng));
  Parameter k("k", random_matrix(6, 8, rng));
  Parameter v("v", random_matrix(6, 8, rng));
  auto full = [&](Tape& t) {
    return tu::weighted_sum(t, ad::attention(t.param(q), t.param(k), t.param(v), 3, 2), 7);
  };
  EXPECT_LE(param_gradient_error(full, {&q, &k, &v}), 1e-4);
  auto mask = ad::AttentionMask::full(3);
  mask.set(0, 2, false);
  mask.set(1, 0, false);
  auto masked = [&](Tape& t) {
    return tu::weighted_sum(t, ad::attention(t.param(q), t.param(k), t.param(v), 3, 2, &mask), 8);
  };
  EXPECT_LE(param_gradient_error(masked, {&q, &k, &v}), 1e-4);
}

TEST_P(OpGradient, DropoutWithFixedKey) {
  std::mt19937_64 rng(600 + GetParam());
  const Matrix x = random_matrix(5, 6, rng);
  EXPECT_LE(op_gradient_error([](Tape&, Var v) { return ad::dropout(v, 0.3, 42); }, x), 1e-4);
}

TEST_P(OpGradient, MaskedMse) {
  std::mt19937_64 rng(700 + GetParam());
  Parameter p("p", random_matrix(5, 1, rng));
  const Matrix target = random_matrix(5, 1, rng);
  const std::vector<double> mask{1, 0, 1, 1, 0};
  auto f = [&](Tape& t) { return ad::masked_mse(t.param(p), target, mask); };
  EXPECT_LE(param_gradient_error(f, {&p}), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(1, 6));

// ---------------------------------------------------------------------------

TEST(Ops, MaskedMseValues) {
  Tape t(false);
  Var pred = t.constant(Matrix(1, 1, {1.0}));
  EXPECT_DOUBLE_EQ(ad::masked_mse(pred, Matrix(1, 1, {3.0}), std::vector<double>{1.0}).value()(0, 0), 4.0);
  Var two = t.constant(Matrix(2, 1, {1.0, 100.0}));
  EXPECT_DOUBLE_EQ(ad::masked_mse(two, Matrix(2, 1, {2.0, 0.0}), std::vector<double>{1.0, 0.0}).value()(0, 0), 1.0);
  EXPECT_THROW(ad::masked_mse(two, Matrix(2, 1), std::vector<double>{0.0, 0.0}), ContractViolation);
}

TEST(Ops, LayerNormNormalisesRows) {
  std::mt19937_64 rng(3);
  Tape t(false);
  Var x = t.constant(random_matrix(4, 16, rng, -5, 5));
  Var y = ad::layer_norm(x, t.constant(Matrix(1, 16, 1.0)), t.constant(Matrix(1, 16, 0.0)));
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0, sq = 0;
    for (double v : y.value().row_span(r)) mean += v / 16;
    for (double v : y.value().row_span(r)) sq += (v - mean) * (v - mean) / 16;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq, 1.0, 1e-3);
  }
}

TEST(Ops, DropoutStatistics) {
  const double rate = 0.3;
  Tape t(false);
  Var x = t.constant(Matrix(1, 100000, 1.0));
  const Matrix y = ad::dropout(x, rate, 12345).value();
  std::size_t zeros = 0;
  for (double v : y.values()) {
    if (v == 0.0)
      ++zeros;
    else
      EXPECT_DOUBLE_EQ(v, 1.0 / (1.0 - rate));
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, rate, 0.01);
  // Same key, same mask; different key, different mask.
  EXPECT_EQ(ad::dropout(x, rate, 12345).value(), y);
  EXPECT_NE(ad::dropout(x, rate, 12346).value(), y);
  const Matrix xv = x.value();
  EXPECT_EQ(ad::dropout(x, 0.0, 1).value(), xv);
  EXPECT_THROW(ad::dropout(x, 1.0, 1), ConfigError);
}

TEST(Ops, AttentionWeightsAreDistributions) {
  std::mt19937_64 rng(5);
  const Matrix q = random_matrix(8, 8, rng, -3, 3);
  const Matrix k = random_matrix(8, 8, rng, -3, 3);
  auto mask = ad::AttentionMask::full(4);
  mask.set(0, 1, false);
  mask.set(0, 3, false);
  mask.set(2, 0, false);
  for (std::size_t block = 0; block < 2; ++block)
    for (std::size_t head = 0; head < 2; ++head) {
      const Matrix w = ad::attention_weights(q, k, 4, 2, block, head, &mask);
      for (std::size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) {
          if (!mask(i, j)) EXPECT_EQ(w(i, j), 0.0);
          s += w(i, j);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
}

TEST(Ops, AttentionSingleKeyHasUnitWeight) {
  std::mt19937_64 rng(6);
  const Matrix q = random_matrix(1, 4, rng);
  const Matrix k = random_matrix(1, 4, rng);
  EXPECT_EQ(ad::attention_weights(q, k, 1, 1, 0, 0)(0, 0), 1.0);
  Tape t(false);
  const Matrix v = random_matrix(1, 4, rng);
  const Matrix out = ad::attention(t.constant(q), t.constant(k), t.constant(v), 1, 2).value();
  EXPECT_EQ(out, v);
}

TEST(Ops, AttentionErrors) {
  Tape t(false);
  Var x = t.constant(Matrix(3, 6, 0.5));
  auto mask = ad::AttentionMask::full(3);
  for (std::size_t j = 0; j < 3; ++j) mask.set(1, j, false);
  EXPECT_THROW(ad::attention(x, x, x, 3, 2, &mask), DegenerateMaskError);
  EXPECT_THROW(ad::attention(x, x, x, 3, 4), ConfigError);
  EXPECT_THROW(ad::attention(x, x, x, 2, 2), DimensionError);
}

TEST(GradCheck, Oracles) {
  Parameter x("x", Matrix(1, 1, {3.0}));
  std::vector<Parameter*> ps{&x};
  auto g = finite_difference_gradient([&] { return x.value(0, 0) * x.value(0, 0); }, ps);
  EXPECT_NEAR(g[0](0, 0), 6.0, 1e-6);
  EXPECT_EQ(x.value(0, 0), 3.0);
  auto zero = finite_difference_gradient([] { return 2.5; }, ps);
  EXPECT_EQ(zero[0](0, 0), 0.0);
  Matrix m = finite_difference_gradient([](const Matrix& v) { return std::sin(v(0, 0)) + v(0, 1); },
                                        Matrix(1, 2, {0.3, 1.0}));
  EXPECT_NEAR(m(0, 0), std::cos(0.3), 1e-9);
  EXPECT_NEAR(m(0, 1), 1.0, 1e-9);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(max_relative_error(Matrix(1, 1, {0.0}), Matrix(1, 1, {1e-12})), 1e-12 / 1e-6);
  EXPECT_NEAR(max_relative_error(Matrix(1, 2, {1.0, 2.0}), Matrix(1, 2, {1.0, 2.2})), 0.2 / 2.2, 1e-15);
}
