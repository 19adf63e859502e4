#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dcpr/error.hpp"
#include "dcpr/numerics.hpp"

using namespace dcpr;

namespace {

// Central-difference gradient of a scalar function of one matrix.
Matrix numeric_grad(Matrix& x, const std::function<double()>& f) {
  Matrix g(x.rows(), x.cols());
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

void expect_close(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_TRUE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "entry " << i;
}

}  // namespace

TEST(Matrix, MatmulByHand) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(a, b), (Matrix{{19, 22}, {43, 50}}));
  EXPECT_EQ(transpose(a), (Matrix{{1, 3}, {2, 4}}));
  EXPECT_EQ(matmul(a, Matrix::identity(2)), a);
}

TEST(Matrix, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(Matrix(2, 2) + Matrix(2, 3), ShapeError);
}

TEST(Matrix, SoftmaxRowsSumToOneAndAreShiftInvariant) {
  const Matrix a{{1, 2, 3}, {1000, 1001, 1002}};
  const Matrix s = row_softmax(a);
  for (std::size_t r = 0; r < 2; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 3; ++c) sum += s(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-15);
  }
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(s(0, c), s(1, c), 1e-15);
  EXPECT_NEAR(s(0, 0), std::exp(1.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)), 1e-15);
}

TEST(Matrix, RoundToFloatIsIdempotent) {
  Matrix m{{0.1, 1.0 / 3.0}};
  round_to_float(m);
  EXPECT_EQ(m[0], static_cast<double>(0.1f));
  Matrix again = m;
  round_to_float(again);
  EXPECT_EQ(again, m);
}

TEST(Rng, ReproducibleAndForkIndependent) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(Rng(42).next_u64(), c.next_u64());
  EXPECT_NE(Rng(42).fork(1).next_u64(), Rng(42).fork(2).next_u64());
}

TEST(Rng, UniformOpenIntervalAndBelowRange) {
  Rng r(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    const auto k = r.below(7);
    ASSERT_LT(k, 7u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, DerivedSeedsDifferByStageAndJob) {
  EXPECT_EQ(derive_seed(1, "region", 3), derive_seed(1, "region", 3));
  EXPECT_NE(derive_seed(1, "region", 3), derive_seed(1, "region", 4));
  EXPECT_NE(derive_seed(1, "region", 3), derive_seed(1, "device", 3));
  EXPECT_NE(derive_seed(1, "region", 3), derive_seed(2, "region", 3));
}

TEST(Tape, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  Matrix a = sample_gaussian(rng, 3, 4);
  Matrix b = sample_gaussian(rng, 4, 2);
  Matrix c = sample_gaussian(rng, 3, 4);
  const Matrix w = sample_gaussian(rng, 3, 4);
  const std::vector<std::size_t> rows{2, 0, 2};
  auto build = [&](Tape& t, Tape::Var va, Tape::Var vb, Tape::Var vc) {
    auto h = t.tanh(t.matmul(t.row_softmax(t.add(va, vc)), vb));
    auto k = t.relu(t.matmul_nt(va, vc));
    auto g = t.gather_rows(vc, rows);
    auto l = t.add(t.sum(t.log_sigmoid(h)), t.weighted_sum(t.mul_const(va, w), w));
    l = t.add(l, t.scale(t.sum(k), 0.3));
    l = t.add(l, t.sum(t.add_row(g, t.column_sum(va))));
    return l;
  };
  Tape tape;
  auto va = tape.param(a), vb = tape.param(b), vc = tape.param(c);
  tape.backward(build(tape, va, vb, vc));
  auto value = [&] {
    Tape t;
    return t.value(build(t, t.constant(a), t.constant(b), t.constant(c)))[0];
  };
  expect_close(tape.grad(va), numeric_grad(a, value), 1e-7);
  expect_close(tape.grad(vb), numeric_grad(b, value), 1e-7);
  expect_close(tape.grad(vc), numeric_grad(c, value), 1e-7);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape t;
  const Matrix m{{1, 2}};
  auto p = t.param(m);
  auto c = t.constant(Matrix{{3, 4}});
  t.backward(t.sum(t.add(p, c)));
  EXPECT_TRUE(t.requires_grad(p));
  EXPECT_FALSE(t.requires_grad(c));
  EXPECT_EQ(t.grad(p), (Matrix{{1, 1}}));
}

TEST(Tape, ScalarTimes) {
  Matrix s{{2.0}};
  const Matrix c{{1, -3}};
  Tape t;
  auto v = t.param(s);
  auto out = t.scalar_times(v, c);
  EXPECT_EQ(t.value(out), (Matrix{{2, -6}}));
  t.backward(t.sum(out));
  EXPECT_EQ(t.grad(v)[0], -2.0);
}
