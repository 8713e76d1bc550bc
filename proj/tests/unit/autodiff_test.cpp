#include <cmath>

#include <gtest/gtest.h>

#include "nco/autodiff.hpp"
#include "nco/error.hpp"
#include "support/oracles.hpp"

namespace ad = nco::ad;
using nco::testing::random_values;

namespace {

double fd(const ad::ScalarFn& f, const ad::Shape& shape, std::uint64_t seed) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  const auto x = random_values(n, seed);
  return ad::finite_difference_check(f, shape, x, 1e-5);
}

}  // namespace

TEST(Matmul, IdentityAndHandArithmetic) {
  ad::Tape tape;
  const auto eye = tape.constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto m = tape.constant({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto p = ad::matmul(eye, m);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(p.value(i), m.value(i));

  const auto a = tape.constant({2, 2}, {1, 2, 3, 4});
  const auto b = tape.constant({2, 1}, {1, 1});
  const auto c = ad::matmul(a, b);
  ASSERT_EQ(c.shape(), (ad::Shape{2, 1}));
  EXPECT_EQ(c.value(0), 3.0);
  EXPECT_EQ(c.value(1), 7.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  ad::Tape tape;
  const auto a = tape.constant({2, 3}, std::vector<double>(6, 1.0));
  const auto b = tape.constant({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_THROW(ad::matmul(a, b), nco::ShapeError);
}

TEST(Matmul, GradientMatchesFiniteDifference) {
  const auto bvals = random_values(15, 99);
  auto f_a = [&](ad::Tape& t, const ad::Tensor& x) {
    return ad::sum(ad::hadamard(ad::matmul(x, t.constant({5, 3}, bvals)), ad::matmul(x, t.constant({5, 3}, bvals))));
  };
  EXPECT_LT(fd(f_a, {4, 5}, 1), 1e-6);
  const auto avals = random_values(20, 7);
  auto f_b = [&](ad::Tape& t, const ad::Tensor& x) {
    const auto y = ad::matmul(t.constant({4, 5}, avals), x);
    return ad::sum(ad::hadamard(y, ad::sigmoid(y)));
  };
  EXPECT_LT(fd(f_b, {5, 3}, 2), 1e-6);
}

TEST(MaskedSoftmax, UniformWhenLogitsEqual) {
  ad::Tape tape;
  const auto p = ad::masked_softmax(tape.constant({1, 4}, {0, 0, 0, 0}), {1, 1, 1, 1});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(p.value(i), 0.25);
}

TEST(MaskedSoftmax, MaskedEntryIsExactlyZero) {
  ad::Tape tape;
  const auto p = ad::masked_softmax(tape.constant({1, 3}, {1, 2, 3}), {1, 1, 0});
  const double e = std::exp(1.0);
  EXPECT_NEAR(p.value(0), 1.0 / (1.0 + e), 1e-15);
  EXPECT_NEAR(p.value(1), e / (1.0 + e), 1e-15);
  EXPECT_EQ(p.value(2), 0.0);
}

TEST(MaskedSoftmax, RowsSumToOneAndLargeLogitsStayFinite) {
  ad::Tape tape;
  const auto p = ad::masked_softmax(tape.constant({2, 3}, {1000, 999, -5, 3, 1e4, 2}), {1, 1, 1, 1, 0, 1});
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      ASSERT_TRUE(std::isfinite(p.at(r, c)));
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_EQ(p.at(1, 1), 0.0);
}

TEST(MaskedSoftmax, AllMaskedRowThrows) {
  ad::Tape tape;
  EXPECT_THROW(ad::masked_softmax(tape.constant({1, 2}, {1, 2}), {0, 0}), nco::ValidationError);
}

TEST(MaskedSoftmax, GradientMatchesFiniteDifference) {
  const ad::Mask mask{1, 0, 1, 1, 1, 1, 0, 1};
  const auto w = random_values(8, 11);
  auto f = [&](ad::Tape& t, const ad::Tensor& x) {
    return ad::sum(ad::hadamard(ad::masked_softmax(x, mask), t.constant({2, 4}, w)));
  };
  const auto x = random_values(8, 3);
  const std::vector<std::size_t> unmasked{0, 2, 3, 4, 5, 7};
  EXPECT_LT(ad::finite_difference_check(f, {2, 4}, x, 1e-5, unmasked), 1e-6);
}

TEST(Elementwise, AnalyticValues) {
  ad::Tape tape;
  EXPECT_EQ(ad::sigmoid(tape.constant({1}, {0.0})).item(), 0.5);
  const auto r = ad::relu(tape.constant({2}, {-3.0, 3.0}));
  EXPECT_EQ(r.value(0), 0.0);
  EXPECT_EQ(r.value(1), 3.0);
  EXPECT_EQ(ad::add(tape.constant({2}, {1, 2}), tape.constant({2}, {3, 4})).value(1), 6.0);
  EXPECT_EQ(ad::scale(tape.constant({2}, {1, 2}), 3.0).value(1), 6.0);
  EXPECT_EQ(ad::add(tape.constant({1}, {1.0}), tape.constant({2}, {3, 4})).value(1), 5.0);
}

TEST(Elementwise, IncompatibleShapesThrow) {
  ad::Tape tape;
  EXPECT_THROW(ad::add(tape.constant({2}, {1, 2}), tape.constant({3}, {1, 2, 3})), nco::ShapeError);
  EXPECT_THROW(ad::hadamard(tape.constant({2, 2}, {1, 2, 3, 4}), tape.constant({4}, {1, 2, 3, 4})),
               nco::ShapeError);
}

TEST(Elementwise, GradientsMatchFiniteDifference) {
  const auto other = random_values(9, 5);
  EXPECT_LT(fd([&](ad::Tape& t, const ad::Tensor& x) { return ad::sum(ad::hadamard(x, t.constant({3, 3}, other))); },
               {3, 3}, 21),
            1e-6);
  EXPECT_LT(fd([](ad::Tape&, const ad::Tensor& x) { return ad::sum(ad::hadamard(x, x)); }, {3, 3}, 22), 1e-6);
  EXPECT_LT(fd([](ad::Tape&, const ad::Tensor& x) { return ad::sum(ad::sigmoid(x)); }, {3, 4}, 23), 1e-6);
  EXPECT_LT(fd([&](ad::Tape& t, const ad::Tensor& x) {
              return ad::sum(ad::hadamard(ad::relu(x), t.constant({3, 3}, other)));
            }, {3, 3}, 24),
            1e-6);
  EXPECT_LT(fd([](ad::Tape&, const ad::Tensor& x) { return ad::sum(ad::scale(ad::hadamard(x, x), 2.5)); }, {5}, 25),
            1e-6);
  EXPECT_LT(fd([&](ad::Tape& t, const ad::Tensor& x) {
              return ad::sum(ad::hadamard(ad::add(x, t.constant({3, 3}, other)), x));
            }, {3, 3}, 26),
            1e-6);
  // scale by a tensor scalar: gradient flows into both operands
  EXPECT_LT(fd([&](ad::Tape& t, const ad::Tensor& x) {
              const auto s = ad::element(x, 0);
              return ad::sum(ad::hadamard(ad::scale(x, s), t.constant({4}, {1, 2, 3, 4})));
            }, {4}, 27),
            1e-6);
  EXPECT_LT(fd([](ad::Tape& t, const ad::Tensor& x) {
              return ad::sum(ad::log(ad::add(ad::hadamard(x, x), t.constant({1}, {1.0}))));
            }, {6}, 28),
            1e-6);
}

TEST(Structural, GradientsMatchFiniteDifference) {
  const auto w = random_values(12, 31);
  const auto b = random_values(4, 32);
  EXPECT_LT(fd([&](ad::Tape& t, const ad::Tensor& x) {
              const auto y = ad::linear(x, t.constant({3, 4}, w), t.constant({4}, b));
              return ad::sum(ad::hadamard(y, y));
            }, {2, 3}, 33),
            1e-6);
  EXPECT_LT(fd([&](ad::Tape& t, const ad::Tensor& x) {
              const auto y = ad::linear(t.constant({2, 3}, {1, -1, 2, 0.5, 1, -2}), x, t.constant({4}, b));
              return ad::sum(ad::hadamard(y, ad::sigmoid(y)));
            }, {3, 4}, 34),
            1e-6);
  EXPECT_LT(fd([&](ad::Tape& t, const ad::Tensor& x) {
              const auto y = ad::linear(t.constant({2, 3}, {1, -1, 2, 0.5, 1, -2}), t.constant({3, 4}, w), x);
              return ad::sum(ad::hadamard(y, y));
            }, {4}, 35),
            1e-6);
  EXPECT_LT(fd([](ad::Tape&, const ad::Tensor& x) {
              const auto t = ad::transpose(x);
              return ad::sum(ad::hadamard(ad::matmul(t, x), ad::matmul(t, x)));
            }, {3, 2}, 36),
            1e-6);
  EXPECT_LT(fd([](ad::Tape&, const ad::Tensor& x) {
              const ad::Tensor parts[] = {ad::slice_cols(x, 2, 2), ad::slice_cols(x, 0, 1)};
              const auto c = ad::concat_cols(parts);
              const ad::Tensor rows[] = {c, ad::sigmoid(c)};
              const auto r = ad::concat_rows(rows);
              return ad::sum(ad::hadamard(r, r));
            }, {3, 4}, 37),
            1e-6);
  EXPECT_LT(fd([](ad::Tape&, const ad::Tensor& x) {
              const auto r = ad::reshape(x, {2, 3});
              return ad::sum(ad::hadamard(ad::softmax(r), ad::reshape(ad::sigmoid(x), {2, 3})));
            }, {6}, 38),
            1e-6);
}

TEST(CrossEntropy, MatchesFiniteDifferenceAndValue) {
  const ad::Mask mask{0, 1, 1, 1, 0, 1, 1, 1, 1, 0};
  const std::vector<std::size_t> targets{2, 3};
  auto f = [&](ad::Tape&, const ad::Tensor& x) { return ad::masked_cross_entropy(x, mask, targets); };
  const auto x = random_values(10, 41);
  EXPECT_LT(ad::finite_difference_check(f, {2, 5}, x, 1e-5, std::vector<std::size_t>{1, 2, 3, 5, 6, 7, 8}), 1e-6);

  ad::Tape tape;
  const auto l = ad::masked_cross_entropy(tape.constant({1, 3}, {0, 0, 0}), {1, 1, 1}, std::vector<std::size_t>{1});
  EXPECT_NEAR(l.item(), std::log(3.0), 1e-15);
  EXPECT_THROW(ad::masked_cross_entropy(tape.constant({1, 3}, {0, 0, 0}), {1, 0, 1}, std::vector<std::size_t>{1}),
               nco::ValidationError);
}

TEST(Backward, SumGivesOnesAndHalfSquareGivesX) {
  {
    ad::Tape tape;
    const auto x = tape.variable({2, 3}, random_values(6, 51));
    tape.backward(ad::sum(x));
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  }
  {
    ad::Tape tape;
    const auto vals = random_values(5, 52);
    const auto x = tape.variable({5}, vals);
    tape.backward(ad::scale(ad::sum(ad::hadamard(x, x)), 0.5));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], vals[i]);
  }
}

TEST(Backward, NonScalarLossThrows) {
  ad::Tape tape;
  const auto x = tape.variable({2}, {1, 2});
  EXPECT_THROW(tape.backward(x), nco::ShapeError);
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    ad::Tape tape;
    const auto x = tape.variable({3, 4}, random_values(12, 61));
    const auto w = tape.variable({4, 2}, random_values(8, 62));
    const auto y = ad::masked_softmax(ad::matmul(ad::sigmoid(x), w), ad::Mask(6, 1));
    tape.backward(ad::sum(ad::hadamard(y, y)));
    std::vector<double> g(x.grad().begin(), x.grad().end());
    g.insert(g.end(), w.grad().begin(), w.grad().end());
    return g;
  };
  EXPECT_EQ(run(), run());
}

TEST(FiniteDifference, SumOfSquaresAndConstant) {
  const std::vector<double> x{1.0, 2.0};
  EXPECT_LT(ad::finite_difference_check([](ad::Tape&, const ad::Tensor& v) { return ad::sum(ad::hadamard(v, v)); },
                                        {2}, x, 1e-5),
            1e-8);
  EXPECT_EQ(ad::finite_difference_check([](ad::Tape& t, const ad::Tensor&) { return t.constant({1}, {3.0}); }, {2}, x,
                                        1e-5),
            0.0);
}

TEST(Tensor, ValuesStayFinite) {
  ad::Tape tape;
  const auto x = tape.constant({4}, {-800, -1, 1, 800});
  for (double v : ad::sigmoid(x).values()) EXPECT_TRUE(std::isfinite(v));
  for (double v : ad::softmax(ad::reshape(x, {1, 4})).values()) EXPECT_TRUE(std::isfinite(v));
}
