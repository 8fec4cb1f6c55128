#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "inklab/attention_model.hpp"

using namespace inklab;

namespace {

// Reference setting: gold logit 9, hard 8, easy 1, 100 distractor documents.
MixtureCoefficients reference() {
  return coefficients(LogitMargins::make(8.0, 1.0), CompositionCounts::make(1, 100, 0, 0.0));
}

double rel(double got, double want) { return std::fabs(got - want) / std::fabs(want); }

// Test-side central differences, independent of the closed-form derivatives.
double fd1(const MixtureCoefficients& k, double p, double h) {
  auto f = [&](double x) { return 1.0 / (1.0 + (1.0 - x) * k.a + x * k.b + k.c); };
  return (f(p + h) - f(p - h)) / (2.0 * h);
}
double fd2(const MixtureCoefficients& k, double p, double h) {
  auto f = [&](double x) { return 1.0 / (1.0 + (1.0 - x) * k.a + x * k.b + k.c); };
  return (f(p + h) - 2.0 * f(p) + f(p - h)) / (h * h);
}

}  // namespace

TEST(Coefficients, ReferenceValues) {
  const auto k = reference();
  // mpmath: 100 e^-8, 100 e^-1
  EXPECT_NEAR(k.a, 0.0335462627902512, 1e-12);
  EXPECT_NEAR(k.b, 36.7879441171442, 1e-10);
  EXPECT_EQ(k.c, 0.0);
}

TEST(Coefficients, ZeroMarginsGiveCounts) {
  const auto k = coefficients(LogitMargins::make(0.0, 0.0), CompositionCounts::make(1, 5, 0, 0.0));
  EXPECT_DOUBLE_EQ(k.a, 5.0);
  EXPECT_DOUBLE_EQ(k.b, 5.0);
  EXPECT_DOUBLE_EQ(k.c, 0.0);
}

TEST(Coefficients, GapRatio) {
  const auto k = coefficients(LogitMargins::make(8.83, 3.0), CompositionCounts::make(1, 128000, 0, 0.0));
  EXPECT_NEAR(k.b / k.a, 340.358679071749, 1e-6);
}

TEST(Coefficients, OtherTokensOnlyWithExplicitMargin) {
  const auto counts = CompositionCounts::make(1, 10, 20, 0.0);
  EXPECT_EQ(coefficients(LogitMargins::make(3, 1), counts).c, 0.0);
  EXPECT_NEAR(coefficients(LogitMargins::make(3, 1, 2.0), counts).c, 20.0 * std::exp(-2.0), 1e-12);
}

TEST(Coefficients, ExtremeMarginRejectedByName) {
  LogitMargins m{8.0, -750.0, std::nullopt};
  try {
    coefficients(m, CompositionCounts::make(1, 10, 0, 0));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("delta_h"), std::string::npos);
  }
  EXPECT_THROW(coefficients(LogitMargins{701.0, 1.0, {}}, CompositionCounts::make(1, 1, 0, 0)), DomainError);
}

TEST(LogitMarginsBuilder, RejectsInvertedHardness) {
  EXPECT_THROW(LogitMargins::make(1.0, 2.0, {}, true), ArgumentError);
  EXPECT_NO_THROW(LogitMargins::make(1.0, 2.0));
  EXPECT_THROW(LogitMargins::make(NAN, 2.0), DomainError);
}

TEST(CompositionCountsBuilder, Validates) {
  EXPECT_THROW(CompositionCounts::make(0, 10, 0, 0.5), ArgumentError);
  EXPECT_THROW(CompositionCounts::make(1, 10, 0, 1.5), RangeError);
}

TEST(GoldAttention, NoCompetitors) {
  for (double p : {0.0, 0.3, 1.0}) EXPECT_DOUBLE_EQ(gold_attention({0, 0, 0}, p), 1.0);
}

TEST(GoldAttention, SymmetricMarginsAreFlat) {
  for (double p : {0.0, 0.5, 1.0}) EXPECT_NEAR(gold_attention({2, 2, 0}, p), 1.0 / 3.0, 1e-15);
}

TEST(GoldAttention, ReferenceDrop) {
  const auto k = reference();
  const double a0 = gold_attention(k, 0.0), a10 = gold_attention(k, 0.1);
  EXPECT_NEAR(a0, 0.967542562923418, 1e-12);
  EXPECT_NEAR(a10, 0.212359941133570, 1e-12);
  EXPECT_NEAR(1.0 - a10 / a0, 0.780516176475041, 1e-12);
}

TEST(GoldAttention, RangeChecked) {
  EXPECT_THROW(gold_attention({1, 2, 0}, -0.01), RangeError);
  EXPECT_THROW(gold_attention({1, 2, 0}, 1.01), RangeError);
  EXPECT_THROW(gold_attention({1, 2, 0}, NAN), RangeError);
}

TEST(Derivatives, HandValues) {
  const auto d = gold_attention_derivatives({1, 3, 0}, 0.0);
  EXPECT_DOUBLE_EQ(d.fprime, -0.5);
  EXPECT_DOUBLE_EQ(d.fsecond, 1.0);
}

TEST(Derivatives, FlatWhenBalanced) {
  for (double p : {0.0, 0.4, 1.0}) {
    const auto d = gold_attention_derivatives({4, 4, 1}, p);
    EXPECT_EQ(d.fprime, 0.0);
    EXPECT_EQ(d.fsecond, 0.0);
  }
}

TEST(Derivatives, ReferenceSlopeAtZero) {
  const MixtureCoefficients k{0.0335, 36.79, 0.0};
  EXPECT_NEAR(gold_attention_derivatives(k, 0.0).fprime, -34.4122594581285, 1e-9);
  EXPECT_NEAR(fd1(k, 0.0, 1e-6), -34.4122594581285, 1e-5);
}

TEST(Derivatives, MatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double a = 50.0 * u(rng);
    const double g = std::pow(10.0, -2.0 + 5.0 * u(rng));  // gamma up to 1e3
    const MixtureCoefficients k{a, a + g, 5.0 * u(rng)};
    for (double p : {0.05, 0.3, 0.7, 0.95}) {
      const auto d = gold_attention_derivatives(k, p);
      EXPECT_NEAR(d.fprime, fd1(k, p, 1e-5), 1e-6);
      EXPECT_NEAR(d.fsecond, fd2(k, p, 1e-4), 1e-4 * std::max(1.0, std::fabs(d.fsecond)));
      EXPECT_LT(d.fprime, 0.0);
      EXPECT_GT(d.fsecond, 0.0);
    }
  }
}

TEST(GoldAttention, MonotoneAndConvexOnGrid) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const double a = 10.0 * u(rng);
    const MixtureCoefficients k{a, a + 0.1 + 100.0 * u(rng), u(rng)};
    const int n = 101;
    std::vector<double> f(n);
    for (int i = 0; i < n; ++i) f[i] = gold_attention(k, i / 100.0);
    for (int i = 1; i < n; ++i) EXPECT_LT(f[i], f[i - 1]);
    for (int i = 1; i + 1 < n; ++i) EXPECT_GT(f[i + 1] - 2 * f[i] + f[i - 1], 0.0);
  }
}

TEST(Simplified, SymmetricLargeCoefficients) {
  const MixtureCoefficients k{1000, 1000, 0};
  EXPECT_DOUBLE_EQ(simplified_gold_attention(k, 0.5), 0.001);
  EXPECT_NEAR(gold_attention(k, 0.5), 1.0 / 1001.0, 1e-18);
  EXPECT_DOUBLE_EQ(simplified_gold_attention(k, 0.0), simplified_gold_attention(k, 1.0));
}

TEST(Simplified, CloseToExactForLargeCounts) {
  const MixtureCoefficients k{100, 34000, 0};
  EXPECT_NEAR(simplified_gold_attention(k, 0.1), 0.000286532951289398, 1e-15);
  EXPECT_LT(rel(simplified_gold_attention(k, 0.1), gold_attention(k, 0.1)), 0.01);
}

TEST(Simplified, DeviationShrinksAsCoefficientsGrow) {
  double prev = 1.0;
  for (double scale : {1.0, 10.0, 100.0, 1000.0}) {
    const MixtureCoefficients k{scale, 50.0 * scale, 0};
    const double dev = rel(simplified_gold_attention(k, 0.2), gold_attention(k, 0.2));
    EXPECT_LT(dev, prev);
    prev = dev;
  }
}

TEST(Simplified, VerticalScalingAndShapeInvariance) {
  for (double ratio : {1.0, 5.0, 340.0}) {
    const MixtureCoefficients base{3.0, 3.0 * ratio, 0};
    const MixtureCoefficients doubled{6.0, 6.0 * ratio, 0};
    const MixtureCoefficients tenfold{30.0, 30.0 * ratio, 0};
    for (double p = 0.0; p <= 1.0; p += 0.05) {
      EXPECT_NEAR(simplified_gold_attention(doubled, p), 0.5 * simplified_gold_attention(base, p), 1e-15);
      EXPECT_NEAR(simplified_gold_attention(tenfold, p) / simplified_gold_attention(base, p), 0.1, 1e-13);
    }
  }
}

TEST(Simplified, ZeroWeakMassIsDegenerate) {
  EXPECT_THROW(simplified_gold_attention({0, 5, 0}, 0.5), DegenerateError);
}

TEST(HardMassShare, Values) {
  EXPECT_NEAR(hard_mass_share(340, 0.1), 0.974212034383954, 1e-12);
  EXPECT_DOUBLE_EQ(hard_mass_share(1, 0.5), 0.5);
  for (double r : {0.0, 1.0, 340.0}) EXPECT_EQ(hard_mass_share(r, 0.0), 0.0);
  EXPECT_THROW(hard_mass_share(0.0, 1.0), DegenerateError);
  EXPECT_THROW(hard_mass_share(-1.0, 0.5), RangeError);
}

TEST(TemperatureSoftmax, ReferenceLogits) {
  const std::vector<double> z{9, 8, 1};
  const auto w1 = temperature_softmax(z, 1.0);
  EXPECT_NEAR(w1[0], 0.730879335711910, 1e-12);
  EXPECT_NEAR(w1[1], 0.268875481585453, 1e-12);
  EXPECT_NEAR(w1[2], 0.000245182702637560, 1e-15);
  const auto w2 = temperature_softmax(z, 0.5);
  EXPECT_NEAR(w2[0], 0.880796990672709, 1e-12);
  EXPECT_NEAR(w2[1], 0.119202910206647, 1e-12);
  EXPECT_NEAR(w2[2], 9.91206432375510e-08, 1e-18);
  EXPECT_GT(w2[0], w1[0]);
}

TEST(TemperatureSoftmax, UniformAndHugeLogits) {
  for (double tau : {0.1, 1.0, 7.0}) {
    for (double w : temperature_softmax(std::vector<double>{3, 3, 3}, tau)) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  }
  const auto w = temperature_softmax(std::vector<double>{1e5, 1e5 - 1, -1e5}, 1.0);
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(w[0]));
}

TEST(TemperatureSoftmax, Errors) {
  EXPECT_THROW(temperature_softmax(std::vector<double>{}, 1.0), ArgumentError);
  EXPECT_THROW(temperature_softmax(std::vector<double>{1.0}, 0.0), RangeError);
  EXPECT_THROW(temperature_softmax(std::vector<double>{1.0}, -1.0), RangeError);
}

TEST(TemperatureSoftmax, ArgmaxSharpensAsTauDrops) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(20);
    for (double& v : z) v = n(rng);
    const auto top = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    double prev = 0.0;
    for (double tau : {2.0, 1.0, 0.5, 0.25, 0.1}) {
      const double w = temperature_softmax(z, tau)[top];
      EXPECT_GE(w, prev);
      prev = w;
    }
  }
}

TEST(Oracle, UniformLogits) {
  TokenSpanLogits t{{0, 0, 0, 0}, {{0, 1, Category::gold}, {1, 4, Category::easy}}};
  const auto m = aggregate_attention_oracle(t, 1.0);
  EXPECT_NEAR(m.at(Category::gold), 0.25, 1e-15);
  EXPECT_NEAR(m.at(Category::easy), 0.75, 1e-15);
}

TEST(Oracle, SingleGoldToken) {
  TokenSpanLogits t{{4.2}, {{0, 1, Category::gold}}};
  EXPECT_DOUBLE_EQ(aggregate_attention_oracle(t, 1.0).at(Category::gold), 1.0);
}

TEST(Oracle, RejectsBadPartitions) {
  EXPECT_THROW(aggregate_attention_oracle({{0, 0, 0}, {{0, 2, Category::gold}, {1, 3, Category::easy}}}, 1.0),
               StructureError);
  EXPECT_THROW(aggregate_attention_oracle({{0, 0, 0}, {{0, 1, Category::gold}, {2, 3, Category::easy}}}, 1.0),
               StructureError);
  EXPECT_THROW(aggregate_attention_oracle({{0, 0, 0}, {{0, 1, Category::gold}, {1, 2, Category::easy}}}, 1.0),
               StructureError);
  EXPECT_THROW(aggregate_attention_oracle({{0, 0}, {{0, 0, Category::gold}, {0, 2, Category::easy}}}, 1.0),
               StructureError);
}

TEST(Oracle, MatchesClosedFormWithUniformMargins) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const auto td = static_cast<std::size_t>(1 + 2000 * u(rng));
    const auto hard = static_cast<std::size_t>(std::floor(u(rng) * (td + 1)));
    const double p = static_cast<double>(std::min(hard, td)) / static_cast<double>(td);
    const auto m = LogitMargins::make(12.0 * u(rng), 6.0 * u(rng) - 1.0);
    const auto counts = CompositionCounts::make(1, td, 0, p);
    const auto tsl = uniform_margin_logits(m, counts, Category::random, 3.0);
    const double gold = aggregate_attention_oracle(tsl, 1.0).at(Category::gold);
    EXPECT_LT(rel(gold, gold_attention(coefficients(m, counts), p)), 1e-9);
  }
}

TEST(Oracle, OtherTokensMatchC) {
  const auto m = LogitMargins::make(5.0, 1.0, 3.0);
  const auto counts = CompositionCounts::make(1, 40, 25, 0.25);
  const auto tsl = uniform_margin_logits(m, counts);
  EXPECT_LT(rel(aggregate_attention_oracle(tsl, 1.0).at(Category::gold), gold_attention(coefficients(m, counts), 0.25)),
            1e-12);
}

TEST(Oracle, TemperatureEqualsScaledMargins) {
  const auto m = LogitMargins::make(4.0, 1.5);
  const auto counts = CompositionCounts::make(1, 60, 0, 0.2);
  const auto tsl = uniform_margin_logits(m, counts);
  for (double tau : {0.5, 0.9, 2.0}) {
    const double direct = aggregate_attention_oracle(tsl, tau).at(Category::gold);
    const double scaled = gold_attention(coefficients(scale_margins(m, tau), counts), 0.2);
    EXPECT_LT(rel(direct, scaled), 1e-12);
  }
}

TEST(PredictedCurve, DefaultGridAndFlatCase) {
  const auto grid = default_p_grid();
  ASSERT_EQ(grid.size(), 12u);
  EXPECT_DOUBLE_EQ(grid[5], 0.10);
  const auto flat = predicted_curve({2, 2, 0}, grid);
  for (const auto& pt : flat.points) EXPECT_NEAR(pt.alpha, 1.0 / 3.0, 1e-15);
}

TEST(PredictedCurve, ReferenceDropRatio) {
  const auto curve = predicted_curve(reference(), default_p_grid());
  const double a0 = curve.points[0].alpha, a10 = curve.points[5].alpha, a100 = curve.points.back().alpha;
  // mpmath evaluation of the same three points.
  EXPECT_NEAR((a0 - a10) / (a0 - a100), 0.802464558827537, 1e-12);
}

TEST(PredictedCurve, RejectsUnsortedGrid) {
  EXPECT_THROW(predicted_curve({1, 2, 0}, std::vector<double>{0.0, 0.5, 0.4}), ArgumentError);
  EXPECT_THROW(predicted_curve({1, 2, 0}, std::vector<double>{0.0, 0.0}), ArgumentError);
  EXPECT_THROW(predicted_curve({1, 2, 0}, std::vector<double>{0.0, 1.5}), RangeError);
}

TEST(Curvature, MatchesSimplifiedRatioForLargeCounts) {
  const MixtureCoefficients k{1e6, 3.4e8, 0};
  EXPECT_LT(rel(curvature(k), k.b / k.a - 1.0), 1e-5);
}
