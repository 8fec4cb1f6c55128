#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "inklab/attention_model.hpp"
#include "inklab/metrics.hpp"

using namespace inklab;

namespace {

std::vector<AccuracyPoint> curve_from(const std::vector<double>& grid, auto f) {
  std::vector<AccuracyPoint> out;
  for (double p : grid) out.push_back({p, f(p), 200});
  return out;
}

}  // namespace

TEST(SubstringAccuracy, Basics) {
  std::vector<std::string> preds{"the answer is Paris", "William Jefferson Clinton", "it was 1986"};
  std::vector<std::vector<std::string>> refs{{"Paris"}, {"Bill Clinton"}, {"1986", "nineteen eighty-six"}};
  EXPECT_NEAR(substring_accuracy(preds, refs), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(substring_accuracy(std::vector<std::string>{"x"}, std::vector<std::vector<std::string>>{{"Paris"}}),
                   0.0);
}

TEST(SubstringAccuracy, CaseInsensitive) {
  std::vector<std::string> preds{"PARIS is it", "bill CLINTON"};
  std::vector<std::vector<std::string>> refs{{"paris"}, {"Bill Clinton"}};
  std::vector<std::string> lower{"paris is it", "bill clinton"};
  std::vector<std::vector<std::string>> upper{{"PARIS"}, {"BILL CLINTON"}};
  EXPECT_DOUBLE_EQ(substring_accuracy(preds, refs), 1.0);
  EXPECT_DOUBLE_EQ(substring_accuracy(lower, upper), substring_accuracy(preds, refs));
}

TEST(SubstringAccuracy, Errors) {
  std::vector<std::string> preds{"a", "b"};
  EXPECT_THROW(substring_accuracy(preds, std::vector<std::vector<std::string>>{{"a"}}), ArgumentError);
  EXPECT_THROW(substring_accuracy(preds, std::vector<std::vector<std::string>>{{"a"}, {}}), ArgumentError);
}

TEST(DropRatio, LinearBaseline) {
  const std::vector<AccuracyPoint> pts{{0.0, 0.9, 200}, {0.1, 0.84, 200}, {1.0, 0.3, 200}};
  EXPECT_NEAR(drop_ratio(pts).value, 0.1, 1e-12);
}

TEST(DropRatio, AnyAffineCurveIsOneTenth) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double a0 = u(rng), slope = (u(rng) - 0.5) * 2.0 * a0;
    if (std::fabs(slope) < 1e-3) continue;
    const auto pts = curve_from(default_p_grid(), [&](double p) { return a0 - slope * p; });
    EXPECT_NEAR(drop_ratio(pts).value, 0.1, 1e-12);
  }
}

TEST(DropRatio, PublishedQwenCurve) {
  // Qwen2.5-7B nq_easy, 128K column: 68.0 / 45.5 / 32.5 percent.
  const std::vector<AccuracyPoint> pts{{0.0, 0.680, 200}, {0.1, 0.455, 200}, {1.0, 0.325, 200}};
  const auto r = drop_ratio(pts);
  EXPECT_NEAR(r.value, 0.225 / 0.355, 1e-12);
  EXPECT_NEAR(r.value, 0.634, 0.001);
  EXPECT_DOUBLE_EQ(r.a0, 0.680);
  EXPECT_DOUBLE_EQ(r.a100, 0.325);
}

TEST(DropRatio, NegativeValuesPassThrough) {
  const std::vector<AccuracyPoint> pts{{0.0, 0.5, 1}, {0.1, 0.55, 1}, {1.0, 0.3, 1}};
  EXPECT_NEAR(drop_ratio(pts).value, -0.25, 1e-12);
}

TEST(DropRatio, Errors) {
  EXPECT_THROW(drop_ratio(std::vector<AccuracyPoint>{{0.0, 0.5, 1}, {0.1, 0.4, 1}, {1.0, 0.5, 1}}), DegenerateError);
  EXPECT_THROW(drop_ratio(std::vector<AccuracyPoint>{{0.0, 0.5, 1}, {1.0, 0.3, 1}}), ArgumentError);
  EXPECT_THROW(drop_ratio(std::vector<AccuracyPoint>{{0.0, 0.5, 1}, {0.11, 0.4, 1}, {1.0, 0.3, 1}}), ArgumentError);
}

TEST(Pearson, Values) {
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-15);
  // numpy.corrcoef on the same vectors.
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1.1, 1.9, 3.2, 3.8}), 0.990847000186092,
              1e-12);
}

TEST(Pearson, Errors) {
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateError);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), ArgumentError);
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), ArgumentError);
}

TEST(Spearman, Values) {
  EXPECT_NEAR(spearman(std::vector<double>{1, 5, 9, 20}, std::vector<double>{0.1, 0.2, 7, 8}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 5, 9, 20}, std::vector<double>{8, 7, 0.2, 0.1}), -1.0, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{10, 20, 20, 40}), 1.0, 1e-15);
  EXPECT_THROW(spearman(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}), DegenerateError);
}

TEST(Spearman, AverageRanks) {
  const auto r = average_ranks(std::vector<double>{1, 2, 2, 3});
  EXPECT_EQ(r, (std::vector<double>{1, 2.5, 2.5, 4}));
}

TEST(Correlation, TransformInvariance) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = n(rng);
      y[i] = x[i] + n(rng);
    }
    std::vector<double> xa(x.size()), ye(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      xa[i] = 3.5 * x[i] - 7.0;
      ye[i] = std::exp(y[i]);
    }
    EXPECT_NEAR(pearson(xa, y), pearson(x, y), 1e-12);
    EXPECT_NEAR(spearman(xa, ye), spearman(x, y), 1e-12);
  }
}

TEST(FitCurve, NoiselessRoundTrip) {
  const auto pts = curve_from(default_p_grid(), [](double p) { return 0.3 + 0.6 / (1 + 50 * p); });
  const auto fit = fit_curve(pts);
  EXPECT_NEAR(fit.kappa, 50.0, 50.0 * 1e-3);
  EXPECT_NEAR(fit.c0, 0.3, 1e-6);
  EXPECT_NEAR(fit.c1, 0.6, 1e-6);
  EXPECT_GT(fit.r2, 0.9999);
  EXPECT_GE(fit.sse, 0.0);
}

TEST(FitCurve, ConstantData) {
  const auto pts = curve_from(default_p_grid(), [](double) { return 0.42; });
  const auto fit = fit_curve(pts);
  EXPECT_DOUBLE_EQ(fit.c0, 0.42);
  EXPECT_EQ(fit.c1, 0.0);
  EXPECT_EQ(fit.sse, 0.0);
  EXPECT_EQ(fit.r2, 1.0);
  EXPECT_THROW(predicted_drop_ratio(fit), DegenerateError);
}

TEST(FitCurve, SimplifiedAttentionRecoversRatio) {
  const MixtureCoefficients k{0.0335, 36.8, 0};
  const double top = simplified_gold_attention(k, 0), bottom = simplified_gold_attention(k, 1);
  const auto pts = curve_from(default_p_grid(), [&](double p) {
    return 0.3 + 0.6 * (simplified_gold_attention(k, p) - bottom) / (top - bottom);
  });
  const auto fit = fit_curve(pts);
  EXPECT_NEAR(fit.kappa, k.b / k.a - 1.0, 0.05 * (k.b / k.a - 1.0));
}

TEST(FitCurve, ExactAttentionRecoversCurvature) {
  const MixtureCoefficients k{0.0335, 36.8, 0};
  const double top = gold_attention(k, 0), bottom = gold_attention(k, 1);
  const auto pts = curve_from(default_p_grid(), [&](double p) {
    return 0.3 + 0.6 * (gold_attention(k, p) - bottom) / (top - bottom);
  });
  const auto fit = fit_curve(pts);
  // (b - a) / (1 + a), from mpmath.
  EXPECT_NEAR(fit.kappa, 35.5747460087083, 0.05 * 35.5747460087083);
  EXPECT_NEAR(fit.kappa, curvature(k), 1e-3 * curvature(k));
}

TEST(FitCurve, NeverWorseThanConstant) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 30; ++t) {
    auto pts = curve_from(default_p_grid(), [&](double) { return u(rng); });
    double mean = 0, sst = 0;
    for (const auto& p : pts) mean += p.accuracy / pts.size();
    for (const auto& p : pts) sst += (p.accuracy - mean) * (p.accuracy - mean);
    EXPECT_LE(fit_curve(pts).sse, sst + 1e-15);
  }
}

TEST(FitCurve, Errors) {
  EXPECT_THROW(fit_curve(std::vector<AccuracyPoint>{{0, 1, 1}, {0.5, 0.5, 1}, {1, 0.2, 1}}), ArgumentError);
  EXPECT_THROW(fit_curve(std::vector<AccuracyPoint>{{0, 1, 1}, {0.5, 0.5, 1}, {0.5, 0.4, 1}, {1, 0.2, 1}}),
               ArgumentError);
}

TEST(PredictedDropRatio, Values) {
  EXPECT_NEAR(predicted_drop_ratio({0.3, 0.6, 50, 0, 1}), 0.85, 1e-12);
  EXPECT_NEAR(predicted_drop_ratio({0.3, 0.6, 339, 0, 1}), 0.974212034383954, 1e-12);
  EXPECT_NEAR(predicted_drop_ratio({0.3, 0.6, 1e-6, 0, 1}), 0.1, 1e-3);
  EXPECT_THROW(predicted_drop_ratio({0.3, 0.0, 50, 0, 1}), DegenerateError);
  EXPECT_THROW(predicted_drop_ratio({0.3, 0.6, 0.0, 0, 1}), DegenerateError);
}

TEST(PredictedDropRatio, IncreasingInKappa) {
  double prev = 0.1;
  for (double k = 0.01; k < 1e5; k *= 1.7) {
    const double r = predicted_drop_ratio({0.2, 0.5, k, 0, 1});
    EXPECT_GT(r, prev);
    prev = r;
  }
}
