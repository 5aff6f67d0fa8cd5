#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "morphoprobe/analysis.hpp"
#include "morphoprobe/errors.hpp"
#include "morphoprobe/rng.hpp"

using namespace morphoprobe;

namespace {

// Student t density integrated from 0 to |t| with composite Simpson's rule.
double t_two_sided_oracle(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * std::numbers::pi);
  auto f = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 20000;
  const double h = std::abs(t) / n;
  double s = f(0) + f(std::abs(t));
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(i * h);
  const double half = s * h / 3;
  return 1.0 - 2.0 * half;
}

// Two-sided exact binomial tail by direct summation in log space.
double sign_oracle(int k, int n) {
  const int tail = std::min(k, n - k);
  long double p = 0;
  for (int i = 0; i <= tail; ++i) {
    p += std::exp(std::lgamma(n + 1.0L) - std::lgamma(i + 1.0L) - std::lgamma(n - i + 1.0L) - n * std::log(2.0L));
  }
  return std::min(1.0, static_cast<double>(2 * p));
}

}  // namespace

TEST(Effect, Definition) {
  EXPECT_DOUBLE_EQ(effect(0.8, 0.4), 0.5);
  EXPECT_DOUBLE_EQ(effect(0.5, 0.6), 1.0 - 1.2);
  EXPECT_DOUBLE_EQ(effect(1.0, 1.0), 0.0);
  EXPECT_THROW(effect(0.0, 0.3), UndefinedError);
}

TEST(TTest, MatchesNumericalIntegration) {
  const std::vector<double> a = {0.91, 0.88, 0.93, 0.87, 0.90, 0.92, 0.89};
  const std::vector<double> b = {0.85, 0.86, 0.90, 0.88, 0.84, 0.89, 0.86};
  const auto r = paired_t_test(a, b);
  // Hand computation of the statistic.
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) d.push_back(a[i] - b[i]);
  double m = 0;
  for (double x : d) m += x;
  m /= 7;
  double ss = 0;
  for (double x : d) ss += (x - m) * (x - m);
  const double t = m / std::sqrt(ss / 6 / 7);
  EXPECT_NEAR(r.t, t, 1e-12);
  EXPECT_EQ(r.df, 6);
  EXPECT_NEAR(r.p, t_two_sided_oracle(t, 6), 1e-8);
}

TEST(TTest, CdfAgainstIntegrationAcrossDf) {
  for (double df : {1.0, 2.0, 5.0, 30.0}) {
    for (double t : {0.3, 1.0, 2.5}) {
      EXPECT_NEAR(2 * student_t_cdf(-t, df), t_two_sided_oracle(t, df), 1e-8) << df << " " << t;
    }
  }
}

TEST(TTest, ZeroVariance) {
  const std::vector<double> a = {1, 2, 3}, same = {1, 2, 3}, shifted = {0, 1, 2};
  EXPECT_EQ(paired_t_test(a, same).p, 1.0);
  const auto r = paired_t_test(a, shifted);
  EXPECT_EQ(r.p, 0.0);
  EXPECT_TRUE(std::isinf(r.t));
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{2}), DataError);
}

TEST(SignTest, MatchesDirectSummation) {
  for (auto [k, n] : std::vector<std::pair<int, int>>{{3, 10}, {0, 5}, {5, 10}, {40, 100}, {172, 247}}) {
    EXPECT_NEAR(sign_test(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n)), sign_oracle(k, n),
                1e-9 * std::max(1e-9, sign_oracle(k, n)) + 1e-15)
        << k << "/" << n;
  }
  // Small cases by hand: P(X <= 0) for n = 5 is 1/32.
  EXPECT_DOUBLE_EQ(sign_test(0, 5), 2.0 / 32.0);
  EXPECT_DOUBLE_EQ(sign_test(5, 10), 1.0);
  EXPECT_DOUBLE_EQ(sign_test(0, 0), 1.0);
  EXPECT_THROW(sign_test(6, 5), DataError);
}

TEST(Bonferroni, ScalesAndCaps) {
  EXPECT_DOUBLE_EQ(bonferroni(0.01, 5), 0.05);
  EXPECT_DOUBLE_EQ(bonferroni(0.3, 5), 1.0);
  EXPECT_THROW(bonferroni(0.1, 0), ConfigError);
}

TEST(Pearson, KnownValues) {
  const std::vector<double> x = {1, 2, 3, 4}, y = {2, 4, 6, 8}, z = {4, 3, 2, 1}, c = {1, 1, 1, 1};
  EXPECT_NEAR(*pearson(x, y), 1.0, 1e-12);
  EXPECT_NEAR(*pearson(x, z), -1.0, 1e-12);
  EXPECT_FALSE(pearson(x, c).has_value());
  const std::vector<double> p = {1, 2, 3}, q = {1, 3, 2};
  EXPECT_NEAR(*pearson(p, q), 0.5, 1e-12);
}

TEST(Pearson, RandomColumnsAreWeaklyCorrelated) {
  Xoshiro256 rng(17);
  std::vector<double> x(100), y(100);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  EXPECT_LT(std::abs(*pearson(x, y)), 0.3);
}

TEST(PearsonMatrix, CrossModelAndUndefinedCells) {
  std::vector<EffectRecord> rs;
  const std::vector<std::string> tasks = {"a_NOUN_Case", "b_NOUN_Case", "c_NOUN_Case", "d_NOUN_Case"};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const double e = 0.1 * static_cast<double>(i + 1);
    rs.push_back({"m1", tasks[i], "targ", e});
    rs.push_back({"m2", tasks[i], "targ", e});
    rs.push_back({"m1", tasks[i], "l2", 1 - e});
    rs.push_back({"m2", tasks[i], "const", 0.3});
  }
  const auto m = pearson_matrix(rs, "m1", "m2");
  ASSERT_EQ(m.rows, std::vector<std::string>({"l2", "targ"}));
  ASSERT_EQ(m.cols, std::vector<std::string>({"const", "targ"}));
  EXPECT_NEAR(m.r[1][1], 1.0, 1e-12);
  EXPECT_NEAR(m.r[0][1], -1.0, 1e-12);
  EXPECT_FALSE(m.defined[0][0]);
  EXPECT_TRUE(std::isnan(m.r[1][0]));
  EXPECT_EQ(m.n[1][1], 4u);
  const auto self = pearson_matrix(rs, "m1", "m1");
  EXPECT_NEAR(self.r[0][0], 1.0, 1e-12);
  EXPECT_NEAR(self.r[0][1], self.r[1][0], 1e-12);
  EXPECT_FALSE(pearson_matrix(rs, "m1", "m2", 5).defined[1][1]);
  EXPECT_THROW(pearson_matrix(rs, "m1", "m9"), NotFoundError);
}

TEST(LayerWeights, EntropyAndRatio) {
  const std::vector<double> uniform(13, 1.0 / 13);
  const auto u = layer_weight_diagnostics(uniform);
  EXPECT_NEAR(u.entropy, std::log(13.0), 1e-12);
  EXPECT_NEAR(u.entropy_bits, std::log2(13.0), 1e-12);
  EXPECT_NEAR(u.entropy_bits, 3.70, 0.005);
  EXPECT_NEAR(u.max_min_ratio, 1.0, 1e-12);
  std::vector<double> one_hot(13, 0.0);
  one_hot[4] = 1.0;
  const auto o = layer_weight_diagnostics(one_hot);
  EXPECT_EQ(o.entropy, 0.0);
  EXPECT_TRUE(std::isinf(o.max_min_ratio));
  EXPECT_THROW(layer_weight_diagnostics(std::vector<double>{0.5, 0.4}), DataError);
}

TEST(PartialCredit, ThreeCases) {
  const std::vector<std::string> one = {"Nom"}, two = {"Nom", "Acc", "Nom"}, wrong = {"Acc"}, none;
  EXPECT_EQ(partial_credit_score(one, "Nom"), 1.0);
  EXPECT_EQ(partial_credit_score(two, "Nom"), 0.5);
  EXPECT_EQ(partial_credit_score(wrong, "Nom"), 0.0);
  EXPECT_EQ(partial_credit_score(none, "Nom"), 0.0);
}

namespace {

TokenRecord tok(std::string form, FeatureMap feats = {}) {
  TokenRecord t;
  t.form = std::move(form);
  t.feats = std::move(feats);
  return t;
}

}  // namespace

TEST(ScoreExternal, OverlappingTokensAndBaseline) {
  TaskDataset d;
  d.spec = {"xx", "NOUN", "Case"};
  d.labels = {"Acc", "Nom"};
  d.train = {{{"a", "b"}, 0, "Nom"}, {{"a", "b"}, 0, "Nom"}, {{"a", "b"}, 0, "Acc"}};
  d.test = {{{"the", "houses", "stand"}, 1, "Nom"},
            {{"the", "houses", "stand"}, 1, "Nom"},
            {{"the", "houses", "stand"}, 1, "Acc"}};
  std::vector<SentenceRecord> pred(3);
  // Same tokenization, correct.
  pred[0].tokens = {tok("the"), tok("houses", {{"Case", "Nom"}}), tok("stand")};
  // Target split into two tokens with differing values: 1/2.
  pred[1].tokens = {tok("the"), tok("house", {{"Case", "Acc"}}), tok("s", {{"Case", "Nom"}}), tok("stand")};
  // Wrong value on the target; the neighbour's value does not count.
  pred[2].tokens = {tok("the"), tok("houses", {{"Case", "Nom"}}), tok("stand", {{"Case", "Acc"}})};
  const auto s = score_external(d, pred);
  EXPECT_EQ(s.instances, 3u);
  EXPECT_EQ(s.exact, 1u);
  EXPECT_EQ(s.partial, 1u);
  EXPECT_EQ(s.missed, 1u);
  EXPECT_NEAR(s.mean, 1.5 / 3, 1e-12);
  EXPECT_NEAR(majority_baseline(d), 2.0 / 3, 1e-12);
  pred.pop_back();
  EXPECT_THROW(score_external(d, pred), DataError);
}
