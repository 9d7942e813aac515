#include <gtest/gtest.h>

#include <cmath>

#include "robustcast/error.hpp"
#include "robustcast/forecast.hpp"
#include "robustcast/score.hpp"
#include "robustcast/stats.hpp"
#include "test_util.hpp"

using namespace robustcast;

namespace {

RobustnessReport seasonal_report(std::size_t K, std::uint64_t seed) {
  auto ds = testutil::dataset(testutil::daily(500, 3, 4, 0.3), testutil::schema(3, {0, 1}));
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + 36 <= 500; ++s) starts.push_back(s);
  EvalConfig c;
  c.K = K;
  c.eval_seed = seed;
  return evaluate(SeasonalNaive(24, 12, {0, 1}), WindowSet(ds, starts, {24, 12}), c, "daily");
}

}  // namespace

TEST(Quantile, LinearInterpolationRule) {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  const auto [lo, hi] = percentile_interval(v, 0.95);
  EXPECT_NEAR(lo, 3.475, 1e-12);
  EXPECT_NEAR(hi, 97.525, 1e-12);
  const std::vector<double> s{1, 2, 4};
  EXPECT_EQ(quantile_sorted(s, 0.0), 1.0);
  EXPECT_EQ(quantile_sorted(s, 0.75), 3.0);
  EXPECT_EQ(quantile_sorted(s, 1.0), 4.0);
  EXPECT_THROW(percentile_interval({}, 0.95), ConfigError);
}

TEST(Quantile, UpperBoundIsMonotone) {
  std::vector<double> v{0.3, 1.2, -0.5, 2.2, 0.9, 1.1, 0.0};
  const double hi = percentile_interval(v, 0.9).second;
  v.push_back(hi + 1.0);
  EXPECT_GE(percentile_interval(v, 0.9).second, hi);
}

TEST(Ranks, AverageRanksAndSpearman) {
  const std::vector<double> v{10, 20, 20, 5};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2, 3.5, 3.5, 1}));
  const std::vector<double> a{1, 2, 3, 4, 5, 6, 7};
  const std::vector<double> b{1, 2, 4, 3, 5, 6, 7};
  EXPECT_NEAR(spearman(a, b), 1.0 - 6.0 * 2.0 / (7.0 * 48.0), 1e-12);
  EXPECT_NEAR(spearman(a, b), 0.964, 5e-4);
  EXPECT_EQ(spearman(a, a), 1.0);
  const std::vector<double> c{3, 3, 3, 3, 3, 3, 3};
  EXPECT_THROW(spearman(a, c), ConfigError);
}

TEST(Ranks, SpearmanInvariantUnderMonotoneTransforms) {
  const auto x = testutil::white_noise(30, 2, 7);
  std::vector<double> a, b, ta, tb;
  for (Eigen::Index i = 0; i < 30; ++i) {
    a.push_back(x(i, 0));
    b.push_back(x(i, 0) + 0.5 * x(i, 1));
    ta.push_back(std::exp(3.0 * a.back()));
    tb.push_back(std::pow(b.back() + 10.0, 3.0));
  }
  EXPECT_EQ(spearman(a, b), spearman(ta, tb));
}

TEST(LogFit, Examples) {
  const std::vector<double> x{1, 2, 4, 8};
  std::vector<double> y;
  for (double v : x) y.push_back(2 * v);
  auto f = logspace_fit(x, y);
  EXPECT_NEAR(f.b, 1.0, 1e-12);
  EXPECT_NEAR(f.a, std::log(2.0), 1e-12);
  f = logspace_fit(x, std::vector<double>{3, 3, 3, 3});
  EXPECT_NEAR(f.b, 0.0, 1e-12);
  EXPECT_NEAR(f.a, std::log(3.0), 1e-12);
  EXPECT_THROW(logspace_fit(x, std::vector<double>{1, 0, 1, 1}), ConfigError);
  EXPECT_THROW(logspace_fit(std::vector<double>{2, 2}, std::vector<double>{1, 3}), ConfigError);
}

TEST(LogFit, MatchesClosedFormOnRandomPoints) {
  const std::vector<double> x{0.31, 0.72, 1.4, 2.2, 5.9};
  const std::vector<double> y{0.5, 0.61, 1.9, 2.0, 3.3};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < 5; ++i) {
    const double lx = std::log(x[static_cast<std::size_t>(i)]), ly = std::log(y[static_cast<std::size_t>(i)]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double b = (5 * sxy - sx * sy) / (5 * sxx - sx * sx);
  const double a = (sy - b * sx) / 5;
  const auto f = logspace_fit(x, y);
  EXPECT_NEAR(f.b, b, 1e-9);
  EXPECT_NEAR(f.a, a, 1e-9);
}

TEST(Bootstrap, ConstantLossesGivePointIntervals) {
  RobustnessReport r;
  r.model_id = "flat";
  r.scenarios = {Scenario::Drift, Scenario::Noise};
  // Dyadic values keep every mean exact.
  r.clean_losses.assign(50, 0.25);
  r.perturbed_losses = {std::vector<double>(50, 0.375), std::vector<double>(50, 0.75)};
  r.summary = summarize(0.25, std::vector<double>{0.375, 0.75});
  const auto stats = default_window_statistics(r);
  const auto iv = bootstrap_windows(r, 200, 5, stats);
  for (const auto& [name, v] : iv) {
    EXPECT_EQ(v.lo, v.point) << name;
    EXPECT_EQ(v.hi, v.point) << name;
    EXPECT_EQ(v.replicates, 200u);
  }
  EXPECT_EQ(iv.at("d_w").point, r.summary.d_w);
}

TEST(Bootstrap, ReproducibleAndWorkerIndependent) {
  const auto r = seasonal_report(400, 3);
  const auto stats = default_window_statistics(r);
  const auto a = bootstrap_windows(r, 300, 17, stats, 0.95, 1);
  const auto b = bootstrap_windows(r, 300, 17, stats, 0.95, 6);
  const auto c = bootstrap_windows(r, 300, 18, stats, 0.95, 1);
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, v] : a) {
    EXPECT_EQ(v.lo, b.at(name).lo) << name;
    EXPECT_EQ(v.hi, b.at(name).hi) << name;
    EXPECT_LE(v.lo, v.hi);
  }
  EXPECT_NE(a.at("d_w").lo, c.at("d_w").lo);
}

TEST(Bootstrap, ReplicatesKeepScoreIdentities) {
  const auto r = seasonal_report(300, 4);
  for (const auto& s : bootstrap_window_replicates(r, 100, 9)) {
    ASSERT_TRUE(s.degradation_defined);
    EXPECT_NEAR(s.mse_w, s.d_w * s.mse_c, 4 * std::numeric_limits<double>::epsilon() * s.mse_w);
    EXPECT_EQ(s.mse_w, s.mse_p[s.worst]);
  }
}

TEST(Bootstrap, PairIntervals) {
  std::vector<PairDelta> deltas(3);
  deltas[0].d_w = -0.1;
  deltas[1].d_w = 0.2;
  deltas[2].d_w = 0.05;
  for (auto& d : deltas) d.tau = -d.mpc;
  const auto a = bootstrap_pairs(deltas, 500, 2);
  const auto b = bootstrap_pairs(deltas, 500, 2);
  EXPECT_EQ(a.at("d_w").lo, b.at("d_w").lo);
  EXPECT_NEAR(a.at("d_w").point, 0.05, 1e-15);
  EXPECT_GE(a.at("d_w").lo, -0.1 - 1e-15);
  EXPECT_LE(a.at("d_w").hi, 0.2 + 1e-15);
  for (const auto& f : kPairDeltaFields) EXPECT_TRUE(a.count(f)) << f;
  EXPECT_THROW(delta_field(deltas[0], "nope"), ConfigError);
}
