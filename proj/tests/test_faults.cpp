#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "robustcast/error.hpp"
#include "robustcast/faults.hpp"
#include "test_util.hpp"

using namespace robustcast;

namespace {

Matrix column_matrix(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(Scenarios, EndpointTable) {
  struct Row {
    Scenario s;
    double lo, hi;
  };
  const Row rows[] = {
      {Scenario::Drift, 0.0, 0.75},       {Scenario::Attenuation, 1.0, 0.25}, {Scenario::Noise, 0.0, 1.0},
      {Scenario::Spike, 0.0, 7.5},        {Scenario::TimeStretch, 1.0, 5.0},  {Scenario::TimeCompress, 1.0, 0.1},
      {Scenario::StuckSensor, 0.0, 1.0},  {Scenario::MissingData, 0.0, 0.5},
  };
  for (const auto& r : rows) {
    const auto& spec = benchmark_spec(r.s);
    EXPECT_EQ(severity_map(spec, 0.0), r.lo) << scenario_name(r.s);
    EXPECT_EQ(severity_map(spec, 1.0), r.hi) << scenario_name(r.s);
  }
  EXPECT_DOUBLE_EQ(severity_map(benchmark_spec(Scenario::Drift), 0.5), 0.375);
  EXPECT_THROW(severity_map(benchmark_spec(Scenario::Drift), 1.5), ConfigError);
}

TEST(Scenarios, NamesOrderAndClasses) {
  for (auto s : kBenchmarkScenarios) EXPECT_EQ(parse_scenario(scenario_name(s)), s);
  for (auto s : kTransferFamilies) EXPECT_EQ(parse_scenario(scenario_name(s)), s);
  EXPECT_THROW(parse_scenario("drift"), ConfigError);
  EXPECT_EQ(scenario_class(Scenario::Drift), ScenarioClass::Value);
  EXPECT_EQ(scenario_class(Scenario::TimeCompress), ScenarioClass::Timing);
  EXPECT_EQ(scenario_class(Scenario::MissingData), ScenarioClass::Availability);
  const std::vector<Scenario> shuffled{Scenario::MissingData, Scenario::Drift, Scenario::Noise};
  EXPECT_EQ(canonical_scenario_order(shuffled),
            (std::vector<Scenario>{Scenario::Drift, Scenario::Noise, Scenario::MissingData}));
  const std::vector<Scenario> dup{Scenario::Drift, Scenario::Drift};
  EXPECT_THROW(canonical_scenario_order(dup), ConfigError);
  const std::vector<Scenario> transfer{Scenario::Scaling};
  EXPECT_THROW(canonical_scenario_order(transfer), ProtocolError);
}

TEST(ChannelCount, CoupledRule) {
  EXPECT_EQ(channel_count(0.0, 7, 0.5), 0u);
  EXPECT_EQ(channel_count(0.5, 7, 0.5), 2u);
  EXPECT_EQ(channel_count(1.0, 7, 0.5), 4u);
  EXPECT_EQ(channel_count(1e-6, 7, 0.5), 1u);
  EXPECT_EQ(channel_count(1.0, 1, 0.5), 1u);
  EXPECT_EQ(channel_count(1.0, 862, 0.5), 431u);
}

TEST(ChannelCount, FixedFractionRule) {
  EXPECT_EQ(channel_count_fixed(0.0, 65, 0.25), 0u);
  EXPECT_EQ(channel_count_fixed(0.3, 65, 0.25), 17u);
  EXPECT_EQ(channel_count_fixed(0.3, 862, 0.5), 431u);
  EXPECT_EQ(channel_count_fixed(1.0, 30, 0.1), 3u);  // 0.1 * 30 rounds above 3
  EXPECT_EQ(channel_count(ChannelRule::parse("fixed:0.25"), 0.9, 65), 17u);
  EXPECT_THROW(ChannelRule::parse("fixed:1.5").validate(), ConfigError);
  EXPECT_THROW(ChannelRule::parse("random"), ConfigError);
}

TEST(Draws, WindowLengthsAtFullSeverity) {
  const auto sch = testutil::schema(7, {0});
  const auto rule = ChannelRule::coupled();
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const auto stuck = draw_perturbation(benchmark_spec(Scenario::StuckSensor), rule, 1.0, 96, sch, rng);
    ASSERT_EQ(stuck.channels.size(), 4u);
    for (const auto& w : stuck.windows) {
      EXPECT_EQ(w.length, 95u);
      EXPECT_EQ(w.first, 1u);  // 1-based start 2
    }
    const auto miss = draw_perturbation(benchmark_spec(Scenario::MissingData), rule, 1.0, 96, sch, rng);
    ASSERT_EQ(miss.channels.size(), 7u);
    for (const auto& w : miss.windows) {
      EXPECT_EQ(w.length, 48u);
      EXPECT_EQ(w, miss.windows[0]);
      EXPECT_GE(w.first, 1u);
      EXPECT_LE(w.first + w.length, 96u);
    }
  }
}

TEST(Draws, DiscreteChannelsAreNeverPerturbedByValueFaults) {
  const auto sch = testutil::schema(4, {0}, {true, false, true, false});
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto d = draw_perturbation(benchmark_spec(Scenario::Drift), ChannelRule::coupled(), 1.0, 24, sch, rng);
    for (auto c : d.channels) EXPECT_TRUE(c == 0 || c == 2);
  }
}

TEST(Kernels, WarpMatchesHandEvaluation) {
  const Matrix x = column_matrix({10, 20, 30, 40, 50});
  PerturbationDraw d;
  d.channels = {0};
  d.windows = {TimeWindow{0, 5}};
  const Matrix y = apply_timewarp(x, d, 2.0);
  EXPECT_EQ(y, column_matrix({10, 10, 15, 20, 25}));
  EXPECT_TRUE(bitwise_equal(apply_timewarp(x, d, 1.0), x));
}

TEST(Kernels, CompressReadsAheadAndClips) {
  Matrix x(20, 1);
  for (Eigen::Index i = 0; i < 20; ++i) x(i, 0) = static_cast<double>(i + 1);  // value = 1-based index
  PerturbationDraw d;
  d.channels = {0};
  d.windows = {TimeWindow{1, 3}};  // 1-based a = 2
  const Matrix y = apply_timewarp(x, d, 0.1);
  EXPECT_EQ(y(1, 0), 11.0);  // tau = a - 1 + 1 / 0.1
  EXPECT_EQ(y(2, 0), 20.0);  // tau = 21, clipped at n
  EXPECT_EQ(y(3, 0), 20.0);
  EXPECT_EQ(y(0, 0), 1.0);
  EXPECT_EQ(y(4, 0), 5.0);
}

TEST(Kernels, InterpClipsAndInterpolates) {
  const std::vector<double> v{1, 3, 7};
  EXPECT_EQ(interp(v, 0.2), 1.0);
  EXPECT_EQ(interp(v, 1.5), 2.0);
  EXPECT_EQ(interp(v, 2.25), 4.0);
  EXPECT_EQ(interp(v, 9.0), 7.0);
}

TEST(Kernels, ValueFaultsAtFullSeverity) {
  const auto sch = testutil::schema(1, {0});
  const Matrix zeros = Matrix::Zero(8, 1);
  Rng rng(1);
  auto d = draw_perturbation(benchmark_spec(Scenario::Drift), ChannelRule::coupled(), 1.0, 8, sch, rng);
  EXPECT_TRUE((apply_drift(zeros, d).array() == 0.75).all());

  const Matrix fours = Matrix::Constant(8, 1, 4.0);
  d = draw_perturbation(benchmark_spec(Scenario::Attenuation), ChannelRule::coupled(), 1.0, 8, sch, rng);
  EXPECT_TRUE((apply_attenuation(fours, d).array() == 1.0).all());

  d = draw_perturbation(benchmark_spec(Scenario::Spike), ChannelRule::coupled(), 1.0, 8, sch, rng);
  const Matrix sp = apply_spike(zeros, d);
  EXPECT_EQ(sp.sum(), 7.5);
  EXPECT_EQ((sp.array() != 0.0).count(), 1);
  EXPECT_EQ(sp(0, 0), 0.0);  // the spike step is drawn from {2..n}
}

TEST(Kernels, StuckHoldsPreviousValue) {
  Matrix x(6, 1);
  x << 1, 2, 3, 4, 5, 6;
  PerturbationDraw d;
  d.channels = {0};
  d.windows = {TimeWindow{2, 3}};
  Matrix expect(6, 1);
  expect << 1, 2, 2, 2, 2, 6;
  EXPECT_EQ(apply_stuck(x, d), expect);
}

TEST(Kernels, NoiseVarianceMatchesTheta) {
  const auto sch = testutil::schema(3, {0});
  const Matrix x = Matrix::Zero(16, 3);
  Rng rng(17);
  const double s = 0.6;
  const double theta = severity_map(benchmark_spec(Scenario::Noise), s);
  double sum = 0, sum2 = 0;
  std::size_t count = 0;
  for (int k = 0; k < 100000; ++k) {
    const auto d = draw_perturbation(benchmark_spec(Scenario::Noise), ChannelRule::coupled(), s, 16, sch, rng);
    const Matrix y = apply_noise(x, d);
    for (auto c : d.channels)
      for (Eigen::Index i = 0; i < 16; ++i) {
        const double e = y(i, static_cast<Eigen::Index>(c));
        sum += e;
        sum2 += e * e;
        ++count;
      }
  }
  const double mean = sum / static_cast<double>(count);
  const double var = sum2 / static_cast<double>(count) - mean * mean;
  EXPECT_NEAR(var, theta * theta, 0.05 * theta * theta);
}

// Every scenario at s = 0 is the identity; at s > 0 only entries inside the
// drawn (channel, window) cells may change.
TEST(Kernels, EndpointIdentityAndLocality) {
  const auto sch = testutil::schema(5, {0, 3}, {true, true, false, true, true});
  const std::size_t n = 24;
  for (auto sc : kBenchmarkScenarios) {
    const auto& spec = benchmark_spec(sc);
    for (int k = 0; k < 1000; ++k) {
      Matrix x = testutil::white_noise(n, 5, static_cast<std::uint64_t>(k) + 1000);
      Rng rng(derive_seed(99, ordinal(sc), static_cast<std::uint64_t>(k)));
      const auto d0 = draw_perturbation(spec, ChannelRule::coupled(), 0.0, n, sch, rng);
      ASSERT_TRUE(bitwise_equal(apply_perturbation(x, d0), x)) << scenario_name(sc);

      const double s = 1e-3 + 0.999 * rng.uniform01();
      const auto d = draw_perturbation(spec, ChannelRule::coupled(), s, n, sch, rng);
      const Matrix y = apply_perturbation(x, d);
      std::vector<std::vector<bool>> inside(n, std::vector<bool>(5, false));
      for (std::size_t c = 0; c < d.channels.size(); ++c)
        for (std::size_t i = d.windows[c].first; i < d.windows[c].first + d.windows[c].length; ++i)
          inside[i][d.channels[c]] = true;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < 5; ++j)
          if (!inside[i][j])
            ASSERT_EQ(y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)),
                      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))
                << scenario_name(sc) << " draw " << k << " changed (" << i << ", " << j << ")";
    }
  }
}

TEST(Kernels, PerturbIsDeterministicPerStream) {
  const auto sch = testutil::schema(4, {0});
  const Matrix x = testutil::white_noise(32, 4, 5);
  for (auto sc : kBenchmarkScenarios) {
    Rng a(7), b(7);
    EXPECT_TRUE(bitwise_equal(perturb(x, sc, 0.8, ChannelRule::coupled(), sch, a),
                              perturb(x, sc, 0.8, ChannelRule::coupled(), sch, b)));
  }
}

TEST(Transfer, FamilyExamplesAtFullSeverity) {
  const auto sch = testutil::schema(1, {0});
  Rng rng(1);
  EXPECT_EQ(apply_transfer(Matrix::Constant(5, 1, 0.5), Scenario::Scaling, 1.0, sch, rng)(2, 0), 1.0);

  const Matrix drift = apply_transfer(Matrix::Zero(5, 1), Scenario::LinearDrift, 1.0, sch, rng);
  EXPECT_EQ(drift(0, 0), 0.0);
  EXPECT_EQ(drift(4, 0), 1.0);

  EXPECT_EQ(apply_transfer(Matrix::Constant(5, 1, 2.5), Scenario::TrimmingConstant, 1.0, sch, rng)(0, 0), 1.0);
  EXPECT_EQ(apply_transfer(Matrix::Constant(5, 1, -2.5), Scenario::TrimmingConstant, 1.0, sch, rng)(0, 0), -1.0);

  const Matrix x = testutil::white_noise(10, 1, 3);
  for (auto f : kTransferFamilies) EXPECT_TRUE(bitwise_equal(apply_transfer(x, f, 0.0, sch, rng), x));
  EXPECT_THROW(apply_transfer(x, Scenario::Drift, 0.5, sch, rng), ProtocolError);
}

TEST(Transfer, PacketLossHoldsValues) {
  const auto sch = testutil::schema(1, {0});
  Matrix x(40, 1);
  for (Eigen::Index i = 0; i < 40; ++i) x(i, 0) = static_cast<double>(i);
  Rng rng(2);
  const Matrix y = apply_transfer(x, Scenario::PacketLoss, 1.0, sch, rng);
  EXPECT_EQ(y(0, 0), 0.0);
  bool any_held = false;
  for (Eigen::Index i = 1; i < 40; ++i) {
    // Every row either keeps its value or repeats the previous output row.
    EXPECT_TRUE(y(i, 0) == x(i, 0) || y(i, 0) == y(i - 1, 0));
    any_held |= y(i, 0) != x(i, 0);
  }
  EXPECT_TRUE(any_held);
}
