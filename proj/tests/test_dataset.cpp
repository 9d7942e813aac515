#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "robustcast/dataset.hpp"
#include "robustcast/error.hpp"
#include "robustcast/rng.hpp"
#include "test_util.hpp"

using namespace robustcast;

// Values computed with an independent Python transcription of SplitMix64 and
// FNV-1a.
TEST(Rng, SeedDerivationMatchesReference) {
  EXPECT_EQ(mix64(0), 16294208416658607535ULL);
  EXPECT_EQ(mix64(1), 10451216379200822465ULL);
  EXPECT_EQ(tag_hash("data"), 9609368131611085317ULL);
  EXPECT_EQ(tag_hash("model"), 11377574333308104762ULL);
  EXPECT_EQ(tag_hash("eval"), 15387972409001695407ULL);
  EXPECT_EQ(role_seed(42, "data"), 407788255400759297ULL);
  EXPECT_EQ(role_seed(42, "model"), 5797464694268670116ULL);
  EXPECT_EQ(role_seed(42, "eval"), 18256794227373185427ULL);
  EXPECT_EQ(derive_seed(7, 1, 2), 6199992908203689485ULL);
  EXPECT_EQ(derive_seed(7, 2, 1), 38156376729548495ULL);
}

TEST(Rng, EngineIsStandardMt19937_64) {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, DistributionsHaveExpectedMoments) {
  Rng rng(1);
  const int N = 200000;
  double su = 0, sn = 0, sn2 = 0;
  std::vector<int> counts(7, 0);
  for (int i = 0; i < N; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    ++counts[rng.below(7)];
  }
  EXPECT_NEAR(su / N, 0.5, 0.005);
  EXPECT_NEAR(sn / N, 0.0, 0.01);
  EXPECT_NEAR(sn2 / N, 1.0, 0.02);
  for (int c : counts) EXPECT_NEAR(c, N / 7.0, 5 * std::sqrt(N / 7.0));
}

TEST(Csv, ParsesHeaderTimestampAndValues) {
  std::istringstream in("date,a,b\n2020-01-01,1.5,2\n2020-01-02,-3,4e-1\n");
  const auto s = testutil::schema(2, {1});
  CsvOptions o;
  o.timestamp_column = true;
  s.validate();
  ChannelSchema named = s;
  named.names = {"a", "b"};
  const auto ds = parse_csv(in, named, o);
  ASSERT_EQ(ds.rows(), 2u);
  ASSERT_EQ(ds.channels(), 2u);
  EXPECT_EQ(ds.values(0, 0), 1.5);
  EXPECT_EQ(ds.values(1, 1), 0.4);
}

TEST(Csv, RejectsBadInput) {
  ChannelSchema s = testutil::schema(2, {0});
  s.names = {"a", "b"};
  {
    std::istringstream in("a,b\n1,2\n3\n");
    EXPECT_THROW(parse_csv(in, s), DataError);
  }
  {
    std::istringstream in("a,b\n1,x\n");
    EXPECT_THROW(parse_csv(in, s), DataError);
  }
  {
    std::istringstream in("a,c\n1,2\n");
    EXPECT_THROW(parse_csv(in, s), DataError);
  }
  {
    std::istringstream in("a,b\n1,2\n3,4\n");
    CsvOptions o;
    o.min_rows = 3;
    EXPECT_THROW(parse_csv(in, s, o), DataError);
  }
  EXPECT_THROW(load_csv("/nonexistent/file.csv", s), DataError);
}

TEST(Schema, ValidateRejectsOutOfRangeTarget) {
  ChannelSchema s = testutil::schema(3, {3});
  EXPECT_THROW(s.validate(), ConfigError);
  s.targets = {};
  EXPECT_THROW(s.validate(), ConfigError);
  s.targets = {0, 0};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Split, ChronologicalBoundaries) {
  const auto b = chronological_split(17420, {}, {96, 96});
  EXPECT_EQ(b.train_end, 10452u);
  EXPECT_EQ(b.val_end, 13936u);
  EXPECT_EQ(b.rows, 17420u);
}

TEST(Split, TooShortSplitNamesTheSplit) {
  try {
    chronological_split(400, {}, {96, 96});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("validation"), std::string::npos) << e.what();
  }
}

TEST(Standardize, PopulationConvention) {
  TimeSeriesDataset ds;
  ds.values.resize(4, 2);
  ds.values << 0, 5, 2, 5, 100, 5, 100, 5;
  ds.schema = testutil::schema(2, {0});
  const SplitBounds b{2, 3, 4};
  const auto st = fit_standardizer(ds, b);
  EXPECT_EQ(st.mean(0), 1.0);
  EXPECT_EQ(st.std(0), 1.0);
  EXPECT_EQ(st.mean(1), 5.0);
  EXPECT_EQ(st.std(1), 1.0);  // constant channel
  const auto z = apply_standardizer(ds, st);
  EXPECT_EQ(z.values(0, 0), -1.0);
  EXPECT_EQ(z.values(1, 0), 1.0);
  const auto back = invert_standardizer(z, st);
  EXPECT_TRUE(back.values.isApprox(ds.values, 1e-15));
}

TEST(Standardize, TrainSplitHasZeroMean) {
  TimeSeriesDataset ds;
  ds.values = testutil::random_walk(1000, 3, 9) * 3.0;
  ds.values.array() += 10.0;
  ds.schema = testutil::schema(3, {0});
  const auto b = chronological_split(1000, {}, {24, 12});
  const auto z = apply_standardizer(ds, fit_standardizer(ds, b));
  for (Eigen::Index j = 0; j < 3; ++j) {
    const auto col = z.values.col(j).head(static_cast<Eigen::Index>(b.train_end));
    EXPECT_LT(std::abs(col.mean()), 1e-9);
    EXPECT_NEAR(std::sqrt((col.array() - col.mean()).square().mean()), 1.0, 1e-9);
  }
}

TEST(Windows, EnumerateInsideSplit) {
  const SplitBounds b{60, 80, 100};
  const auto t = enumerate_windows(b, Split::Test, {5, 2});
  ASSERT_EQ(t.size(), 14u);
  EXPECT_EQ(t.front(), 80u);
  EXPECT_EQ(t.back(), 93u);
  const auto v = enumerate_windows(b, Split::Validation, {5, 2});
  EXPECT_EQ(v.front(), 60u);
  EXPECT_EQ(v.back(), 73u);
  EXPECT_THROW(enumerate_windows(b, Split::Test, {15, 6}), DataError);
}

TEST(Windows, MakeWindowSlicesInputAndTargets) {
  Matrix v(10, 3);
  for (Eigen::Index i = 0; i < 10; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) v(i, j) = 10.0 * static_cast<double>(i) + static_cast<double>(j);
  const auto ds = testutil::dataset(v, testutil::schema(3, {2, 0}));
  const auto w = make_window(*ds, 3, {4, 2});
  ASSERT_EQ(w.x.rows(), 4);
  ASSERT_EQ(w.x.cols(), 3);
  ASSERT_EQ(w.y.rows(), 2);
  ASSERT_EQ(w.y.cols(), 2);
  EXPECT_EQ(w.x(0, 0), 30.0);
  EXPECT_EQ(w.x(3, 2), 62.0);
  EXPECT_EQ(w.y(0, 0), 72.0);  // target order follows the schema
  EXPECT_EQ(w.y(1, 1), 80.0);
}

TEST(Windows, SamplingIsSeededAndStaysInSet) {
  const std::vector<std::size_t> set{80, 81, 82, 83, 84};
  const auto a = sample_window_starts(set, 1000, 11);
  const auto b = sample_window_starts(set, 1000, 11);
  const auto c = sample_window_starts(set, 1000, 12);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  std::set<std::size_t> seen(a.begin(), a.end());
  EXPECT_EQ(seen, std::set<std::size_t>(set.begin(), set.end()));
  EXPECT_THROW(sample_window_starts({}, 3, 1), DataError);
}
