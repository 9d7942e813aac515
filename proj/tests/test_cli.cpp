#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "robustcast/config.hpp"
#include "robustcast/error.hpp"
#include "robustcast/pipeline.hpp"
#include "robustcast/rng.hpp"
#include "test_util.hpp"

using namespace robustcast;
using nlohmann::json;

#ifndef ROBUSTCAST_CLI
#error "ROBUSTCAST_CLI must name the robustcast executable"
#endif

namespace {

// Three continuous channels plus a 0/1 flag.
Matrix synthetic(std::size_t rows) {
  Matrix m(rows, 4);
  m.leftCols(3) = testutil::daily(rows, 3, 11, 0.2);
  for (std::size_t i = 0; i < rows; ++i) m(static_cast<Eigen::Index>(i), 3) = (i / 7) % 2;
  return m;
}

class Pipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    testutil::write_csv(dir.file("syn.csv"), synthetic(900), {"a", "b", "c", "flag"});
  }

  json config() const {
    json j = json::parse(R"({
      "dataset": {"name": "syn", "timestamp_column": true, "discrete": ["flag"], "targets": ["a", "b"]},
      "window": {"input": 48, "horizon": 24},
      "eval": {"K": 120, "bootstrap": 50, "block_size": 16},
      "models": [{"kind": "seasonal_naive", "periods": [1, 24]},
                 {"kind": "linear", "ridge": [0.1, 1.0], "train_windows": 300}],
      "selection": {"val_windows": 100}
    })");
    j["dataset"]["path"] = dir.file("syn.csv");
    return j;
  }

  std::string write_config(const json& j, const std::string& name = "run.json") const {
    std::ofstream(dir.file(name)) << j.dump(2);
    return dir.file(name);
  }

  testutil::TempDir dir{"pipeline"};
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ROBUSTCAST_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, RoundTripsThroughJson) {
  const json j = json::parse(R"({
    "dataset": {"path": "x.csv", "targets": [0, 2]},
    "window": {"input": 24, "horizon": 12},
    "eval": {"K": 77, "scenarios": ["Noise", "Drift"], "channel_rule": "fixed:0.25"},
    "seeds": {"master": 9, "eval": 5},
    "models": [{"kind": "linear", "ridge": [0.5]}, {"kind": "constant", "value": 1.5}],
    "method": {"kind": "smoothing", "sigma": 0.2, "queries": 8},
    "selection": {"selector": "perturbed", "val_windows": 10}
  })");
  const RunConfig a = parse_run_config(j);
  const RunConfig b = parse_run_config(json::parse(to_json(a).dump()));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(b.dataset.target_indices, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(b.K, 77u);
  EXPECT_EQ(b.scenarios.size(), 2u);
  EXPECT_EQ(b.selector, SelectorMode::WorstScenarioPerturbedValidation);
  EXPECT_EQ(b.resolved_eval_seed(), 5u);
}

TEST(Config, TargetForms) {
  auto all = parse_run_config(json::parse(R"({"dataset": {"path": "x", "targets": "all"}})"));
  EXPECT_TRUE(all.dataset.all_targets);
  EXPECT_EQ(to_json(all)["dataset"]["targets"], "all");
  EXPECT_THROW(parse_run_config(json::parse(R"({"dataset": {"path": "x", "targets": [-1]}})")), ConfigError);
  EXPECT_THROW(parse_run_config(json::parse(R"({"dataset": {"path": "x", "targets": "some"}})")), ConfigError);
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(parse_run_config(json::parse(R"({"dataset": {"path": "x", "targets": "all"}, "evall": {}})")),
               ConfigError);
  EXPECT_THROW(parse_run_config(json::parse(R"({"dataset": {"path": "x", "targets": "all"}, "eval": {"k": 5}})")),
               ConfigError);
  EXPECT_THROW(parse_run_config(json::parse(R"({"eval": {}})")), ConfigError);
}

TEST(Config, SeedRoles) {
  RunConfig c = parse_run_config(json::parse(R"({"dataset": {"path": "x", "targets": "all"}})"));
  EXPECT_EQ(c.data_seed(), 407788255400759297ULL);
  EXPECT_EQ(c.model_seed(), 5797464694268670116ULL);
  EXPECT_EQ(c.resolved_eval_seed(), 18256794227373185427ULL);
  c.eval_seed = 3;
  EXPECT_EQ(c.data_seed(), 407788255400759297ULL);
  EXPECT_EQ(c.model_seed(), 5797464694268670116ULL);
  EXPECT_EQ(c.resolved_eval_seed(), 3u);
}

TEST_F(Pipeline, ValidateReportsCounts) {
  const RunConfig c = parse_run_config(config());
  const auto d = run_validate(c, nullptr);
  EXPECT_EQ(d.rows, 900u);
  EXPECT_EQ(d.channels, 4u);
  EXPECT_EQ(d.continuous, 3u);
  EXPECT_EQ(d.bounds.train_end, 540u);
  EXPECT_EQ(d.bounds.val_end, 720u);
  EXPECT_EQ(d.test_windows, 180u - 72u + 1u);
}

TEST_F(Pipeline, TargetIndicesMatchNames) {
  json by_index = config();
  by_index["dataset"]["targets"] = {0, 1};
  const auto s = resolve_schema(parse_run_config(by_index).dataset);
  EXPECT_EQ(s.targets, (std::vector<std::size_t>{0, 1}));
  by_index["dataset"]["targets"] = {9};
  EXPECT_THROW(resolve_schema(parse_run_config(by_index).dataset), ConfigError);
}

TEST_F(Pipeline, EvaluateIsReproducibleAcrossWorkers) {
  json j = config();
  j["eval"]["workers"] = 1;
  const RunConfig c1 = parse_run_config(j);
  j["eval"]["workers"] = 8;
  const RunConfig c8 = parse_run_config(j);
  const auto r1 = run_evaluate(c1, dir.file("w1"), nullptr);
  run_evaluate(c1, dir.file("w1b"), nullptr);
  run_evaluate(c8, dir.file("w8"), nullptr);
  const std::string a = testutil::read_file(dir.file("w1/report.json"));
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, testutil::read_file(dir.file("w1b/report.json")));
  EXPECT_EQ(a, testutil::read_file(dir.file("w8/report.json")));
  EXPECT_EQ(testutil::read_file(dir.file("w1/per_scenario.csv")), testutil::read_file(dir.file("w8/per_scenario.csv")));
  for (const char* f : {"summary.csv", "config.json"})
    EXPECT_TRUE(std::filesystem::exists(dir.file(std::string("w1/") + f))) << f;

  ASSERT_EQ(r1.reports.size(), 2u);
  const auto report = json::parse(a);
  EXPECT_EQ(report["command"], "evaluate");
  EXPECT_EQ(report["reports"].size(), 2u);
  EXPECT_EQ(r1.models[0].winner, "seasonal_naive_p24");
  // The seasonal naive model is the mCE reference for both.
  ASSERT_TRUE(r1.reports[0].reference.has_value());
  EXPECT_EQ(r1.reports[0].reference->mce, 1.0);
}

TEST_F(Pipeline, CompareHasZeroDeltaForDeterministicEnsemble) {
  json j = config();
  j["models"] = json::array({{{"kind", "seasonal_naive"}, {"periods", {1, 24}}}});
  j["methods"] = json::parse(R"([{"kind": "ensemble", "members": 2}, {"kind": "augmentation"},
                                  {"kind": "smoothing", "queries": 4}])");
  const auto r = run_compare(parse_run_config(j), dir.file("cmp"), nullptr);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].method, "ensemble");
  for (const auto& f : kPairDeltaFields) EXPECT_EQ(delta_field(r.rows[0].delta, f), 0.0) << f;
  for (const auto& row : r.rows) EXPECT_EQ(row.delta.tau, -row.delta.mpc);
  ASSERT_EQ(r.skipped.size(), 1u);
  const std::string deltas = testutil::read_file(dir.file("cmp/deltas.csv"));
  EXPECT_EQ(deltas.rfind("# delta = variant - baseline", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir.file("cmp/compare.json")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("cmp/pair_intervals.csv")));
}

TEST_F(Pipeline, RepeatedSeedHasNoShift) {
  json j = config();
  j["seeds"] = {{"eval_seeds", {5, 5}}};
  run_sensitivity(parse_run_config(j), SensitivityMode::EvalSeed, dir.file("sens"), nullptr);
  const auto s = json::parse(testutil::read_file(dir.file("sens/sensitivity.json")));
  const auto& agg = s["aggregate"];
  EXPECT_EQ(agg["max_shift_d_w"], 0.0);
  EXPECT_EQ(agg["max_shift_mse_w"], 0.0);
  EXPECT_EQ(agg["min_spearman_d_w"], 1.0);
  EXPECT_EQ(agg["min_spearman_profile"], 1.0);
  EXPECT_EQ(agg["min_exact_agreement"], "2/2");
}

TEST(SeedSensitivity, SummaryOfShiftedSeeds) {
  auto make = [](double mse_c, std::vector<double> mse_p) {
    RobustnessReport r;
    r.scenarios = {Scenario::Drift, Scenario::Noise, Scenario::MissingData};
    r.summary = summarize(mse_c, mse_p);
    return r;
  };
  std::vector<std::vector<RobustnessReport>> reports{
      {make(1.0, {1.2, 1.5, 1.1}), make(2.0, {2.2, 2.4, 3.6})},
      {make(1.0, {1.2, 1.4, 1.6}), make(2.0, {2.2, 2.5, 3.8})},
  };
  const auto s = summarize_seed_sensitivity({1, 2}, {"x", "y"}, reports);
  EXPECT_NEAR(s.max_shift_d_w, 0.1, 1e-12);
  EXPECT_NEAR(s.mean_shift_d_w, 0.1, 1e-12);
  EXPECT_EQ(s.max_shift_mse_c, 0.0);
  EXPECT_EQ(s.min_exact_agreement, 1u);
  EXPECT_EQ(s.min_class_agreement, 1u);
  ASSERT_TRUE(s.min_spearman_d_w.has_value());
  EXPECT_EQ(*s.min_spearman_d_w, 1.0);
  EXPECT_NEAR(s.min_spearman_profile, -0.5, 1e-12);
}

TEST_F(Pipeline, ChannelRuleLeavesCleanLossAlone) {
  run_sensitivity(parse_run_config(config()), SensitivityMode::ChannelRule, dir.file("rule"), nullptr);
  std::ifstream in(dir.file("rule/sensitivity_channel-rule.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "model,rule,k,mse_c,d_w,mse_w,worst_scenario,worst_class");
  std::map<std::string, std::set<std::string>> clean;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    ASSERT_EQ(f.size(), 8u);
    clean[f[0]].insert(f[3]);
    ++rows;
  }
  EXPECT_EQ(rows, 2u * 3u);
  for (const auto& [model, values] : clean) EXPECT_EQ(values.size(), 1u) << model;
}

TEST_F(Pipeline, ZeroCleanLossWritesOutputsThenFails) {
  // A constant series and the constant forecaster with the same value.
  Matrix flat = Matrix::Zero(900, 4);
  testutil::write_csv(dir.file("flat.csv"), flat, {"a", "b", "c", "flag"});
  json j = config();
  j["dataset"]["path"] = dir.file("flat.csv");
  j["models"] = json::array({{{"kind", "constant"}, {"value", 0.0}}});
  EXPECT_THROW(run_evaluate(parse_run_config(j), dir.file("flat"), nullptr), DegradationUndefinedError);
  const auto report = json::parse(testutil::read_file(dir.file("flat/report.json")));
  EXPECT_EQ(report["reports"][0]["summary"]["degradation_defined"], false);
  EXPECT_TRUE(report["reports"][0]["summary"]["d_w"].is_null());

  EXPECT_EQ(run_cli("evaluate --quiet --config " + write_config(j, "flat.json") + " --out " + dir.file("flat_cli")),
            4);
  EXPECT_TRUE(std::filesystem::exists(dir.file("flat_cli/report.json")));
}

TEST_F(Pipeline, CliExitCodes) {
  EXPECT_EQ(run_cli("validate --config " + write_config(config())), 0);
  EXPECT_EQ(run_cli("evaluate"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);

  json bad = config();
  bad["dataset"]["targets"] = {7};
  EXPECT_EQ(run_cli("validate --config " + write_config(bad, "bad_target.json")), 2);

  json short_split = config();
  short_split["window"] = {{"input", 300}, {"horizon", 96}};
  EXPECT_EQ(run_cli("validate --config " + write_config(short_split, "short.json")), 2);

  json broken_model = config();
  broken_model["models"] = json::array({{{"kind", "external"}, {"command", {"/nonexistent/model"}}}});
  EXPECT_EQ(run_cli("evaluate --quiet --config " + write_config(broken_model, "ext.json") + " --out " +
                    dir.file("ext")),
            3);
}
