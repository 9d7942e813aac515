#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustcast/dataset.hpp"
#include "robustcast/faults.hpp"
#include "robustcast/forecast.hpp"
#include "robustcast/stats.hpp"

namespace robustcast {

struct EvalConfig {
  std::size_t K = 10000;
  std::uint64_t eval_seed = 0;
  std::vector<Scenario> scenarios{kBenchmarkScenarios.begin(), kBenchmarkScenarios.end()};
  ChannelRule channel_rule;
  std::size_t bootstrap_replicates = 1000;
  std::size_t workers = 1;
  std::size_t block_size = 64;  // windows per work unit and per predict_batch call

  void validate() const;
};

/// Everything two reports must share to be compared.
struct EvalSignature {
  std::string dataset;
  WindowShape shape;
  std::size_t K = 0;
  std::uint64_t eval_seed = 0;
  std::vector<Scenario> scenarios;
  ChannelRule channel_rule;

  bool operator==(const EvalSignature&) const = default;
};

/// Scores derived from MSE_c and the per-scenario MSE_p, in report scenario
/// order. When mse_c is 0 the ratio scores are NaN and
/// degradation_defined is false.
struct ScoreSummary {
  double mse_c = 0.0;
  std::vector<double> mse_p;
  std::vector<double> d_p;
  bool degradation_defined = false;
  std::size_t worst = 0;  // index into the scenario list
  double d_w = 0.0;
  double mse_w = 0.0;
  double d_mean = 0.0;
  double mpc = 0.0;
  double rpc = 0.0;
};

ScoreSummary summarize(double mse_c, std::span<const double> mse_p);

struct ReferenceScores {
  std::string reference_id;
  double mce = 0.0;
  double relative_mce = 0.0;
  bool mce_defined = false;
  bool relative_defined = false;
  std::vector<Scenario> mce_flagged;       // reference MSE_p <= 0
  std::vector<Scenario> relative_flagged;  // reference MSE_p - MSE_c <= 0
};

struct RobustnessReport {
  std::string model_id;
  EvalSignature signature;
  std::vector<Scenario> scenarios;                  // fixed benchmark order
  std::vector<std::size_t> window_starts;           // K sampled start rows
  std::vector<double> clean_losses;                 // K
  std::vector<std::vector<double>> perturbed_losses;  // scenarios x K
  ScoreSummary summary;
  std::optional<ReferenceScores> reference;
  std::optional<double> effective_robustness;
  IntervalMap intervals;

  Scenario worst_scenario() const { return scenarios.at(summary.worst); }
  /// Throws DegradationUndefinedError when MSE_c is 0.
  void require_degradation() const;
};

struct PairDelta {
  std::string baseline_id;
  std::string variant_id;
  double d_w = 0.0;
  double mse_c = 0.0;
  double mse_w = 0.0;
  double d_mean = 0.0;
  double mpc = 0.0;
  double tau = 0.0;  // baseline mPC - variant mPC
};

/// Mean squared error over an n' x m_tgt block.
double mse_target(const Matrix& yhat, const Matrix& y);

/// Seed of the window-sampling stream for an evaluation seed.
std::uint64_t window_stream_seed(std::uint64_t eval_seed);
/// Seed of the (scenario, window k) perturbation substream.
std::uint64_t scenario_stream_seed(std::uint64_t eval_seed, Scenario scenario, std::size_t k);

/// Samples K windows from `pool` with the evaluation seed, then runs
/// evaluate_windows on them.
RobustnessReport evaluate(const Forecaster& f, const WindowSet& pool, const EvalConfig& cfg,
                          const std::string& dataset_id);

/// Clean loss once per window, then for each scenario and window a fresh
/// severity and perturbation from the (scenario, window) substream. The
/// result does not depend on cfg.workers.
RobustnessReport evaluate_windows(const Forecaster& f, const WindowSet& windows, const EvalConfig& cfg,
                                  const std::string& dataset_id);

double degradation(double mse_p, double mse_c);

struct WorstCase {
  Scenario scenario;
  double d_w;
  double mse_w;
};
WorstCase worst_scenario(const RobustnessReport& report);

struct MeanCase {
  double d_mean;
  double mpc;
  double rpc;
};
MeanCase mean_case(const RobustnessReport& report);

ReferenceScores reference_normalized(const RobustnessReport& report, const RobustnessReport& ref);

struct EffectiveRobustness {
  LogFit fit;
  std::vector<double> rho;  // pool order
};
/// Log-space frontier of mPC on MSE_c over the pool; rho = frontier - mPC.
EffectiveRobustness effective_robustness(std::span<const RobustnessReport* const> pool);

PairDelta paired_deltas(const RobustnessReport& variant, const RobustnessReport& baseline);

}  // namespace robustcast
