#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "robustcast/config.hpp"
#include "robustcast/dataset.hpp"
#include "robustcast/forecast.hpp"
#include "robustcast/score.hpp"
#include "robustcast/selection.hpp"

namespace robustcast {

/// Schema from the dataset block; channel names come from the CSV header
/// when the block does not list them.
ChannelSchema resolve_schema(const DatasetConfig& d);

/// Loaded, split and standardized data plus the window start sets.
struct PreparedData {
  std::string name;
  std::shared_ptr<const TimeSeriesDataset> data;  // standardized
  SplitBounds bounds;
  StandardizationStats stats;
  WindowShape shape;
  std::vector<std::size_t> train_starts;
  std::vector<std::size_t> val_starts;
  std::vector<std::size_t> test_starts;

  WindowSet train_pool() const { return WindowSet(data, train_starts, shape); }
  WindowSet test_pool() const { return WindowSet(data, test_starts, shape); }
};

PreparedData prepare_data(const RunConfig& c);

struct BuiltModel {
  std::string architecture;
  MethodConfig method;
  SelectorMode selector = SelectorMode::CleanValidation;
  ForecasterPtr model;
  std::vector<std::string> candidate_ids;
  std::vector<double> selection_scores;  // empty when there was one candidate
  std::string winner;
};

/// Builds candidates for (architecture, method) and picks the winner on
/// validation windows.
class ModelFactory {
 public:
  ModelFactory(const RunConfig& c, const PreparedData& d);

  /// nullopt when the method does not apply to the architecture
  /// (augmentation needs the trainable linear model).
  std::optional<BuiltModel> build(const ModelConfig& arch, const MethodConfig& method, SelectorMode mode) const;

  const ValidationWindows& validation() const { return val_; }

 private:
  std::vector<ForecasterPtr> base_candidates(const ModelConfig& arch, std::size_t member) const;
  WindowSet training_sample(const ModelConfig& arch, std::size_t member) const;

  const RunConfig& cfg_;
  const PreparedData& data_;
  ValidationWindows val_;
};

EvalConfig make_eval_config(const RunConfig& c, std::uint64_t eval_seed, const ChannelRule& rule);
ChannelRule configured_rule(const RunConfig& c);

/// Adds mCE against the reference and effective robustness across the pool
/// where defined.
/// Returns the frontier fit when one was defined.
std::optional<LogFit> attach_comparators(std::vector<RobustnessReport>& reports, const RunConfig& c,
                                         const std::vector<std::string>& architectures);

struct DatasetDiagnostics {
  std::size_t rows = 0;
  std::size_t channels = 0;
  std::size_t continuous = 0;
  std::vector<std::string> targets;
  SplitBounds bounds;
  std::size_t train_windows = 0;
  std::size_t val_windows = 0;
  std::size_t test_windows = 0;
};

DatasetDiagnostics run_validate(const RunConfig& c, std::ostream* log);

struct EvaluateResult {
  std::vector<BuiltModel> models;
  std::vector<RobustnessReport> reports;
};

/// Writes report.json, per_scenario.csv, summary.csv and config.json into
/// out_dir. Throws DegradationUndefinedError after writing when a report has
/// MSE_c = 0.
EvaluateResult run_evaluate(const RunConfig& c, const std::string& out_dir, std::ostream* log);

struct CompareRow {
  std::string architecture;
  std::string method;
  PairDelta delta;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::vector<std::string> skipped;
};

/// Writes compare.json, deltas.csv, pair_intervals.csv and config.json.
CompareResult run_compare(const RunConfig& c, const std::string& out_dir, std::ostream* log);

enum class SensitivityMode { EvalSeed, ChannelRule, Selector };
SensitivityMode parse_sensitivity_mode(const std::string& s);
const char* sensitivity_mode_name(SensitivityMode m);

struct SeedSensitivity {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> models;
  std::vector<std::vector<RobustnessReport>> reports;  // [seed][model]
  double mean_shift_d_w = 0.0, max_shift_d_w = 0.0;
  double mean_shift_mse_w = 0.0, max_shift_mse_w = 0.0;
  double mean_shift_mse_c = 0.0, max_shift_mse_c = 0.0;
  std::optional<double> min_spearman_d_w;    // needs >= 2 models
  std::optional<double> min_spearman_mse_w;
  double min_spearman_profile = 1.0;         // D_p profile per model across scenarios
  std::size_t min_exact_agreement = 0;       // models, over non-reference seeds
  std::size_t min_class_agreement = 0;
};

/// Pure computation behind the eval-seed table.
SeedSensitivity summarize_seed_sensitivity(std::vector<std::uint64_t> seeds, std::vector<std::string> models,
                                           std::vector<std::vector<RobustnessReport>> reports);

/// Writes sensitivity.json, sensitivity_<mode>.csv and config.json.
void run_sensitivity(const RunConfig& c, SensitivityMode mode, const std::string& out_dir, std::ostream* log);

}  // namespace robustcast
