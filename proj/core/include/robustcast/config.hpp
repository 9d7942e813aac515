#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "robustcast/dataset.hpp"
#include "robustcast/faults.hpp"
#include "robustcast/forecast.hpp"
#include "robustcast/selection.hpp"

namespace robustcast {

struct DatasetConfig {
  std::string name = "dataset";
  std::string path;
  bool timestamp_column = false;
  std::vector<std::string> channels;    // empty: take from the CSV header
  std::vector<std::string> discrete;    // channel names excluded from the continuous pool
  // Targets: channel names, or 0-based indices, or every channel.
  std::vector<std::string> targets;
  std::vector<std::size_t> target_indices;
  bool all_targets = false;
  std::optional<std::size_t> m_cont;    // if set, must match the schema
};

enum class ModelKind { SeasonalNaive, Linear, Constant, External };

const char* model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

/// One architecture. Only the fields of the chosen kind are used.
struct ModelConfig {
  ModelKind kind = ModelKind::SeasonalNaive;
  std::string name;  // display name; defaults to the kind name

  std::vector<std::size_t> periods{1, 24};  // seasonal_naive

  std::vector<double> ridge{1e-3, 1e-2, 1e-1};  // linear
  std::size_t candidate_cap = 6;
  std::size_t train_windows = 10000;  // 0: every training window

  double constant = 0.0;  // constant

  std::vector<std::string> command;  // external
  double timeout_s = 60.0;
  std::size_t adapter_workers = 1;

  std::string display_name() const;
};

enum class MethodKind { Baseline, Ensemble, Smoothing, Augmentation };

const char* method_kind_name(MethodKind k);
MethodKind parse_method_kind(const std::string& s);

struct MethodConfig {
  MethodKind kind = MethodKind::Baseline;
  std::size_t members = 3;
  Aggregator aggregator = Aggregator::Mean;
  double sigma = 0.1;
  std::size_t queries = 32;
  double alpha = 0.1;
  double p_aug = 0.5;
  std::vector<Scenario> pool{kTransferFamilies.begin(), kTransferFamilies.end()};

  std::string display_name() const;
  void validate() const;
};

struct RunConfig {
  DatasetConfig dataset;
  WindowShape window;
  SplitFractions split;

  std::size_t K = 10000;
  std::vector<Scenario> scenarios{kBenchmarkScenarios.begin(), kBenchmarkScenarios.end()};
  std::string channel_rule = "coupled";
  double gamma_max = 0.5;
  std::size_t bootstrap = 1000;
  std::size_t block_size = 64;
  std::size_t workers = 1;

  std::uint64_t master_seed = 42;
  std::optional<std::uint64_t> eval_seed;  // overrides the derived evaluation seed
  std::vector<std::uint64_t> eval_seeds;   // sensitivity realizations; empty: canonical, 0, 1, 2, 3

  std::vector<ModelConfig> models{ModelConfig{}};
  std::vector<MethodConfig> methods;  // compare: variants paired against the baseline
  MethodConfig method;                // evaluate: method applied to each model
  SelectorMode selector = SelectorMode::CleanValidation;
  std::size_t val_windows = 3000;     // 0: every validation window
  std::string reference;              // model name used for mCE; empty: first seasonal naive, if any
  std::vector<double> fixed_fractions{0.25, 0.5};

  std::string output = "out";

  std::uint64_t data_seed() const;
  std::uint64_t model_seed() const;
  std::uint64_t resolved_eval_seed() const;
  std::vector<std::uint64_t> resolved_eval_seeds() const;

  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::ordered_json to_json(const RunConfig& c);

}  // namespace robustcast
