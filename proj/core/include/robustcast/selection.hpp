#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "robustcast/dataset.hpp"
#include "robustcast/forecast.hpp"
#include "robustcast/score.hpp"

namespace robustcast {

enum class SelectorMode { CleanValidation, WorstScenarioPerturbedValidation };

const char* selector_name(SelectorMode m);
/// Accepts "clean" or "perturbed".
SelectorMode parse_selector(const std::string& name);

/// Windows drawn from the validation split only. The only way to build one
/// is from split bounds, so selection cannot see test rows.
class ValidationWindows {
 public:
  /// `budget` windows sampled with replacement from the validation split;
  /// budget 0 keeps every validation window in order.
  static ValidationWindows from_split(std::shared_ptr<const TimeSeriesDataset> ds, const SplitBounds& bounds,
                                      const WindowShape& shape, std::size_t budget, std::uint64_t seed);

  const WindowSet& windows() const { return windows_; }
  std::size_t size() const { return windows_.size(); }

 private:
  explicit ValidationWindows(WindowSet w) : windows_(std::move(w)) {}
  WindowSet windows_;
};

struct Candidate {
  std::string id;
  ForecasterPtr model;
};

struct SelectionResult {
  std::string winner;
  std::size_t index = 0;        // into the candidate list
  std::vector<double> scores;   // objective per candidate, lower is better
};

/// Clean mode: mean clean validation MSE. Perturbed mode: max over
/// scenarios of the perturbed validation MSE from the evaluation estimator
/// run on the validation windows. Exact ties go to the smallest id.
SelectionResult select_winner(const std::vector<Candidate>& candidates, const ValidationWindows& val,
                              SelectorMode mode, const EvalConfig& cfg);

}  // namespace robustcast
