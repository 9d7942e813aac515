#include "robustcast/selection.hpp"

#include <algorithm>

#include "robustcast/error.hpp"

namespace robustcast {

const char* selector_name(SelectorMode m) {
  return m == SelectorMode::CleanValidation ? "clean" : "perturbed";
}

SelectorMode parse_selector(const std::string& name) {
  if (name == "clean") return SelectorMode::CleanValidation;
  if (name == "perturbed") return SelectorMode::WorstScenarioPerturbedValidation;
  throw ConfigError("selector must be 'clean' or 'perturbed', got '" + name + "'");
}

ValidationWindows ValidationWindows::from_split(std::shared_ptr<const TimeSeriesDataset> ds,
                                                const SplitBounds& bounds, const WindowShape& shape,
                                                std::size_t budget, std::uint64_t seed) {
  auto all = enumerate_windows(bounds, Split::Validation, shape);
  if (budget == 0) return ValidationWindows(WindowSet(std::move(ds), std::move(all), shape));
  return ValidationWindows(WindowSet(std::move(ds), sample_window_starts(all, budget, seed), shape));
}

SelectionResult select_winner(const std::vector<Candidate>& candidates, const ValidationWindows& val,
                              SelectorMode mode, const EvalConfig& cfg) {
  if (candidates.empty()) throw ConfigError("select_winner: no candidates");
  if (val.size() == 0) throw ConfigError("select_winner: no validation windows");
  SelectionResult out;
  out.scores.resize(candidates.size());
  const WindowSet& w = val.windows();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& f = *candidates[i].model;
    if (mode == SelectorMode::CleanValidation) {
      double sum = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const WindowSample s = w.at(k);
        sum += mse_target(f.predict(s.x), s.y);
      }
      out.scores[i] = sum / static_cast<double>(w.size());
    } else {
      const auto report = evaluate_windows(f, w, cfg, "validation");
      out.scores[i] = *std::max_element(report.summary.mse_p.begin(), report.summary.mse_p.end());
    }
  }
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double a = out.scores[i];
    const double b = out.scores[out.index];
    if (a < b || (a == b && candidates[i].id < candidates[out.index].id)) out.index = i;
  }
  out.winner = candidates[out.index].id;
  return out;
}

}  // namespace robustcast
