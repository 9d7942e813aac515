#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace robustcast {

struct RobustnessReport;
struct ScoreSummary;
struct PairDelta;

struct Interval {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  std::size_t replicates = 0;
};

using IntervalMap = std::map<std::string, Interval>;

/// Linear-interpolation quantile of sorted data: h = (N - 1) p,
/// q = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
double quantile_sorted(std::span<const double> sorted, double p);

/// Equal-tailed percentile interval: quantiles (1 - level) / 2 and
/// (1 + level) / 2 of the samples.
std::pair<double, double> percentile_interval(std::span<const double> samples, double level = 0.95);

/// Statistic names understood by the window bootstrap: mse_c, d_w, mse_w,
/// d_mean, mpc, rpc, mse_p:<Scenario>, d_p:<Scenario>.
std::vector<std::string> default_window_statistics(const RobustnessReport& report);

/// Value of a named statistic in a summary laid out in report scenario order.
double summary_statistic(const ScoreSummary& summary, const RobustnessReport& report, const std::string& name);

/// One summary per replicate. Replicate r draws K window indices with
/// replacement from its own substream and reuses that multiset for the clean
/// losses and every scenario.
std::vector<ScoreSummary> bootstrap_window_replicates(const RobustnessReport& report, std::size_t replicates,
                                                      std::uint64_t seed, std::size_t workers = 1);

IntervalMap bootstrap_windows(const RobustnessReport& report, std::size_t replicates, std::uint64_t seed,
                              std::span<const std::string> statistics, double level = 0.95,
                              std::size_t workers = 1);

/// Field names: d_w, mse_c, mse_w, d_mean, mpc, tau.
double delta_field(const PairDelta& d, const std::string& field);
extern const std::vector<std::string> kPairDeltaFields;

/// Resamples pairs with replacement and recomputes the mean of each delta
/// field.
IntervalMap bootstrap_pairs(std::span<const PairDelta> deltas, std::size_t replicates, std::uint64_t seed,
                            double level = 0.95);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);

struct LogFit {
  double a = 0.0;
  double b = 0.0;
};

/// Ordinary least squares of log y on log x.
LogFit logspace_fit(std::span<const double> x, std::span<const double> y);

}  // namespace robustcast
