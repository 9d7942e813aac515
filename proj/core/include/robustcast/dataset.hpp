#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace robustcast {

/// Row-major so that one input row (one time step) is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ChannelSchema {
  std::vector<std::string> names;
  std::vector<bool> continuous;      // one flag per channel
  std::vector<std::size_t> targets;  // ordered forecast-target channel indices

  std::size_t channel_count() const { return names.size(); }
  std::size_t target_count() const { return targets.size(); }
  std::size_t continuous_count() const;
  std::vector<std::size_t> continuous_indices() const;

  /// Throws ConfigError on an inconsistent schema.
  void validate() const;
};

struct TimeSeriesDataset {
  Matrix values;  // rows x channels
  ChannelSchema schema;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t channels() const { return static_cast<std::size_t>(values.cols()); }
};

/// Input length n and forecast horizon n'.
struct WindowShape {
  std::size_t input = 96;
  std::size_t horizon = 96;

  std::size_t span() const { return input + horizon; }
  bool operator==(const WindowShape&) const = default;
};

struct CsvOptions {
  bool timestamp_column = false;  // drop the first column
  std::size_t min_rows = 0;       // usually n + n'
};

TimeSeriesDataset load_csv(const std::string& path, const ChannelSchema& schema,
                           const CsvOptions& options = {});
TimeSeriesDataset parse_csv(std::istream& in, const ChannelSchema& schema,
                            const CsvOptions& options = {},
                            const std::string& source = "<stream>");

/// Header names of a CSV file (timestamp column dropped when flagged).
std::vector<std::string> read_csv_header(const std::string& path, bool timestamp_column);

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

/// Rows [0, train_end) train, [train_end, val_end) validation,
/// [val_end, rows) test.
struct SplitBounds {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t rows = 0;
};

enum class Split { Train, Validation, Test, All };

const char* split_name(Split split);

SplitBounds chronological_split(std::size_t rows, const SplitFractions& fractions,
                                const WindowShape& shape);

struct StandardizationStats {
  Vector mean;
  Vector std;
  Vector target_mean;
  Vector target_std;
};

/// Population mean/std over the train rows; zero-variance channels get std 1.
StandardizationStats fit_standardizer(const TimeSeriesDataset& ds, const SplitBounds& bounds);
TimeSeriesDataset apply_standardizer(const TimeSeriesDataset& ds, const StandardizationStats& stats);
TimeSeriesDataset invert_standardizer(const TimeSeriesDataset& ds, const StandardizationStats& stats);

/// Start indices (0-based) of windows whose input and target rows both lie
/// inside `split`. Throws DataError when there are none.
std::vector<std::size_t> enumerate_windows(const SplitBounds& bounds, Split split,
                                           const WindowShape& shape);

struct WindowSample {
  Matrix x;  // input x channels
  Matrix y;  // horizon x targets
  std::size_t start = 0;
};

WindowSample make_window(const TimeSeriesDataset& ds, std::size_t start, const WindowShape& shape);

/// K i.i.d. uniform draws with replacement from `index_set`.
std::vector<std::size_t> sample_window_starts(std::span<const std::size_t> index_set,
                                              std::size_t count, std::uint64_t seed);

std::vector<WindowSample> sample_windows(const TimeSeriesDataset& ds,
                                         std::span<const std::size_t> index_set,
                                         std::size_t count, std::uint64_t seed,
                                         const WindowShape& shape);

/// Lazily materialized list of windows over a shared dataset.
class WindowSet {
 public:
  WindowSet(std::shared_ptr<const TimeSeriesDataset> ds, std::vector<std::size_t> starts,
            WindowShape shape);

  std::size_t size() const { return starts_.size(); }
  bool empty() const { return starts_.empty(); }
  WindowSample at(std::size_t i) const { return make_window(*ds_, starts_.at(i), shape_); }

  const std::vector<std::size_t>& starts() const { return starts_; }
  const WindowShape& shape() const { return shape_; }
  const TimeSeriesDataset& dataset() const { return *ds_; }
  const ChannelSchema& schema() const { return ds_->schema; }

  /// Same dataset and shape, different start rows.
  WindowSet with_starts(std::vector<std::size_t> starts) const {
    return WindowSet(ds_, std::move(starts), shape_);
  }

 private:
  std::shared_ptr<const TimeSeriesDataset> ds_;
  std::vector<std::size_t> starts_;
  WindowShape shape_;
};

}  // namespace robustcast
