#include "robustcast/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "robustcast/error.hpp"
#include "robustcast/rng.hpp"

namespace robustcast {

std::size_t ChannelSchema::continuous_count() const {
  std::size_t count = 0;
  for (bool c : continuous) count += c ? 1 : 0;
  return count;
}

std::vector<std::size_t> ChannelSchema::continuous_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < continuous.size(); ++j)
    if (continuous[j]) out.push_back(j);
  return out;
}

void ChannelSchema::validate() const {
  if (names.empty()) throw ConfigError("schema: no channels");
  if (continuous.size() != names.size())
    throw ConfigError("schema: continuous flags (" + std::to_string(continuous.size()) +
                      ") do not match channel count (" + std::to_string(names.size()) + ")");
  if (continuous_count() == 0) throw ConfigError("schema: at least one continuous channel required");
  if (targets.empty()) throw ConfigError("schema: target set is empty");
  std::unordered_set<std::size_t> seen;
  for (std::size_t t : targets) {
    if (t >= names.size())
      throw ConfigError("schema: target index " + std::to_string(t) + " out of range (channels: " +
                        std::to_string(names.size()) + ")");
    if (!seen.insert(t).second)
      throw ConfigError("schema: duplicate target index " + std::to_string(t));
  }
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      return out;
    }
    out.push_back(trim(line.substr(pos, comma - pos)));
    pos = comma + 1;
  }
}

std::vector<std::string> header_names(std::string_view line, bool timestamp_column) {
  auto fields = split_fields(line);
  std::vector<std::string> names;
  for (std::size_t i = timestamp_column ? 1 : 0; i < fields.size(); ++i)
    names.emplace_back(fields[i]);
  return names;
}

}  // namespace

std::vector<std::string> read_csv_header(const std::string& path, bool timestamp_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header row");
  return header_names(line, timestamp_column);
}

TimeSeriesDataset parse_csv(std::istream& in, const ChannelSchema& schema,
                            const CsvOptions& options, const std::string& source) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": missing header row");
  const auto header = header_names(line, options.timestamp_column);
  if (header != schema.names) {
    std::ostringstream msg;
    msg << source << ": header mismatch; expected";
    for (const auto& n : schema.names) msg << " '" << n << "'";
    msg << " but found";
    for (const auto& n : header) msg << " '" << n << "'";
    throw DataError(msg.str());
  }

  const std::size_t m = schema.channel_count();
  const std::size_t skip = options.timestamp_column ? 1 : 0;
  std::vector<double> cells;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != m + skip)
      throw DataError(source + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(m + skip));
    for (std::size_t j = 0; j < m; ++j) {
      const std::string_view cell = fields[j + skip];
      double value = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, value);
      if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
        throw DataError(source + ": row " + std::to_string(row) + ", column '" + schema.names[j] +
                        "': " + (cell.empty() ? "empty cell" : "non-numeric value '" +
                                                                   std::string(cell) + "'"));
      cells.push_back(value);
    }
  }
  if (row < options.min_rows)
    throw DataError(source + ": " + std::to_string(row) + " rows, need at least " +
                    std::to_string(options.min_rows));

  TimeSeriesDataset ds;
  ds.schema = schema;
  ds.values = Eigen::Map<const Matrix>(cells.data(), static_cast<Eigen::Index>(row),
                                       static_cast<Eigen::Index>(m));
  return ds;
}

TimeSeriesDataset load_csv(const std::string& path, const ChannelSchema& schema,
                           const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path);
  return parse_csv(in, schema, options, path);
}

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::All: return "all";
  }
  return "?";
}

SplitBounds chronological_split(std::size_t rows, const SplitFractions& f,
                                const WindowShape& shape) {
  if (!(f.train > 0 && f.val > 0 && f.test > 0))
    throw ConfigError("split fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  // The small slack keeps exact products such as 0.6 * 17420 from rounding
  // down to the previous integer.
  const double n = static_cast<double>(rows);
  SplitBounds b;
  b.rows = rows;
  b.train_end = static_cast<std::size_t>(std::floor(f.train * n + 1e-9));
  b.val_end = static_cast<std::size_t>(std::floor((f.train + f.val) * n + 1e-9));
  const std::size_t need = shape.span();
  const auto check = [&](std::size_t len, const char* name) {
    if (len < need)
      throw DataError(std::string(name) + " split has " + std::to_string(len) +
                      " rows, fewer than one window (" + std::to_string(need) + ")");
  };
  check(b.train_end, "train");
  check(b.val_end - b.train_end, "validation");
  check(rows - b.val_end, "test");
  return b;
}

StandardizationStats fit_standardizer(const TimeSeriesDataset& ds, const SplitBounds& bounds) {
  const std::size_t n = bounds.train_end;
  if (n == 0 || n > ds.rows()) throw DataError("standardizer: empty or invalid train segment");
  const std::size_t m = ds.channels();
  StandardizationStats st;
  st.mean = Vector::Zero(static_cast<Eigen::Index>(m));
  st.std = Vector::Ones(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j) {
    const auto col = ds.values.col(static_cast<Eigen::Index>(j));
    bool constant = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += col(static_cast<Eigen::Index>(i));
      constant = constant && col(static_cast<Eigen::Index>(i)) == col(0);
    }
    if (constant) {
      st.mean(static_cast<Eigen::Index>(j)) = col(0);
      continue;
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = col(static_cast<Eigen::Index>(i)) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    st.mean(static_cast<Eigen::Index>(j)) = mean;
    st.std(static_cast<Eigen::Index>(j)) = sd > 0.0 ? sd : 1.0;
  }
  const auto& tg = ds.schema.targets;
  st.target_mean.resize(static_cast<Eigen::Index>(tg.size()));
  st.target_std.resize(static_cast<Eigen::Index>(tg.size()));
  for (std::size_t t = 0; t < tg.size(); ++t) {
    st.target_mean(static_cast<Eigen::Index>(t)) = st.mean(static_cast<Eigen::Index>(tg[t]));
    st.target_std(static_cast<Eigen::Index>(t)) = st.std(static_cast<Eigen::Index>(tg[t]));
  }
  return st;
}

TimeSeriesDataset apply_standardizer(const TimeSeriesDataset& ds, const StandardizationStats& stats) {
  if (static_cast<std::size_t>(stats.mean.size()) != ds.channels() ||
      static_cast<std::size_t>(stats.std.size()) != ds.channels())
    throw DataError("standardizer: dimension mismatch");
  TimeSeriesDataset out = ds;
  for (Eigen::Index i = 0; i < out.values.rows(); ++i)
    for (Eigen::Index j = 0; j < out.values.cols(); ++j)
      out.values(i, j) = (ds.values(i, j) - stats.mean(j)) / stats.std(j);
  return out;
}

TimeSeriesDataset invert_standardizer(const TimeSeriesDataset& ds, const StandardizationStats& stats) {
  if (static_cast<std::size_t>(stats.mean.size()) != ds.channels() ||
      static_cast<std::size_t>(stats.std.size()) != ds.channels())
    throw DataError("standardizer: dimension mismatch");
  TimeSeriesDataset out = ds;
  for (Eigen::Index i = 0; i < out.values.rows(); ++i)
    for (Eigen::Index j = 0; j < out.values.cols(); ++j)
      out.values(i, j) = ds.values(i, j) * stats.std(j) + stats.mean(j);
  return out;
}

std::vector<std::size_t> enumerate_windows(const SplitBounds& b, Split split,
                                           const WindowShape& shape) {
  std::size_t lo = 0;
  std::size_t hi = b.rows;
  switch (split) {
    case Split::Train: hi = b.train_end; break;
    case Split::Validation: lo = b.train_end; hi = b.val_end; break;
    case Split::Test: lo = b.val_end; break;
    case Split::All: break;
  }
  if (hi < lo || hi - lo < shape.span() || shape.input == 0 || shape.horizon == 0)
    throw DataError(std::string(split_name(split)) + " split too short for window " +
                    std::to_string(shape.input) + "+" + std::to_string(shape.horizon));
  std::vector<std::size_t> starts;
  starts.reserve(hi - lo - shape.span() + 1);
  for (std::size_t s = lo; s + shape.span() <= hi; ++s) starts.push_back(s);
  return starts;
}

WindowSample make_window(const TimeSeriesDataset& ds, std::size_t start, const WindowShape& shape) {
  if (start + shape.span() > ds.rows())
    throw DataError("window at " + std::to_string(start) + " exceeds dataset rows");
  WindowSample w;
  w.start = start;
  const auto n = static_cast<Eigen::Index>(shape.input);
  const auto h = static_cast<Eigen::Index>(shape.horizon);
  const auto s = static_cast<Eigen::Index>(start);
  w.x = ds.values.middleRows(s, n);
  const auto& tg = ds.schema.targets;
  w.y.resize(h, static_cast<Eigen::Index>(tg.size()));
  for (Eigen::Index t = 0; t < h; ++t)
    for (std::size_t c = 0; c < tg.size(); ++c)
      w.y(t, static_cast<Eigen::Index>(c)) = ds.values(s + n + t, static_cast<Eigen::Index>(tg[c]));
  return w;
}

std::vector<std::size_t> sample_window_starts(std::span<const std::size_t> index_set,
                                              std::size_t count, std::uint64_t seed) {
  if (index_set.empty()) throw DataError("cannot sample from an empty window index set");
  if (count == 0) throw ConfigError("window sample count must be at least 1");
  Rng rng(seed);
  std::vector<std::size_t> out(count);
  for (auto& s : out) s = index_set[rng.below(index_set.size())];
  return out;
}

std::vector<WindowSample> sample_windows(const TimeSeriesDataset& ds,
                                         std::span<const std::size_t> index_set,
                                         std::size_t count, std::uint64_t seed,
                                         const WindowShape& shape) {
  std::vector<WindowSample> out;
  out.reserve(count);
  for (std::size_t s : sample_window_starts(index_set, count, seed))
    out.push_back(make_window(ds, s, shape));
  return out;
}

WindowSet::WindowSet(std::shared_ptr<const TimeSeriesDataset> ds, std::vector<std::size_t> starts,
                     WindowShape shape)
    : ds_(std::move(ds)), starts_(std::move(starts)), shape_(shape) {
  if (!ds_) throw DataError("WindowSet: null dataset");
  for (std::size_t s : starts_)
    if (s + shape_.span() > ds_->rows())
      throw DataError("WindowSet: window at " + std::to_string(s) + " exceeds dataset rows");
}

}  // namespace robustcast
