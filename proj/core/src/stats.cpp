#include "robustcast/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "robustcast/error.hpp"
#include "robustcast/rng.hpp"
#include "robustcast/score.hpp"

namespace robustcast {

double quantile_sorted(std::span<const double> x, double p) {
  if (x.empty()) throw ConfigError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  const double h = static_cast<double>(x.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= x.size() || frac == 0.0) return x[lo];
  return x[lo] + frac * (x[lo + 1] - x[lo]);
}

std::pair<double, double> percentile_interval(std::span<const double> samples, double level) {
  if (samples.empty()) throw ConfigError("percentile_interval: no samples");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("interval level must lie in (0, 1)");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return {quantile_sorted(sorted, (1.0 - level) / 2.0), quantile_sorted(sorted, (1.0 + level) / 2.0)};
}

std::vector<std::string> default_window_statistics(const RobustnessReport& report) {
  std::vector<std::string> out = {"mse_c", "d_w", "mse_w", "d_mean", "mpc", "rpc"};
  for (Scenario s : report.scenarios) out.push_back("mse_p:" + std::string(scenario_name(s)));
  for (Scenario s : report.scenarios) out.push_back("d_p:" + std::string(scenario_name(s)));
  return out;
}

double summary_statistic(const ScoreSummary& s, const RobustnessReport& report, const std::string& name) {
  if (name == "mse_c") return s.mse_c;
  if (name == "d_w") return s.d_w;
  if (name == "mse_w") return s.mse_w;
  if (name == "d_mean") return s.d_mean;
  if (name == "mpc") return s.mpc;
  if (name == "rpc") return s.rpc;
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    const std::string kind = name.substr(0, colon);
    const Scenario sc = parse_scenario(name.substr(colon + 1));
    const auto it = std::find(report.scenarios.begin(), report.scenarios.end(), sc);
    if (it != report.scenarios.end()) {
      const auto p = static_cast<std::size_t>(it - report.scenarios.begin());
      if (kind == "mse_p") return s.mse_p[p];
      if (kind == "d_p") return s.d_p[p];
    }
  }
  throw ConfigError("unknown bootstrap statistic '" + name + "'");
}

std::vector<ScoreSummary> bootstrap_window_replicates(const RobustnessReport& report, std::size_t replicates,
                                                      std::uint64_t seed, std::size_t workers) {
  if (replicates < 1) throw ConfigError("bootstrap needs B >= 1");
  const std::size_t K = report.clean_losses.size();
  if (K == 0) throw ConfigError("bootstrap: report has no per-window losses");
  const std::size_t P = report.perturbed_losses.size();
  for (const auto& row : report.perturbed_losses)
    if (row.size() != K) throw ConfigError("bootstrap: ragged per-window losses");

  std::vector<ScoreSummary> out(replicates);
  auto run = [&](std::size_t r) {
    Rng rng(derive_seed(seed, tag_hash("bootstrap-window"), r));
    std::vector<std::size_t> idx(K);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(K));
    double clean = 0.0;
    for (std::size_t i : idx) clean += report.clean_losses[i];
    std::vector<double> mse_p(P);
    for (std::size_t p = 0; p < P; ++p) {
      double sum = 0.0;
      for (std::size_t i : idx) sum += report.perturbed_losses[p][i];
      mse_p[p] = sum / static_cast<double>(K);
    }
    out[r] = summarize(clean / static_cast<double>(K), mse_p);
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, replicates));
  if (threads == 1) {
    for (std::size_t r = 0; r < replicates; ++r) run(r);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t r = t; r < replicates; r += threads) run(r);
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

IntervalMap bootstrap_windows(const RobustnessReport& report, std::size_t replicates, std::uint64_t seed,
                              std::span<const std::string> statistics, double level, std::size_t workers) {
  const auto reps = bootstrap_window_replicates(report, replicates, seed, workers);
  IntervalMap out;
  std::vector<double> values(replicates);
  for (const auto& name : statistics) {
    for (std::size_t r = 0; r < replicates; ++r) values[r] = summary_statistic(reps[r], report, name);
    Interval iv;
    iv.point = summary_statistic(report.summary, report, name);
    iv.level = level;
    iv.replicates = replicates;
    // Ratio statistics are NaN when a replicate's clean MSE is 0.
    if (std::any_of(values.begin(), values.end(), [](double v) { return std::isnan(v); })) {
      iv.lo = iv.hi = std::nan("");
    } else {
      std::tie(iv.lo, iv.hi) = percentile_interval(values, level);
    }
    out[name] = iv;
  }
  return out;
}

const std::vector<std::string> kPairDeltaFields = {"d_w", "mse_c", "mse_w", "d_mean", "mpc", "tau"};

double delta_field(const PairDelta& d, const std::string& field) {
  if (field == "d_w") return d.d_w;
  if (field == "mse_c") return d.mse_c;
  if (field == "mse_w") return d.mse_w;
  if (field == "d_mean") return d.d_mean;
  if (field == "mpc") return d.mpc;
  if (field == "tau") return d.tau;
  throw ConfigError("unknown delta field '" + field + "'");
}

IntervalMap bootstrap_pairs(std::span<const PairDelta> deltas, std::size_t replicates, std::uint64_t seed,
                            double level) {
  if (deltas.empty()) throw ConfigError("bootstrap_pairs: no pairs");
  if (replicates < 1) throw ConfigError("bootstrap needs B >= 1");
  const std::size_t n = deltas.size();
  const std::size_t F = kPairDeltaFields.size();
  std::vector<std::vector<double>> reps(F, std::vector<double>(replicates));
  std::vector<std::size_t> idx(n);
  for (std::size_t r = 0; r < replicates; ++r) {
    Rng rng(derive_seed(seed, tag_hash("bootstrap-pair"), r));
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
    for (std::size_t f = 0; f < F; ++f) {
      double sum = 0.0;
      for (std::size_t i : idx) sum += delta_field(deltas[i], kPairDeltaFields[f]);
      reps[f][r] = sum / static_cast<double>(n);
    }
  }
  IntervalMap out;
  for (std::size_t f = 0; f < F; ++f) {
    double sum = 0.0;
    for (const auto& d : deltas) sum += delta_field(d, kPairDeltaFields[f]);
    Interval iv;
    iv.point = sum / static_cast<double>(n);
    iv.level = level;
    iv.replicates = replicates;
    std::tie(iv.lo, iv.hi) = percentile_interval(reps[f], level);
    out[kPairDeltaFields[f]] = iv;
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean((i+1)..j).
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("spearman: length mismatch");
  if (a.size() < 2) throw ConfigError("spearman: need at least 2 points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw ConfigError("spearman: zero rank variance");
  return sab / std::sqrt(saa * sbb);
}

LogFit logspace_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("logspace_fit: length mismatch");
  if (x.size() < 2) throw ConfigError("logspace_fit: need at least 2 points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ConfigError("logspace_fit: inputs must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0.0) throw ConfigError("logspace_fit: all x values are equal, fit undefined");
  LogFit f;
  f.b = sxy / sxx;
  f.a = my - f.b * mx;
  return f;
}

}  // namespace robustcast
