#include "robustcast/score.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "robustcast/error.hpp"

namespace robustcast {

namespace {

double mean_of(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const Error& e) {
    const std::string what = context + ": " + e.what();
    switch (e.kind()) {
      case ErrorKind::Config: throw ConfigError(what);
      case ErrorKind::Data: throw DataError(what);
      case ErrorKind::Model: throw ModelError(what);
      case ErrorKind::Protocol: throw ProtocolError(what);
      case ErrorKind::DegradationUndefined: throw DegradationUndefinedError(what);
    }
    throw;
  } catch (const std::exception& e) {
    throw ModelError(context + ": " + e.what());
  }
}

std::string window_range(const WindowSet& w, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return "window " + std::to_string(lo) + " (start row " + std::to_string(w.starts()[lo]) + ")";
  return "windows " + std::to_string(lo) + ".." + std::to_string(hi - 1);
}

void fill_losses(const Forecaster& f, std::span<const Matrix> xs, std::span<const Matrix> ys, double* out) {
  const auto preds = f.predict_batch(xs);
  if (preds.size() != xs.size())
    throw ModelError("predict_batch returned " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(xs.size()) + " inputs");
  for (std::size_t i = 0; i < preds.size(); ++i) out[i] = mse_target(preds[i], ys[i]);
}

}  // namespace

void EvalConfig::validate() const {
  if (K == 0) throw ConfigError("K must be at least 1");
  if (block_size == 0) throw ConfigError("block_size must be at least 1");
  if (workers == 0) throw ConfigError("workers must be at least 1");
  channel_rule.validate();
  canonical_scenario_order(scenarios);
}

ScoreSummary summarize(double mse_c, std::span<const double> mse_p) {
  if (mse_p.empty()) throw ConfigError("summarize: no scenarios");
  ScoreSummary s;
  s.mse_c = mse_c;
  s.mse_p.assign(mse_p.begin(), mse_p.end());
  s.mpc = mean_of(mse_p);
  s.degradation_defined = mse_c > 0.0;
  if (s.degradation_defined) {
    s.d_p.resize(mse_p.size());
    for (std::size_t i = 0; i < mse_p.size(); ++i) s.d_p[i] = mse_p[i] / mse_c;
    for (std::size_t i = 1; i < s.d_p.size(); ++i)
      if (s.d_p[i] > s.d_p[s.worst]) s.worst = i;
    s.d_w = s.d_p[s.worst];
    s.d_mean = s.mpc / mse_c;
    s.rpc = 1.0 / s.d_mean;
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.d_p.assign(mse_p.size(), nan);
    for (std::size_t i = 1; i < mse_p.size(); ++i)
      if (mse_p[i] > mse_p[s.worst]) s.worst = i;
    s.d_w = s.d_mean = s.rpc = nan;
  }
  s.mse_w = s.mse_p[s.worst];
  return s;
}

void RobustnessReport::require_degradation() const {
  if (!summary.degradation_defined)
    throw DegradationUndefinedError("clean MSE is 0 for '" + model_id +
                                    "' on the sampled windows; degradation scores are undefined");
}

double mse_target(const Matrix& yhat, const Matrix& y) {
  if (yhat.rows() != y.rows() || yhat.cols() != y.cols())
    throw ModelError("prediction is " + std::to_string(yhat.rows()) + "x" + std::to_string(yhat.cols()) +
                     ", target is " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
  if (y.size() == 0) throw ModelError("empty target block");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = yhat.data()[i] - y.data()[i];
    sum += e * e;
  }
  return sum / static_cast<double>(y.size());
}

std::uint64_t window_stream_seed(std::uint64_t eval_seed) { return derive_seed(eval_seed, tag_hash("windows")); }

std::uint64_t scenario_stream_seed(std::uint64_t eval_seed, Scenario scenario, std::size_t k) {
  return derive_seed(derive_seed(eval_seed, tag_hash("scenario")), ordinal(scenario), k);
}

RobustnessReport evaluate(const Forecaster& f, const WindowSet& pool, const EvalConfig& cfg,
                          const std::string& dataset_id) {
  cfg.validate();
  if (pool.empty()) throw DataError("evaluate: empty test window pool");
  auto starts = sample_window_starts(pool.starts(), cfg.K, window_stream_seed(cfg.eval_seed));
  return evaluate_windows(f, pool.with_starts(std::move(starts)), cfg, dataset_id);
}

RobustnessReport evaluate_windows(const Forecaster& f, const WindowSet& windows, const EvalConfig& cfg,
                                  const std::string& dataset_id) {
  EvalConfig c = cfg;
  c.scenarios = canonical_scenario_order(cfg.scenarios);
  c.K = windows.size();
  c.validate();

  const std::size_t K = windows.size();
  const std::size_t P = c.scenarios.size();
  const ChannelSchema& schema = windows.schema();
  const std::size_t n = windows.shape().input;

  RobustnessReport r;
  r.model_id = f.id();
  r.signature = {dataset_id, windows.shape(), K, c.eval_seed, c.scenarios, c.channel_rule};
  r.scenarios = c.scenarios;
  r.window_starts = windows.starts();
  r.clean_losses.assign(K, 0.0);
  r.perturbed_losses.assign(P, std::vector<double>(K, 0.0));

  const std::size_t blocks = (K + c.block_size - 1) / c.block_size;
  std::vector<std::exception_ptr> failures(blocks);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto run_block = [&](std::size_t b) {
    const std::size_t lo = b * c.block_size;
    const std::size_t hi = std::min(K, lo + c.block_size);
    std::vector<Matrix> xs(hi - lo), ys(hi - lo), xp(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) {
      WindowSample w = windows.at(k);
      xs[k - lo] = std::move(w.x);
      ys[k - lo] = std::move(w.y);
    }
    try {
      fill_losses(f, xs, ys, r.clean_losses.data() + lo);
    } catch (...) {
      rethrow_with_context("clean pass, " + window_range(windows, lo, hi));
    }
    for (std::size_t p = 0; p < P; ++p) {
      const Scenario sc = c.scenarios[p];
      const ScenarioSpec& spec = benchmark_spec(sc);
      for (std::size_t k = lo; k < hi; ++k) {
        Rng rng(scenario_stream_seed(c.eval_seed, sc, k));
        const double s = rng.uniform01();
        const auto draw = draw_perturbation(spec, c.channel_rule, s, n, schema, rng);
        xp[k - lo] = apply_perturbation(xs[k - lo], draw);
      }
      try {
        fill_losses(f, xp, ys, r.perturbed_losses[p].data() + lo);
      } catch (...) {
        rethrow_with_context("scenario " + std::string(scenario_name(sc)) + ", " + window_range(windows, lo, hi));
      }
    }
  };

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        run_block(b);
      } catch (...) {
        failures[b] = std::current_exception();
        stop.store(true);
      }
    }
  };

  const std::size_t threads = std::min(c.workers, blocks);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : failures)
    if (e) std::rethrow_exception(e);

  std::vector<double> mse_p(P);
  for (std::size_t p = 0; p < P; ++p) mse_p[p] = mean_of(r.perturbed_losses[p]);
  r.summary = summarize(mean_of(r.clean_losses), mse_p);
  return r;
}

double degradation(double mse_p, double mse_c) {
  if (!(mse_c > 0.0)) throw DegradationUndefinedError("degradation: clean MSE must be positive");
  return mse_p / mse_c;
}

WorstCase worst_scenario(const RobustnessReport& report) {
  if (report.scenarios.empty()) throw ConfigError("worst_scenario: no scenarios");
  report.require_degradation();
  return {report.worst_scenario(), report.summary.d_w, report.summary.mse_w};
}

MeanCase mean_case(const RobustnessReport& report) {
  report.require_degradation();
  return {report.summary.d_mean, report.summary.mpc, report.summary.rpc};
}

ReferenceScores reference_normalized(const RobustnessReport& report, const RobustnessReport& ref) {
  if (report.scenarios != ref.scenarios)
    throw ProtocolError("reference_normalized: scenario sets differ between '" + report.model_id + "' and '" +
                        ref.model_id + "'");
  ReferenceScores out;
  out.reference_id = ref.model_id;
  const std::size_t P = report.scenarios.size();
  double mce_sum = 0.0;
  double rel_sum = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    const double ref_p = ref.summary.mse_p[p];
    const double ref_gap = ref_p - ref.summary.mse_c;
    if (ref_p > 0.0)
      mce_sum += report.summary.mse_p[p] / ref_p;
    else
      out.mce_flagged.push_back(report.scenarios[p]);
    if (ref_gap > 0.0)
      rel_sum += (report.summary.mse_p[p] - report.summary.mse_c) / ref_gap;
    else
      out.relative_flagged.push_back(report.scenarios[p]);
  }
  out.mce_defined = out.mce_flagged.empty();
  out.relative_defined = out.relative_flagged.empty();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.mce = out.mce_defined ? mce_sum / static_cast<double>(P) : nan;
  out.relative_mce = out.relative_defined ? rel_sum / static_cast<double>(P) : nan;
  return out;
}

EffectiveRobustness effective_robustness(std::span<const RobustnessReport* const> pool) {
  if (pool.size() < 2) throw ConfigError("effective robustness needs at least 2 models in the pool");
  std::vector<double> x, y;
  for (const auto* r : pool) {
    x.push_back(r->summary.mse_c);
    y.push_back(r->summary.mpc);
  }
  EffectiveRobustness out;
  out.fit = logspace_fit(x, y);
  for (std::size_t i = 0; i < pool.size(); ++i)
    out.rho.push_back(std::exp(out.fit.a + out.fit.b * std::log(x[i])) - y[i]);
  return out;
}

PairDelta paired_deltas(const RobustnessReport& variant, const RobustnessReport& baseline) {
  if (!(variant.signature == baseline.signature))
    throw ProtocolError("paired_deltas: '" + variant.model_id + "' and '" + baseline.model_id +
                        "' were not evaluated under the same dataset and evaluation setup");
  variant.require_degradation();
  baseline.require_degradation();
  const auto& v = variant.summary;
  const auto& b = baseline.summary;
  PairDelta d;
  d.baseline_id = baseline.model_id;
  d.variant_id = variant.model_id;
  d.d_w = v.d_w - b.d_w;
  d.mse_c = v.mse_c - b.mse_c;
  d.mse_w = v.mse_w - b.mse_w;
  d.d_mean = v.d_mean - b.d_mean;
  d.mpc = v.mpc - b.mpc;
  d.tau = b.mpc - v.mpc;
  return d;
}

}  // namespace robustcast
