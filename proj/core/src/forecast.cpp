#include "robustcast/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>

#include "robustcast/error.hpp"
#include "robustcast/score.hpp"

namespace robustcast {

namespace {

// Windows per Gram accumulation block. Fixed so the summation order, and
// therefore the fitted weights, never depend on anything but the data.
constexpr std::size_t kGramBlock = 256;

// Mean of a sorted run as v0 + sum(v_i - v0) / k. Equal values give v0
// back exactly.
double anchored_mean(const double* v, std::size_t k) {
  const double v0 = v[0];
  double acc = 0.0;
  for (std::size_t i = 1; i < k; ++i) acc += v[i] - v0;
  return v0 + acc / static_cast<double>(k);
}

using InputFn = std::function<void(std::size_t, Matrix&)>;

std::string lambda_tag(double lambda) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", lambda);
  return buf;
}

std::vector<LinearModel> fit_impl(const WindowSet& train, std::span<const double> lambdas, std::uint64_t seed,
                                  const InputFn& adjust, const std::string& suffix) {
  if (train.empty()) throw ModelError("fit_linear: no training windows");
  if (lambdas.empty()) throw ConfigError("fit_linear: no ridge values");
  for (double lambda : lambdas)
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("ridge lambda must be finite and >= 0");
  const WindowShape shape = train.shape();
  const std::size_t m = train.schema().channel_count();
  const std::size_t mt = train.schema().target_count();
  const auto d = static_cast<Eigen::Index>(shape.input * m);
  const auto o = static_cast<Eigen::Index>(shape.horizon * mt);
  const std::size_t count = train.size();

  auto load = [&](std::size_t i, Eigen::Ref<Eigen::RowVectorXd> xr, Eigen::Ref<Eigen::RowVectorXd> yr) {
    WindowSample w = train.at(i);
    if (adjust) adjust(i, w.x);
    xr = Eigen::Map<const Eigen::RowVectorXd>(w.x.data(), d);
    yr = Eigen::Map<const Eigen::RowVectorXd>(w.y.data(), o);
  };

  // Pass 1: means.
  Eigen::RowVectorXd xmean = Eigen::RowVectorXd::Zero(d);
  Eigen::RowVectorXd ymean = Eigen::RowVectorXd::Zero(o);
  {
    Eigen::RowVectorXd xr(d), yr(o);
    for (std::size_t i = 0; i < count; ++i) {
      load(i, xr, yr);
      xmean += xr;
      ymean += yr;
    }
    xmean /= static_cast<double>(count);
    ymean /= static_cast<double>(count);
  }

  // Pass 2: centered Gram and cross products, block by block.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d, o);
  Matrix xb(static_cast<Eigen::Index>(kGramBlock), d);
  Matrix yb(static_cast<Eigen::Index>(kGramBlock), o);
  for (std::size_t lo = 0; lo < count; lo += kGramBlock) {
    const std::size_t rows = std::min(kGramBlock, count - lo);
    const auto r = static_cast<Eigen::Index>(rows);
    for (std::size_t k = 0; k < rows; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      load(lo + k, xb.row(kk), yb.row(kk));
      xb.row(kk) -= xmean;
      yb.row(kk) -= ymean;
    }
    gram.noalias() += xb.topRows(r).transpose() * xb.topRows(r);
    cross.noalias() += xb.topRows(r).transpose() * yb.topRows(r);
  }
  std::vector<LinearModel> models;
  for (double lambda : lambdas) {
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success || (lambda == 0.0 && !(llt.rcond() >= 1e-12)))
      throw ModelError("fit_linear: normal equations are singular (lambda = " + lambda_tag(lambda) + ", " +
                       std::to_string(count) + " windows)");
    Matrix weights = llt.solve(cross);
    if (!weights.allFinite()) throw ModelError("fit_linear: non-finite weights");
    Vector bias = (ymean - xmean * weights).transpose();
    models.emplace_back(std::move(weights), std::move(bias), shape, m, mt, lambda, seed,
                        "linear_l" + lambda_tag(lambda) + suffix);
  }
  return models;
}

}  // namespace

std::vector<Matrix> Forecaster::predict_batch(std::span<const Matrix> xs) const {
  std::vector<Matrix> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(predict(x));
  return out;
}

// ---------------------------------------------------------------------------

Matrix seasonal_naive_predict(const Matrix& x, std::size_t period, std::size_t horizon,
                              std::span<const std::size_t> targets) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (period == 0 || period > n)
    throw ConfigError("seasonal period " + std::to_string(period) + " must lie in [1, " +
                      std::to_string(n) + "]");
  Matrix y(static_cast<Eigen::Index>(horizon), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t t = 0; t < horizon; ++t) {
    const auto src = static_cast<Eigen::Index>(n - period + t % period);
    for (std::size_t c = 0; c < targets.size(); ++c) {
      if (targets[c] >= static_cast<std::size_t>(x.cols())) throw ModelError("target index outside input window");
      y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = x(src, static_cast<Eigen::Index>(targets[c]));
    }
  }
  return y;
}

SeasonalNaive::SeasonalNaive(std::size_t period, std::size_t horizon, std::vector<std::size_t> targets)
    : period_(period), horizon_(horizon), targets_(std::move(targets)) {
  if (period_ == 0) throw ConfigError("seasonal period must be positive");
  if (targets_.empty()) throw ConfigError("seasonal naive needs at least one target");
}

Matrix SeasonalNaive::predict(const Matrix& x) const {
  return seasonal_naive_predict(x, period_, horizon_, targets_);
}

std::string SeasonalNaive::id() const { return "seasonal_naive_p" + std::to_string(period_); }

std::size_t select_seasonal_period(std::span<const std::size_t> candidates, const WindowSet& val) {
  if (candidates.empty()) throw ConfigError("no seasonal period candidates");
  if (val.empty()) throw ConfigError("select_seasonal_period: no validation windows");
  std::vector<std::size_t> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t best = sorted.front();
  double best_mse = std::numeric_limits<double>::infinity();
  for (std::size_t p : sorted) {
    double sum = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const WindowSample w = val.at(i);
      sum += mse_target(seasonal_naive_predict(w.x, p, val.shape().horizon, val.schema().targets), w.y);
    }
    const double mse = sum / static_cast<double>(val.size());
    if (mse < best_mse) {
      best_mse = mse;
      best = p;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

LinearModel::LinearModel(Matrix weights, Vector bias, WindowShape shape, std::size_t channels,
                         std::size_t targets, double ridge_lambda, std::uint64_t train_seed, std::string id)
    : weights_(std::move(weights)),
      bias_(std::move(bias)),
      shape_(shape),
      channels_(channels),
      targets_(targets),
      lambda_(ridge_lambda),
      seed_(train_seed),
      id_(std::move(id)) {
  if (weights_.rows() != static_cast<Eigen::Index>(shape_.input * channels_) ||
      weights_.cols() != static_cast<Eigen::Index>(shape_.horizon * targets_) ||
      bias_.size() != weights_.cols())
    throw ModelError("linear model: weight shape does not match window shape");
}

Matrix LinearModel::predict(const Matrix& x) const {
  if (x.rows() != static_cast<Eigen::Index>(shape_.input) || x.cols() != static_cast<Eigen::Index>(channels_))
    throw ModelError("linear model: input window is " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + ", expected " + std::to_string(shape_.input) + "x" +
                     std::to_string(channels_));
  const Eigen::Map<const Eigen::RowVectorXd> flat(x.data(), x.size());
  Eigen::RowVectorXd out = flat * weights_;
  out += bias_.transpose();
  Matrix y(static_cast<Eigen::Index>(shape_.horizon), static_cast<Eigen::Index>(targets_));
  std::memcpy(y.data(), out.data(), sizeof(double) * static_cast<std::size_t>(out.size()));
  return y;
}

LinearModel fit_linear(const WindowSet& train, double lambda, std::uint64_t seed) {
  return std::move(fit_impl(train, std::span<const double>(&lambda, 1), seed, nullptr, "").front());
}

std::vector<LinearModel> fit_linear_path(const WindowSet& train, std::span<const double> lambdas,
                                         std::uint64_t seed) {
  return fit_impl(train, lambdas, seed, nullptr, "");
}

void check_augmentation_pool(std::span<const Scenario> pool) {
  if (pool.empty()) throw ConfigError("fault augmentation: empty family pool");
  for (Scenario s : pool)
    if (!is_transfer(s))
      throw ProtocolError("fault augmentation: '" + std::string(scenario_name(s)) +
                          "' is a scored benchmark scenario and may not be used in training");
}

LinearModel fit_fault_augmented(const WindowSet& train, double lambda, double p_aug,
                                std::span<const Scenario> pool, std::uint64_t seed) {
  return std::move(fit_fault_augmented_path(train, std::span<const double>(&lambda, 1), p_aug, pool, seed).front());
}

std::vector<LinearModel> fit_fault_augmented_path(const WindowSet& train, std::span<const double> lambdas,
                                                  double p_aug, std::span<const Scenario> pool,
                                                  std::uint64_t seed) {
  check_augmentation_pool(pool);
  if (!(p_aug >= 0.0 && p_aug <= 1.0)) throw ConfigError("p_aug must lie in [0, 1]");
  const ChannelSchema& schema = train.schema();
  const std::vector<Scenario> families(pool.begin(), pool.end());
  auto adjust = [&](std::size_t i, Matrix& x) {
    Rng rng(derive_seed(seed, i));
    if (!(rng.uniform01() < p_aug)) return;
    const Scenario fam = families[static_cast<std::size_t>(rng.below(families.size()))];
    const double s = rng.uniform01();
    x = apply_transfer(x, fam, s, schema, rng);
  };
  return fit_impl(train, lambdas, seed, adjust, "_aug");
}

// ---------------------------------------------------------------------------

const char* aggregator_name(Aggregator a) { return a == Aggregator::Mean ? "mean" : "median"; }

Aggregator parse_aggregator(const std::string& name) {
  if (name == "mean") return Aggregator::Mean;
  if (name == "median") return Aggregator::Median;
  throw ConfigError("aggregator must be 'mean' or 'median', got '" + name + "'");
}

Matrix ensemble_predict(std::span<const ForecasterPtr> members, const Matrix& x, Aggregator agg) {
  if (members.size() < 2) throw ConfigError("ensemble needs at least 2 members");
  std::vector<Matrix> preds;
  preds.reserve(members.size());
  for (const auto& f : members) {
    preds.push_back(f->predict(x));
    if (preds.back().rows() != preds.front().rows() || preds.back().cols() != preds.front().cols())
      throw ModelError("ensemble members disagree on prediction shape");
  }
  const std::size_t k = preds.size();
  Matrix out(preds.front().rows(), preds.front().cols());
  std::vector<double> v(k);
  for (Eigen::Index e = 0; e < out.size(); ++e) {
    for (std::size_t q = 0; q < k; ++q) v[q] = preds[q].data()[e];
    std::sort(v.begin(), v.end());
    if (agg == Aggregator::Mean) {
      out.data()[e] = anchored_mean(v.data(), k);
    } else if (k % 2 == 1) {
      out.data()[e] = v[k / 2];
    } else {
      const double a = v[k / 2 - 1];
      out.data()[e] = a + (v[k / 2] - a) / 2.0;
    }
  }
  return out;
}

EnsembleForecaster::EnsembleForecaster(std::vector<ForecasterPtr> members, Aggregator agg, std::string id)
    : members_(std::move(members)), agg_(agg), id_(std::move(id)) {
  if (members_.size() < 2) throw ConfigError("ensemble needs at least 2 members");
  if (id_.empty())
    id_ = "ensemble" + std::to_string(members_.size()) + "_" + aggregator_name(agg_) + "(" +
          members_.front()->id() + ")";
}

Matrix EnsembleForecaster::predict(const Matrix& x) const { return ensemble_predict(members_, x, agg_); }

bool EnsembleForecaster::deterministic() const {
  return std::all_of(members_.begin(), members_.end(), [](const ForecasterPtr& f) { return f->deterministic(); });
}

double trimmed_mean(std::vector<double>& values, double alpha) {
  if (!(alpha >= 0.0 && alpha < 0.5)) throw ConfigError("trim fraction alpha must lie in [0, 0.5)");
  if (values.empty()) throw ConfigError("trimmed_mean: no values");
  std::sort(values.begin(), values.end());
  const auto cut = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(values.size())));
  const std::size_t kept = values.size() - 2 * cut;
  if (kept == 0) throw ModelError("trimmed_mean: every value trimmed");
  return anchored_mean(values.data() + cut, kept);
}

Matrix smoothed_predict(const Forecaster& base, const Matrix& x, double sigma, std::size_t queries,
                        double alpha, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("smoothing sigma must be >= 0");
  if (queries == 0) throw ConfigError("smoothing needs at least one query");
  if (!(alpha >= 0.0 && alpha < 0.5)) throw ConfigError("trim fraction alpha must lie in [0, 0.5)");
  std::vector<Matrix> preds;
  preds.reserve(queries);
  Matrix noisy(x.rows(), x.cols());
  for (std::size_t q = 0; q < queries; ++q) {
    for (Eigen::Index e = 0; e < x.size(); ++e) noisy.data()[e] = x.data()[e] + sigma * rng.normal();
    preds.push_back(base.predict(noisy));
    if (preds.back().rows() != preds.front().rows() || preds.back().cols() != preds.front().cols())
      throw ModelError("smoothing: base model changed prediction shape");
  }
  Matrix out(preds.front().rows(), preds.front().cols());
  std::vector<double> v(queries);
  for (Eigen::Index e = 0; e < out.size(); ++e) {
    for (std::size_t q = 0; q < queries; ++q) v[q] = preds[q].data()[e];
    out.data()[e] = trimmed_mean(v, alpha);
  }
  return out;
}

SmoothedForecaster::SmoothedForecaster(ForecasterPtr base, double sigma, std::size_t queries, double alpha,
                                       std::uint64_t seed, std::string id)
    : base_(std::move(base)), sigma_(sigma), queries_(queries), alpha_(alpha), seed_(seed), id_(std::move(id)) {
  if (!(sigma_ >= 0.0)) throw ConfigError("smoothing sigma must be >= 0");
  if (queries_ == 0) throw ConfigError("smoothing needs at least one query");
  if (!(alpha_ >= 0.0 && alpha_ < 0.5)) throw ConfigError("trim fraction alpha must lie in [0, 0.5)");
  if (id_.empty()) id_ = "smoothed(" + base_->id() + ")";
}

Matrix SmoothedForecaster::predict(const Matrix& x) const {
  Rng rng(derive_seed(seed_, matrix_hash(x)));
  return smoothed_predict(*base_, x, sigma_, queries_, alpha_, rng);
}

std::uint64_t matrix_hash(const Matrix& x) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(x.rows()) * 0x100000001B3ULL ^
                          static_cast<std::uint64_t>(x.cols()));
  for (Eigen::Index e = 0; e < x.size(); ++e) {
    std::uint64_t bits;
    std::memcpy(&bits, x.data() + e, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

}  // namespace robustcast
