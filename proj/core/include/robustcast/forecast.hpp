#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "robustcast/dataset.hpp"
#include "robustcast/faults.hpp"
#include "robustcast/rng.hpp"

namespace robustcast {

/// Maps an n x m input window to an n' x m_tgt prediction.
///
/// Implementations must be safe to call concurrently from several threads.
class Forecaster {
 public:
  virtual ~Forecaster() = default;

  virtual Matrix predict(const Matrix& x) const = 0;

  /// Batched prediction; the default loops over predict().
  virtual std::vector<Matrix> predict_batch(std::span<const Matrix> xs) const;

  virtual std::string id() const = 0;

  /// Repeated predict() on equal input gives bit-identical output.
  virtual bool deterministic() const { return true; }
};

using ForecasterPtr = std::shared_ptr<const Forecaster>;

/// Ignores its input. Used as an oracle: its clean and perturbed losses on a
/// shared window coincide.
class ConstantForecaster final : public Forecaster {
 public:
  explicit ConstantForecaster(Matrix output, std::string id = "constant")
      : output_(std::move(output)), id_(std::move(id)) {}
  Matrix predict(const Matrix&) const override { return output_; }
  std::string id() const override { return id_; }

 private:
  Matrix output_;
  std::string id_;
};

// ---------------------------------------------------------------------------
// SeasonalNaive

/// y_{t,c} = x_{n-P+((t-1) mod P), target_c}, t = 1..horizon.
Matrix seasonal_naive_predict(const Matrix& x, std::size_t period, std::size_t horizon,
                              std::span<const std::size_t> targets);

class SeasonalNaive final : public Forecaster {
 public:
  SeasonalNaive(std::size_t period, std::size_t horizon, std::vector<std::size_t> targets);
  Matrix predict(const Matrix& x) const override;
  std::string id() const override;
  std::size_t period() const { return period_; }

 private:
  std::size_t period_;
  std::size_t horizon_;
  std::vector<std::size_t> targets_;
};

/// Period with the lowest mean clean validation MSE; ties go to the
/// smaller period.
std::size_t select_seasonal_period(std::span<const std::size_t> candidates, const WindowSet& val);

// ---------------------------------------------------------------------------
// Ridge-regularized linear forecaster

class LinearModel final : public Forecaster {
 public:
  /// weights: (n m) x (n' m_tgt), applied to the row-major flattened window.
  LinearModel(Matrix weights, Vector bias, WindowShape shape, std::size_t channels,
              std::size_t targets, double ridge_lambda, std::uint64_t train_seed, std::string id);

  Matrix predict(const Matrix& x) const override;
  std::string id() const override { return id_; }

  const Matrix& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }
  double ridge_lambda() const { return lambda_; }
  std::uint64_t train_seed() const { return seed_; }

 private:
  Matrix weights_;
  Vector bias_;
  WindowShape shape_;
  std::size_t channels_;
  std::size_t targets_;
  double lambda_;
  std::uint64_t seed_;
  std::string id_;
};

/// Least squares of the flattened target on the flattened input with an
/// unpenalized intercept and lambda * I on the weights. Deterministic.
/// Throws ModelError when the normal equations are singular.
LinearModel fit_linear(const WindowSet& train, double lambda, std::uint64_t seed);

/// One model per lambda; the Gram matrix is accumulated once.
std::vector<LinearModel> fit_linear_path(const WindowSet& train, std::span<const double> lambdas,
                                         std::uint64_t seed);

/// Throws ProtocolError unless every family is a training-only transfer
/// family. Scored scenarios never enter training.
void check_augmentation_pool(std::span<const Scenario> pool);

/// fit_linear on inputs where, with probability p_aug, one uniformly chosen
/// family from `pool` is applied at s ~ U(0, 1). Targets are untouched.
LinearModel fit_fault_augmented(const WindowSet& train, double lambda, double p_aug,
                                std::span<const Scenario> pool, std::uint64_t seed);
std::vector<LinearModel> fit_fault_augmented_path(const WindowSet& train, std::span<const double> lambdas,
                                                  double p_aug, std::span<const Scenario> pool,
                                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Black-box wrappers

enum class Aggregator { Mean, Median };

const char* aggregator_name(Aggregator a);
Aggregator parse_aggregator(const std::string& name);

/// Elementwise mean or median of member predictions. Values are sorted per
/// coordinate before reduction so the result does not depend on member order.
Matrix ensemble_predict(std::span<const ForecasterPtr> members, const Matrix& x, Aggregator agg);

class EnsembleForecaster final : public Forecaster {
 public:
  EnsembleForecaster(std::vector<ForecasterPtr> members, Aggregator agg, std::string id = "");
  Matrix predict(const Matrix& x) const override;
  std::string id() const override { return id_; }
  bool deterministic() const override;

 private:
  std::vector<ForecasterPtr> members_;
  Aggregator agg_;
  std::string id_;
};

/// Mean after dropping floor(alpha * size) values from each tail. Sorts
/// `values` in place.
double trimmed_mean(std::vector<double>& values, double alpha);

/// Q queries of base(x + sigma Z_q) aggregated by the alpha-trimmed mean
/// per output coordinate.
Matrix smoothed_predict(const Forecaster& base, const Matrix& x, double sigma, std::size_t queries,
                        double alpha, Rng& rng);

/// Randomized-smoothing wrapper. The noise stream for a call is derived
/// from the wrapper seed and the input bytes, so equal inputs give equal
/// outputs regardless of call order or thread.
class SmoothedForecaster final : public Forecaster {
 public:
  SmoothedForecaster(ForecasterPtr base, double sigma, std::size_t queries, double alpha,
                     std::uint64_t seed, std::string id = "");
  Matrix predict(const Matrix& x) const override;
  std::string id() const override { return id_; }

 private:
  ForecasterPtr base_;
  double sigma_;
  std::size_t queries_;
  double alpha_;
  std::uint64_t seed_;
  std::string id_;
};

/// Hash of the raw bytes of a matrix plus its shape.
std::uint64_t matrix_hash(const Matrix& x);

}  // namespace robustcast
