#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robustcast/dataset.hpp"
#include "robustcast/rng.hpp"

namespace robustcast {

/// Scored benchmark scenarios (in fixed benchmark order) followed by the
/// training-only transfer families. The enumerator order is the tie-break
/// order for worst-scenario selection.
enum class Scenario : std::uint8_t {
  Drift,
  Attenuation,
  Noise,
  Spike,
  TimeStretch,
  TimeCompress,
  StuckSensor,
  MissingData,
  // transfer families
  LinearDrift,
  NonlinearDrift,
  Scaling,
  TimeVaryingScaling,
  TrimmingConstant,
  TrimmingVarying,
  PacketLoss,
};

inline constexpr std::array<Scenario, 8> kBenchmarkScenarios = {
    Scenario::Drift,       Scenario::Attenuation,  Scenario::Noise,       Scenario::Spike,
    Scenario::TimeStretch, Scenario::TimeCompress, Scenario::StuckSensor, Scenario::MissingData,
};

inline constexpr std::array<Scenario, 7> kTransferFamilies = {
    Scenario::LinearDrift,      Scenario::NonlinearDrift,  Scenario::Scaling,
    Scenario::TimeVaryingScaling, Scenario::TrimmingConstant, Scenario::TrimmingVarying,
    Scenario::PacketLoss,
};

enum class ScenarioClass { Value, Timing, Availability };

std::string_view scenario_name(Scenario s);
/// Exact-spelling lookup; throws ConfigError for unknown names.
Scenario parse_scenario(std::string_view name);
bool is_benchmark(Scenario s);
bool is_transfer(Scenario s);
std::size_t ordinal(Scenario s);
ScenarioClass scenario_class(Scenario s);
std::string_view class_name(ScenarioClass c);

/// Sorts into fixed benchmark order, rejects duplicates and transfer families.
std::vector<Scenario> canonical_scenario_order(std::span<const Scenario> scenarios);

enum class ChannelScope { ContinuousSubset, AllChannels };

enum class WindowRule {
  FullWindow,          // every row
  SingleStep,          // one step u_j in {2..n} per channel
  SharedFixedHalf,     // one shared window of length ceil(n/2)
  PerChannelFraction,  // per-channel window of length ceil(theta (n-1))
  SharedFraction,      // one shared window of length ceil(theta (n-1))
};

struct ScenarioSpec {
  Scenario id;
  double theta_min;
  double theta_max;
  ChannelScope scope;
  WindowRule window_rule;
};

/// Endpoint table for the eight scored scenarios.
const ScenarioSpec& benchmark_spec(Scenario s);

/// theta_min + s (theta_max - theta_min); s must lie in [0, 1].
double severity_map(const ScenarioSpec& spec, double s);

struct ChannelRule {
  enum class Mode { Coupled, FixedFraction };
  Mode mode = Mode::Coupled;
  double gamma_max = 0.5;
  double q = 0.0;  // fixed-fraction mode only

  static ChannelRule coupled(double gamma_max = 0.5);
  static ChannelRule fixed(double q, double gamma_max = 0.5);
  /// Accepts "coupled" or "fixed:<q>".
  static ChannelRule parse(std::string_view text, double gamma_max = 0.5);
  std::string to_string() const;
  void validate() const;
  bool operator==(const ChannelRule&) const = default;
};

/// 0 at s = 0, else 1 + floor(s (ceil(gamma_max m_cont) - 1)).
std::size_t channel_count(double s, std::size_t m_cont, double gamma_max);
/// 0 at s = 0, else ceil(q m_cont).
std::size_t channel_count_fixed(double s, std::size_t m_cont, double q);
std::size_t channel_count(const ChannelRule& rule, double s, std::size_t m_cont);

/// Contiguous run of rows, 0-based.
struct TimeWindow {
  std::size_t first = 0;
  std::size_t length = 0;
  bool operator==(const TimeWindow&) const = default;
};

/// One realized perturbation: severity, affected channels, time windows and
/// auxiliary noise. windows[k] is the window of channels[k]; for shared
/// window rules every entry is the same window.
struct PerturbationDraw {
  Scenario scenario = Scenario::Drift;
  double severity = 0.0;
  double theta = 0.0;
  std::vector<std::size_t> channels;
  std::vector<TimeWindow> windows;
  Matrix noise;  // rows x channels.size(), Noise only
};

/// Draw the channel subset, windows and auxiliary noise for one scenario at
/// severity s. Random numbers are consumed in a fixed order: channel
/// subset, then windows, then noise.
PerturbationDraw draw_perturbation(const ScenarioSpec& spec, const ChannelRule& rule, double s,
                                   std::size_t n, const ChannelSchema& schema, Rng& rng);

/// Endpoint-clipped linear interpolation at the 1-based position tau.
double interp(std::span<const double> x, double tau);

Matrix apply_drift(const Matrix& x, const PerturbationDraw& d);
Matrix apply_attenuation(const Matrix& x, const PerturbationDraw& d);
Matrix apply_noise(const Matrix& x, const PerturbationDraw& d);
Matrix apply_spike(const Matrix& x, const PerturbationDraw& d);
/// Rows first..first+len-1 of each selected channel are replaced by the same
/// channel read at 1-based positions (first + i / rho), i = 1..len.
Matrix apply_timewarp(const Matrix& x, const PerturbationDraw& d, double rho);
Matrix apply_stuck(const Matrix& x, const PerturbationDraw& d);
Matrix apply_missing(const Matrix& x, const PerturbationDraw& d);

/// Dispatch on d.scenario (benchmark scenarios only).
Matrix apply_perturbation(const Matrix& x, const PerturbationDraw& d);

/// Draw and apply a benchmark scenario in one step.
Matrix perturb(const Matrix& x, Scenario scenario, double s, const ChannelRule& rule,
               const ChannelSchema& schema, Rng& rng);

/// Training-only transfer family at severity s. Channels are drawn from the
/// continuous pool with the coupled rule.
Matrix apply_transfer(const Matrix& x, Scenario family, double s, const ChannelSchema& schema,
                      Rng& rng, double gamma_max = 0.5);

}  // namespace robustcast
