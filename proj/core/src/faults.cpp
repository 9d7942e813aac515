#include "robustcast/faults.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "robustcast/error.hpp"

namespace robustcast {

namespace {

constexpr std::array<std::string_view, 15> kNames = {
    "Drift",       "Attenuation",  "Noise",          "Spike",
    "TimeStretch", "TimeCompress", "StuckSensor",    "MissingData",
    "LinearDrift", "NonlinearDrift", "Scaling",      "TimeVaryingScaling",
    "TrimmingConstant", "TrimmingVarying", "PacketLoss",
};

constexpr std::array<ScenarioSpec, 8> kSpecs = {{
    {Scenario::Drift, 0.0, 0.75, ChannelScope::ContinuousSubset, WindowRule::FullWindow},
    {Scenario::Attenuation, 1.0, 0.25, ChannelScope::ContinuousSubset, WindowRule::FullWindow},
    {Scenario::Noise, 0.0, 1.0, ChannelScope::ContinuousSubset, WindowRule::FullWindow},
    {Scenario::Spike, 0.0, 7.5, ChannelScope::ContinuousSubset, WindowRule::SingleStep},
    {Scenario::TimeStretch, 1.0, 5.0, ChannelScope::ContinuousSubset, WindowRule::SharedFixedHalf},
    {Scenario::TimeCompress, 1.0, 0.1, ChannelScope::ContinuousSubset, WindowRule::SharedFixedHalf},
    {Scenario::StuckSensor, 0.0, 1.0, ChannelScope::ContinuousSubset, WindowRule::PerChannelFraction},
    {Scenario::MissingData, 0.0, 0.5, ChannelScope::AllChannels, WindowRule::SharedFraction},
}};

// Slack for ceil() of products like 0.1 * 30 that land a rounding error
// above an integer.
constexpr double kCeilSlack = 1e-9;

std::size_t ceil_count(double v) {
  return static_cast<std::size_t>(std::ceil(v - kCeilSlack));
}

void check_severity(double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw ConfigError("severity " + std::to_string(s) + " outside [0, 1]");
}

// Uniform subset of size k without replacement: partial Fisher-Yates over
// the pool, first k kept, returned sorted.
std::vector<std::size_t> sample_subset(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Window of `length` rows with 1-based start a in {2..n-length+1}.
TimeWindow sample_window(std::size_t n, std::size_t length, Rng& rng) {
  if (length == 0) return {1, 0};
  if (length > n - 1) throw ProtocolError("perturbation window longer than n - 1");
  const std::size_t first = 1 + static_cast<std::size_t>(rng.below(n - length));
  return {first, length};
}

std::vector<double> column(const Matrix& x, std::size_t j) {
  std::vector<double> c(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) c[static_cast<std::size_t>(i)] = x(i, static_cast<Eigen::Index>(j));
  return c;
}

}  // namespace

std::string_view scenario_name(Scenario s) { return kNames[static_cast<std::size_t>(s)]; }

Scenario parse_scenario(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<Scenario>(i);
  throw ConfigError("unknown scenario name '" + std::string(name) + "'");
}

bool is_benchmark(Scenario s) { return static_cast<std::size_t>(s) < kBenchmarkScenarios.size(); }
bool is_transfer(Scenario s) { return !is_benchmark(s); }
std::size_t ordinal(Scenario s) { return static_cast<std::size_t>(s); }

ScenarioClass scenario_class(Scenario s) {
  switch (s) {
    case Scenario::TimeStretch:
    case Scenario::TimeCompress:
      return ScenarioClass::Timing;
    case Scenario::StuckSensor:
    case Scenario::MissingData:
    case Scenario::PacketLoss:
      return ScenarioClass::Availability;
    default:
      return ScenarioClass::Value;
  }
}

std::string_view class_name(ScenarioClass c) {
  switch (c) {
    case ScenarioClass::Value: return "Value";
    case ScenarioClass::Timing: return "Timing";
    case ScenarioClass::Availability: return "Availability";
  }
  return "?";
}

std::vector<Scenario> canonical_scenario_order(std::span<const Scenario> scenarios) {
  std::vector<Scenario> out(scenarios.begin(), scenarios.end());
  for (Scenario s : out)
    if (!is_benchmark(s))
      throw ProtocolError("'" + std::string(scenario_name(s)) +
                          "' is a training-only transfer family, not a scored scenario");
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end())
    throw ConfigError("duplicate scenario in scenario list");
  if (out.empty()) throw ConfigError("scenario list is empty");
  return out;
}

const ScenarioSpec& benchmark_spec(Scenario s) {
  if (!is_benchmark(s))
    throw ConfigError("'" + std::string(scenario_name(s)) + "' has no benchmark endpoint spec");
  return kSpecs[static_cast<std::size_t>(s)];
}

double severity_map(const ScenarioSpec& spec, double s) {
  check_severity(s);
  return std::lerp(spec.theta_min, spec.theta_max, s);
}

ChannelRule ChannelRule::coupled(double gamma_max) {
  ChannelRule r;
  r.gamma_max = gamma_max;
  r.validate();
  return r;
}

ChannelRule ChannelRule::fixed(double q, double gamma_max) {
  ChannelRule r;
  r.mode = Mode::FixedFraction;
  r.gamma_max = gamma_max;
  r.q = q;
  r.validate();
  return r;
}

ChannelRule ChannelRule::parse(std::string_view text, double gamma_max) {
  if (text == "coupled") return coupled(gamma_max);
  constexpr std::string_view prefix = "fixed:";
  if (text.substr(0, prefix.size()) == prefix) {
    const std::string rest(text.substr(prefix.size()));
    std::size_t used = 0;
    double q = 0.0;
    try {
      q = std::stod(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != rest.size())
      throw ConfigError("channel_rule: bad fraction in '" + std::string(text) + "'");
    return fixed(q, gamma_max);
  }
  throw ConfigError("channel_rule must be 'coupled' or 'fixed:<q>', got '" + std::string(text) + "'");
}

std::string ChannelRule::to_string() const {
  if (mode == Mode::Coupled) return "coupled";
  char buf[64];
  std::snprintf(buf, sizeof buf, "fixed:%.17g", q);
  return buf;
}

void ChannelRule::validate() const {
  if (!(gamma_max > 0.0 && gamma_max <= 1.0)) throw ConfigError("gamma_max must lie in (0, 1]");
  if (mode == Mode::FixedFraction && !(q > 0.0 && q <= gamma_max))
    throw ConfigError("fixed channel fraction q must lie in (0, gamma_max]");
}

std::size_t channel_count(double s, std::size_t m_cont, double gamma_max) {
  check_severity(s);
  if (m_cont == 0) throw ConfigError("channel_count: no continuous channels");
  if (s == 0.0) return 0;
  const std::size_t cap = std::min(m_cont, ceil_count(gamma_max * static_cast<double>(m_cont)));
  return 1 + static_cast<std::size_t>(std::floor(s * static_cast<double>(cap - 1)));
}

std::size_t channel_count_fixed(double s, std::size_t m_cont, double q) {
  check_severity(s);
  if (s == 0.0) return 0;
  return std::min(m_cont, ceil_count(q * static_cast<double>(m_cont)));
}

std::size_t channel_count(const ChannelRule& rule, double s, std::size_t m_cont) {
  return rule.mode == ChannelRule::Mode::Coupled ? channel_count(s, m_cont, rule.gamma_max)
                                                 : channel_count_fixed(s, m_cont, rule.q);
}

PerturbationDraw draw_perturbation(const ScenarioSpec& spec, const ChannelRule& rule, double s,
                                   std::size_t n, const ChannelSchema& schema, Rng& rng) {
  if (n < 2) throw ConfigError("input window must have at least 2 rows");
  PerturbationDraw d;
  d.scenario = spec.id;
  d.severity = s;
  d.theta = severity_map(spec, s);

  if (spec.scope == ChannelScope::AllChannels) {
    d.channels.resize(schema.channel_count());
    std::iota(d.channels.begin(), d.channels.end(), std::size_t{0});
  } else {
    auto pool = schema.continuous_indices();
    if (pool.empty()) throw ConfigError("no continuous channels to perturb");
    d.channels = sample_subset(std::move(pool), channel_count(rule, s, schema.continuous_count()), rng);
  }
  const std::size_t k = d.channels.size();

  switch (spec.window_rule) {
    case WindowRule::FullWindow:
      d.windows.assign(k, TimeWindow{0, n});
      break;
    case WindowRule::SingleStep:
      d.windows.resize(k);
      for (auto& w : d.windows) w = sample_window(n, 1, rng);
      break;
    case WindowRule::SharedFixedHalf:
      d.windows.assign(k, sample_window(n, (n + 1) / 2, rng));
      break;
    case WindowRule::PerChannelFraction: {
      const std::size_t len = ceil_count(d.theta * static_cast<double>(n - 1));
      d.windows.resize(k);
      for (auto& w : d.windows) w = sample_window(n, len, rng);
      break;
    }
    case WindowRule::SharedFraction: {
      const std::size_t len = ceil_count(d.theta * static_cast<double>(n - 1));
      d.windows.assign(k, sample_window(n, len, rng));
      break;
    }
  }

  if (spec.id == Scenario::Noise) {
    d.noise.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < d.noise.rows(); ++i)
      for (Eigen::Index c = 0; c < d.noise.cols(); ++c) d.noise(i, c) = rng.normal();
  }
  return d;
}

double interp(std::span<const double> x, double tau) {
  if (x.empty()) throw ConfigError("interp: empty vector");
  const double n = static_cast<double>(x.size());
  const double t = std::min(n, std::max(1.0, tau));
  const double a = std::floor(t);
  const double b = std::ceil(t);
  const double lambda = t - a;
  const double xa = x[static_cast<std::size_t>(a) - 1];
  if (lambda == 0.0) return xa;
  return (1.0 - lambda) * xa + lambda * x[static_cast<std::size_t>(b) - 1];
}

Matrix apply_drift(const Matrix& x, const PerturbationDraw& d) {
  Matrix out = x;
  for (std::size_t c = 0; c < d.channels.size(); ++c) {
    const auto j = static_cast<Eigen::Index>(d.channels[c]);
    const auto& w = d.windows[c];
    for (std::size_t i = w.first; i < w.first + w.length; ++i) out(static_cast<Eigen::Index>(i), j) += d.theta;
  }
  return out;
}

Matrix apply_attenuation(const Matrix& x, const PerturbationDraw& d) {
  Matrix out = x;
  for (std::size_t c = 0; c < d.channels.size(); ++c) {
    const auto j = static_cast<Eigen::Index>(d.channels[c]);
    const auto& w = d.windows[c];
    for (std::size_t i = w.first; i < w.first + w.length; ++i) out(static_cast<Eigen::Index>(i), j) *= d.theta;
  }
  return out;
}

Matrix apply_noise(const Matrix& x, const PerturbationDraw& d) {
  if (!d.channels.empty() &&
      (d.noise.rows() != x.rows() || d.noise.cols() != static_cast<Eigen::Index>(d.channels.size())))
    throw ProtocolError("noise draw shape does not match input window");
  Matrix out = x;
  for (std::size_t c = 0; c < d.channels.size(); ++c) {
    const auto j = static_cast<Eigen::Index>(d.channels[c]);
    const auto& w = d.windows[c];
    for (std::size_t i = w.first; i < w.first + w.length; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      out(r, j) += d.theta * d.noise(r, static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

Matrix apply_spike(const Matrix& x, const PerturbationDraw& d) {
  Matrix out = x;
  for (std::size_t c = 0; c < d.channels.size(); ++c)
    out(static_cast<Eigen::Index>(d.windows[c].first), static_cast<Eigen::Index>(d.channels[c])) += d.theta;
  return out;
}

Matrix apply_timewarp(const Matrix& x, const PerturbationDraw& d, double rho) {
  if (!(rho > 0.0)) throw ConfigError("time-warp rate must be positive");
  Matrix out = x;
  for (std::size_t c = 0; c < d.channels.size(); ++c) {
    const std::size_t j = d.channels[c];
    const auto src = column(x, j);
    const auto& w = d.windows[c];
    // 1-based a = first + 1, so a - 1 + i / rho = first + i / rho.
    for (std::size_t i = 1; i <= w.length; ++i) {
      const double tau = static_cast<double>(w.first) + static_cast<double>(i) / rho;
      out(static_cast<Eigen::Index>(w.first + i - 1), static_cast<Eigen::Index>(j)) = interp(src, tau);
    }
  }
  return out;
}

Matrix apply_stuck(const Matrix& x, const PerturbationDraw& d) {
  Matrix out = x;
  for (std::size_t c = 0; c < d.channels.size(); ++c) {
    const auto j = static_cast<Eigen::Index>(d.channels[c]);
    const auto& w = d.windows[c];
    if (w.length == 0) continue;
    if (w.first == 0) throw ProtocolError("stuck window must start after the first row");
    const double held = x(static_cast<Eigen::Index>(w.first - 1), j);
    for (std::size_t i = w.first; i < w.first + w.length; ++i) out(static_cast<Eigen::Index>(i), j) = held;
  }
  return out;
}

Matrix apply_missing(const Matrix& x, const PerturbationDraw& d) {
  // Same forward-fill rule as StuckSensor; the draw makes the window shared
  // and covers every channel.
  return apply_stuck(x, d);
}

Matrix apply_perturbation(const Matrix& x, const PerturbationDraw& d) {
  switch (d.scenario) {
    case Scenario::Drift: return apply_drift(x, d);
    case Scenario::Attenuation: return apply_attenuation(x, d);
    case Scenario::Noise: return apply_noise(x, d);
    case Scenario::Spike: return apply_spike(x, d);
    case Scenario::TimeStretch:
    case Scenario::TimeCompress: return apply_timewarp(x, d, d.theta);
    case Scenario::StuckSensor: return apply_stuck(x, d);
    case Scenario::MissingData: return apply_missing(x, d);
    default:
      throw ProtocolError("apply_perturbation: '" + std::string(scenario_name(d.scenario)) +
                          "' is not a benchmark scenario");
  }
}

Matrix perturb(const Matrix& x, Scenario scenario, double s, const ChannelRule& rule,
               const ChannelSchema& schema, Rng& rng) {
  const auto draw = draw_perturbation(benchmark_spec(scenario), rule, s,
                                      static_cast<std::size_t>(x.rows()), schema, rng);
  return apply_perturbation(x, draw);
}

Matrix apply_transfer(const Matrix& x, Scenario family, double s, const ChannelSchema& schema,
                      Rng& rng, double gamma_max) {
  if (!is_transfer(family))
    throw ProtocolError("'" + std::string(scenario_name(family)) + "' is not a transfer family");
  check_severity(s);
  const std::size_t n = static_cast<std::size_t>(x.rows());
  if (n < 2) throw ConfigError("input window must have at least 2 rows");
  auto pool = schema.continuous_indices();
  if (pool.empty()) throw ConfigError("no continuous channels to perturb");
  const auto channels = sample_subset(std::move(pool), channel_count(s, schema.continuous_count(), gamma_max), rng);

  Matrix out = x;
  const double denom = static_cast<double>(n - 1);
  for (std::size_t jj : channels) {
    const auto j = static_cast<Eigen::Index>(jj);
    switch (family) {
      case Scenario::LinearDrift: {
        const double offset = s * 1.0;
        for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) += offset * (static_cast<double>(i) / denom);
        break;
      }
      case Scenario::NonlinearDrift: {
        const double lin = 0.5 * s;
        const double quad = 0.5 * s;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
          const double t = static_cast<double>(i) / denom;
          out(i, j) += lin * t + quad * t * t;
        }
        break;
      }
      case Scenario::Scaling: {
        const double mult = 1.0 + s;
        for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) *= mult;
        break;
      }
      case Scenario::TimeVaryingScaling: {
        const double mult = 1.0 + s;
        for (Eigen::Index i = 0; i < out.rows(); ++i)
          out(i, j) *= 1.0 + (mult - 1.0) * (static_cast<double>(i) / denom);
        break;
      }
      case Scenario::TrimmingConstant: {
        const double bound = 3.0 - 2.0 * s;
        for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = std::clamp(out(i, j), -bound, bound);
        break;
      }
      case Scenario::TrimmingVarying: {
        const double bound = 3.0 - 2.0 * s;
        const double damp = 1.0 - 0.4 * s;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
          const double v = out(i, j);
          if (std::abs(v) > bound) out(i, j) = std::copysign(bound + damp * (std::abs(v) - bound), v);
        }
        break;
      }
      case Scenario::PacketLoss: {
        const double start = 0.25 * s;
        const double cont = 0.9 * s;
        // 1-based anchor row; never the first row so a value exists to hold.
        const std::size_t anchor =
            std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(start * static_cast<double>(n))) + 1);
        bool lost = false;
        for (std::size_t i = 2; i <= n; ++i) {
          if (i == anchor && start > 0.0) {
            lost = true;
          } else {
            const double u = rng.uniform01();
            lost = lost ? u < cont : u < start;
          }
          if (lost) out(static_cast<Eigen::Index>(i - 1), j) = out(static_cast<Eigen::Index>(i - 2), j);
        }
        break;
      }
      default:
        break;
    }
  }
  return out;
}

}  // namespace robustcast
