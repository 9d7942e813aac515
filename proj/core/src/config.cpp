#include "robustcast/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "robustcast/error.hpp"
#include "robustcast/rng.hpp"

namespace robustcast {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items())
    if (!ok.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

template <class T>
T get_or(const json& j, const char* key, const T& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::size_t get_count(const json& j, const char* key, std::size_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::size_t>(v.get<std::int64_t>());
  throw ConfigError(where + "." + key + " must be a non-negative integer");
}

std::uint64_t get_seed(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(where + " must be a non-negative integer seed");
}

std::vector<Scenario> parse_scenarios(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be a list of scenario names");
  std::vector<Scenario> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ConfigError(where + " must be a list of scenario names");
    out.push_back(parse_scenario(v.get<std::string>()));
  }
  return out;
}

json scenario_names(const std::vector<Scenario>& v) {
  json out = json::array();
  for (Scenario s : v) out.push_back(std::string(scenario_name(s)));
  return out;
}

ModelConfig parse_model(const json& j, const std::string& where) {
  check_keys(j, where,
             {"kind", "name", "periods", "ridge", "candidate_cap", "train_windows", "value", "command", "timeout_s",
              "adapter_workers"});
  if (!j.contains("kind")) throw ConfigError(where + ".kind is required");
  ModelConfig m;
  m.kind = parse_model_kind(get_or<std::string>(j, "kind", "", where));
  m.name = get_or<std::string>(j, "name", "", where);
  m.periods = get_or(j, "periods", m.periods, where);
  m.ridge = get_or(j, "ridge", m.ridge, where);
  m.candidate_cap = get_count(j, "candidate_cap", m.candidate_cap, where);
  m.train_windows = get_count(j, "train_windows", m.train_windows, where);
  m.constant = get_or(j, "value", m.constant, where);
  m.command = get_or(j, "command", m.command, where);
  m.timeout_s = get_or(j, "timeout_s", m.timeout_s, where);
  m.adapter_workers = get_count(j, "adapter_workers", m.adapter_workers, where);
  return m;
}

MethodConfig parse_method(const json& j, const std::string& where) {
  check_keys(j, where, {"kind", "members", "aggregator", "sigma", "queries", "alpha", "p_aug", "pool"});
  MethodConfig m;
  m.kind = parse_method_kind(get_or<std::string>(j, "kind", "baseline", where));
  m.members = get_count(j, "members", m.members, where);
  m.aggregator = parse_aggregator(get_or<std::string>(j, "aggregator", "mean", where));
  m.sigma = get_or(j, "sigma", m.sigma, where);
  m.queries = get_count(j, "queries", m.queries, where);
  m.alpha = get_or(j, "alpha", m.alpha, where);
  m.p_aug = get_or(j, "p_aug", m.p_aug, where);
  if (j.contains("pool")) m.pool = parse_scenarios(j["pool"], where + ".pool");
  return m;
}

nlohmann::ordered_json model_json(const ModelConfig& m) {
  nlohmann::ordered_json j;
  j["kind"] = model_kind_name(m.kind);
  j["name"] = m.display_name();
  switch (m.kind) {
    case ModelKind::SeasonalNaive:
      j["periods"] = m.periods;
      break;
    case ModelKind::Linear:
      j["ridge"] = m.ridge;
      j["candidate_cap"] = m.candidate_cap;
      j["train_windows"] = m.train_windows;
      break;
    case ModelKind::Constant:
      j["value"] = m.constant;
      break;
    case ModelKind::External:
      j["command"] = m.command;
      j["timeout_s"] = m.timeout_s;
      j["adapter_workers"] = m.adapter_workers;
      break;
  }
  return j;
}

nlohmann::ordered_json method_json(const MethodConfig& m) {
  nlohmann::ordered_json j;
  j["kind"] = method_kind_name(m.kind);
  switch (m.kind) {
    case MethodKind::Baseline:
      break;
    case MethodKind::Ensemble:
      j["members"] = m.members;
      j["aggregator"] = aggregator_name(m.aggregator);
      break;
    case MethodKind::Smoothing:
      j["sigma"] = m.sigma;
      j["queries"] = m.queries;
      j["alpha"] = m.alpha;
      break;
    case MethodKind::Augmentation:
      j["p_aug"] = m.p_aug;
      j["pool"] = scenario_names(m.pool);
      break;
  }
  return j;
}

}  // namespace

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::SeasonalNaive: return "seasonal_naive";
    case ModelKind::Linear: return "linear";
    case ModelKind::Constant: return "constant";
    case ModelKind::External: return "external";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  for (ModelKind k : {ModelKind::SeasonalNaive, ModelKind::Linear, ModelKind::Constant, ModelKind::External})
    if (s == model_kind_name(k)) return k;
  throw ConfigError("unknown model kind '" + s + "'");
}

std::string ModelConfig::display_name() const { return name.empty() ? model_kind_name(kind) : name; }

const char* method_kind_name(MethodKind k) {
  switch (k) {
    case MethodKind::Baseline: return "baseline";
    case MethodKind::Ensemble: return "ensemble";
    case MethodKind::Smoothing: return "smoothing";
    case MethodKind::Augmentation: return "augmentation";
  }
  return "?";
}

MethodKind parse_method_kind(const std::string& s) {
  for (MethodKind k : {MethodKind::Baseline, MethodKind::Ensemble, MethodKind::Smoothing, MethodKind::Augmentation})
    if (s == method_kind_name(k)) return k;
  throw ConfigError("unknown method kind '" + s + "'");
}

std::string MethodConfig::display_name() const { return method_kind_name(kind); }

void MethodConfig::validate() const {
  switch (kind) {
    case MethodKind::Baseline:
      break;
    case MethodKind::Ensemble:
      if (members < 2) throw ConfigError("ensemble needs at least 2 members");
      break;
    case MethodKind::Smoothing:
      if (!(sigma >= 0.0)) throw ConfigError("smoothing sigma must be >= 0");
      if (queries < 1) throw ConfigError("smoothing needs at least one query");
      if (!(alpha >= 0.0 && alpha < 0.5)) throw ConfigError("smoothing alpha must lie in [0, 0.5)");
      break;
    case MethodKind::Augmentation:
      if (!(p_aug >= 0.0 && p_aug <= 1.0)) throw ConfigError("p_aug must lie in [0, 1]");
      check_augmentation_pool(pool);
      break;
  }
}

std::uint64_t RunConfig::data_seed() const { return role_seed(master_seed, "data"); }
std::uint64_t RunConfig::model_seed() const { return role_seed(master_seed, "model"); }
std::uint64_t RunConfig::resolved_eval_seed() const { return eval_seed ? *eval_seed : role_seed(master_seed, "eval"); }

std::vector<std::uint64_t> RunConfig::resolved_eval_seeds() const {
  if (!eval_seeds.empty()) return eval_seeds;
  return {resolved_eval_seed(), 0, 1, 2, 3};
}

void RunConfig::validate() const {
  if (dataset.path.empty()) throw ConfigError("dataset.path is required");
  const int target_forms = (dataset.targets.empty() ? 0 : 1) + (dataset.target_indices.empty() ? 0 : 1) +
                           (dataset.all_targets ? 1 : 0);
  if (target_forms != 1) throw ConfigError("dataset.targets must list at least one channel (names, indices or \"all\")");
  if (window.input < 2) throw ConfigError("window.input must be at least 2");
  if (window.horizon < 1) throw ConfigError("window.horizon must be at least 1");
  if (K < 1) throw ConfigError("eval.K must be at least 1");
  if (bootstrap < 1) throw ConfigError("eval.bootstrap must be at least 1");
  if (block_size < 1) throw ConfigError("eval.block_size must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  canonical_scenario_order(scenarios);
  ChannelRule::parse(channel_rule, gamma_max);
  for (double q : fixed_fractions) ChannelRule::fixed(q, gamma_max);
  if (models.empty()) throw ConfigError("at least one model is required");
  std::set<std::string> names;
  for (const auto& m : models) {
    if (!names.insert(m.display_name()).second)
      throw ConfigError("duplicate model name '" + m.display_name() + "'; set distinct names");
    switch (m.kind) {
      case ModelKind::SeasonalNaive:
        if (m.periods.empty()) throw ConfigError("seasonal_naive needs at least one period");
        for (auto p : m.periods)
          if (p < 1 || p > window.input) throw ConfigError("seasonal period " + std::to_string(p) + " outside [1, n]");
        break;
      case ModelKind::Linear:
        if (m.ridge.empty()) throw ConfigError("linear needs at least one ridge value");
        for (double l : m.ridge)
          if (!(l >= 0.0)) throw ConfigError("ridge values must be >= 0");
        if (m.candidate_cap < 1) throw ConfigError("candidate_cap must be at least 1");
        break;
      case ModelKind::Constant:
        break;
      case ModelKind::External:
        if (m.command.empty()) throw ConfigError("external model needs a command");
        if (!(m.timeout_s > 0.0)) throw ConfigError("timeout_s must be positive");
        if (m.adapter_workers < 1) throw ConfigError("adapter_workers must be at least 1");
        break;
    }
  }
  method.validate();
  for (const auto& m : methods) m.validate();
  if (!reference.empty() && !names.count(reference))
    throw ConfigError("reference '" + reference + "' is not a configured model name");
}

RunConfig parse_run_config(const json& j) {
  check_keys(j, "config",
             {"dataset", "window", "split", "eval", "seeds", "model", "models", "method", "methods", "selection",
              "reference", "sensitivity", "output"});
  RunConfig c;
  if (!j.contains("dataset")) throw ConfigError("config.dataset is required");
  {
    const auto& d = j["dataset"];
    check_keys(d, "dataset", {"name", "path", "timestamp_column", "channels", "discrete", "targets", "m_cont"});
    c.dataset.name = get_or<std::string>(d, "name", c.dataset.name, "dataset");
    c.dataset.path = get_or<std::string>(d, "path", "", "dataset");
    c.dataset.timestamp_column = get_or(d, "timestamp_column", false, "dataset");
    c.dataset.channels = get_or(d, "channels", c.dataset.channels, "dataset");
    c.dataset.discrete = get_or(d, "discrete", c.dataset.discrete, "dataset");
    if (d.contains("targets")) {
      const auto& t = d["targets"];
      if (t.is_string() && t.get<std::string>() == "all") {
        c.dataset.all_targets = true;
      } else if (t.is_array() && !t.empty() && t[0].is_string()) {
        c.dataset.targets = get_or(d, "targets", c.dataset.targets, "dataset");
      } else if (t.is_array()) {
        for (const auto& v : t) {
          if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
            throw ConfigError("dataset.targets: expected channel names, non-negative indices or \"all\"");
          c.dataset.target_indices.push_back(v.get<std::size_t>());
        }
      } else {
        throw ConfigError("dataset.targets: expected channel names, non-negative indices or \"all\"");
      }
    }
    if (d.contains("m_cont")) c.dataset.m_cont = get_count(d, "m_cont", 0, "dataset");
  }
  if (j.contains("window")) {
    const auto& w = j["window"];
    check_keys(w, "window", {"input", "horizon"});
    c.window.input = get_count(w, "input", c.window.input, "window");
    c.window.horizon = get_count(w, "horizon", c.window.horizon, "window");
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    check_keys(s, "split", {"train", "val", "test"});
    c.split.train = get_or(s, "train", c.split.train, "split");
    c.split.val = get_or(s, "val", c.split.val, "split");
    c.split.test = get_or(s, "test", c.split.test, "split");
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, "eval", {"K", "scenarios", "channel_rule", "gamma_max", "bootstrap", "block_size", "workers"});
    c.K = get_count(e, "K", c.K, "eval");
    if (e.contains("scenarios")) c.scenarios = parse_scenarios(e["scenarios"], "eval.scenarios");
    c.channel_rule = get_or(e, "channel_rule", c.channel_rule, "eval");
    c.gamma_max = get_or(e, "gamma_max", c.gamma_max, "eval");
    c.bootstrap = get_count(e, "bootstrap", c.bootstrap, "eval");
    c.block_size = get_count(e, "block_size", c.block_size, "eval");
    c.workers = get_count(e, "workers", c.workers, "eval");
  }
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    check_keys(s, "seeds", {"master", "eval", "eval_seeds"});
    if (s.contains("master")) c.master_seed = get_seed(s["master"], "seeds.master");
    if (s.contains("eval") && !s["eval"].is_null()) c.eval_seed = get_seed(s["eval"], "seeds.eval");
    if (s.contains("eval_seeds")) {
      if (!s["eval_seeds"].is_array()) throw ConfigError("seeds.eval_seeds must be a list");
      for (const auto& v : s["eval_seeds"]) c.eval_seeds.push_back(get_seed(v, "seeds.eval_seeds"));
    }
  }
  if (j.contains("model") && j.contains("models")) throw ConfigError("give either 'model' or 'models', not both");
  if (j.contains("model")) c.models = {parse_model(j["model"], "model")};
  if (j.contains("models")) {
    if (!j["models"].is_array() || j["models"].empty()) throw ConfigError("models must be a non-empty list");
    c.models.clear();
    for (std::size_t i = 0; i < j["models"].size(); ++i)
      c.models.push_back(parse_model(j["models"][i], "models[" + std::to_string(i) + "]"));
  }
  if (j.contains("method")) c.method = parse_method(j["method"], "method");
  if (j.contains("methods")) {
    if (!j["methods"].is_array()) throw ConfigError("methods must be a list");
    for (std::size_t i = 0; i < j["methods"].size(); ++i)
      c.methods.push_back(parse_method(j["methods"][i], "methods[" + std::to_string(i) + "]"));
  }
  if (j.contains("selection")) {
    const auto& s = j["selection"];
    check_keys(s, "selection", {"selector", "val_windows"});
    c.selector = parse_selector(get_or<std::string>(s, "selector", "clean", "selection"));
    c.val_windows = get_count(s, "val_windows", c.val_windows, "selection");
  }
  c.reference = get_or<std::string>(j, "reference", "", "config");
  if (j.contains("sensitivity")) {
    const auto& s = j["sensitivity"];
    check_keys(s, "sensitivity", {"fixed_fractions"});
    c.fixed_fractions = get_or(s, "fixed_fractions", c.fixed_fractions, "sensitivity");
  }
  c.output = get_or<std::string>(j, "output", c.output, "config");
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j = json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
  RunConfig c = parse_run_config(j);
  // Paths inside the config are relative to the config file.
  namespace fs = std::filesystem;
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  if (fs::path(c.dataset.path).is_relative()) c.dataset.path = (base / c.dataset.path).lexically_normal().string();
  return c;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  auto& d = j["dataset"];
  d["name"] = c.dataset.name;
  d["path"] = c.dataset.path;
  d["timestamp_column"] = c.dataset.timestamp_column;
  d["channels"] = c.dataset.channels;
  d["discrete"] = c.dataset.discrete;
  if (c.dataset.all_targets)
    d["targets"] = "all";
  else if (!c.dataset.target_indices.empty())
    d["targets"] = c.dataset.target_indices;
  else
    d["targets"] = c.dataset.targets;
  if (c.dataset.m_cont) d["m_cont"] = *c.dataset.m_cont;
  j["window"] = {{"input", c.window.input}, {"horizon", c.window.horizon}};
  j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
  auto& e = j["eval"];
  e["K"] = c.K;
  e["scenarios"] = scenario_names(canonical_scenario_order(c.scenarios));
  e["channel_rule"] = c.channel_rule;
  e["gamma_max"] = c.gamma_max;
  e["bootstrap"] = c.bootstrap;
  e["block_size"] = c.block_size;
  e["workers"] = c.workers;
  auto& s = j["seeds"];
  s["master"] = c.master_seed;
  if (c.eval_seed) s["eval"] = *c.eval_seed;
  if (!c.eval_seeds.empty()) s["eval_seeds"] = c.eval_seeds;
  j["models"] = nlohmann::ordered_json::array();
  for (const auto& m : c.models) j["models"].push_back(model_json(m));
  j["method"] = method_json(c.method);
  j["methods"] = nlohmann::ordered_json::array();
  for (const auto& m : c.methods) j["methods"].push_back(method_json(m));
  j["selection"] = {{"selector", selector_name(c.selector)}, {"val_windows", c.val_windows}};
  j["reference"] = c.reference;
  j["sensitivity"] = {{"fixed_fractions", c.fixed_fractions}};
  j["output"] = c.output;
  return j;
}

}  // namespace robustcast
