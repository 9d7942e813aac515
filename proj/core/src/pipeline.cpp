#include "robustcast/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

#include "robustcast/error.hpp"
#include "robustcast/external.hpp"
#include "robustcast/report_io.hpp"
#include "robustcast/rng.hpp"
#include "robustcast/stats.hpp"

namespace robustcast {

namespace {

using ojson = nlohmann::ordered_json;

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n' << std::flush;
}

std::string join_path(const std::string& dir, const std::string& file) {
  if (dir.empty()) return file;
  return dir.back() == '/' ? dir + file : dir + "/" + file;
}

std::string label_for(const ModelConfig& arch, const MethodConfig& method) {
  if (method.kind == MethodKind::Baseline) return arch.display_name();
  return arch.display_name() + "+" + method.display_name();
}

std::uint64_t bootstrap_seed(std::uint64_t eval_seed) { return derive_seed(eval_seed, tag_hash("bootstrap")); }

void attach_intervals(RobustnessReport& r, const RunConfig& c) {
  if (c.bootstrap == 0) return;
  const auto stats = default_window_statistics(r);
  r.intervals = bootstrap_windows(r, c.bootstrap, bootstrap_seed(r.signature.eval_seed), stats, 0.95, c.workers);
}

ojson seeds_json(const RunConfig& c, std::uint64_t eval_seed) {
  ojson j;
  j["master"] = c.master_seed;
  j["data"] = c.data_seed();
  j["model"] = c.model_seed();
  j["eval"] = eval_seed;
  return j;
}

ojson dataset_json(const PreparedData& d) {
  ojson j;
  j["name"] = d.name;
  j["rows"] = d.data->rows();
  j["channels"] = d.data->channels();
  j["continuous"] = d.data->schema.continuous_count();
  std::vector<std::string> targets;
  for (auto t : d.data->schema.targets) targets.push_back(d.data->schema.names[t]);
  j["targets"] = targets;
  j["split"] = {{"train_end", d.bounds.train_end}, {"val_end", d.bounds.val_end}};
  j["test_windows"] = d.test_starts.size();
  return j;
}

ojson built_json(const BuiltModel& b) {
  ojson j;
  j["architecture"] = b.architecture;
  j["method"] = b.method.display_name();
  j["selector"] = selector_name(b.selector);
  j["winner"] = b.winner;
  ojson cands = ojson::array();
  for (std::size_t i = 0; i < b.candidate_ids.size(); ++i) {
    ojson e;
    e["id"] = b.candidate_ids[i];
    if (!b.selection_scores.empty()) {
      const double s = b.selection_scores[i];
      if (std::isfinite(s))
        e["score"] = s;
      else
        e["score"] = nullptr;
    }
    cands.push_back(e);
  }
  j["candidates"] = cands;
  return j;
}

BuiltModel require_built(const std::optional<BuiltModel>& b, const ModelConfig& arch, const MethodConfig& m) {
  if (!b)
    throw ConfigError("method " + m.display_name() + " does not apply to model '" + arch.display_name() +
                      "' (augmentation needs a linear model)");
  return *b;
}

void write_config(const RunConfig& c, const std::string& out_dir) {
  write_file(join_path(out_dir, "config.json"), dump_json(to_json(c)));
}

std::string summary_line(const RobustnessReport& r) {
  std::ostringstream os;
  os << r.model_id << ": MSE_c=" << format_double(r.summary.mse_c);
  if (r.summary.degradation_defined) {
    os << " D_w=" << format_double(r.summary.d_w) << " MSE_w=" << format_double(r.summary.mse_w)
       << " worst=" << scenario_name(r.worst_scenario());
  } else {
    os << " (degradation undefined: MSE_c = 0)";
  }
  return os.str();
}

void check_degradation(const std::vector<RobustnessReport>& reports) {
  for (const auto& r : reports)
    if (!r.summary.degradation_defined)
      throw DegradationUndefinedError("clean MSE of model '" + r.model_id +
                                      "' is 0; degradation scores are undefined");
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

ChannelSchema resolve_schema(const DatasetConfig& d) {
  ChannelSchema s;
  s.names = d.channels.empty() ? read_csv_header(d.path, d.timestamp_column) : d.channels;
  const std::size_t m = s.names.size();
  s.continuous.assign(m, true);
  auto index_of = [&](const std::string& name, const char* what) {
    auto it = std::find(s.names.begin(), s.names.end(), name);
    if (it == s.names.end()) throw ConfigError(std::string(what) + " '" + name + "' is not a channel");
    return static_cast<std::size_t>(it - s.names.begin());
  };
  for (const auto& name : d.discrete) s.continuous[index_of(name, "discrete channel")] = false;
  if (d.all_targets) {
    for (std::size_t i = 0; i < m; ++i) s.targets.push_back(i);
  } else if (!d.target_indices.empty()) {
    for (auto t : d.target_indices) {
      if (t >= m)
        throw ConfigError("target index " + std::to_string(t) + " out of range (" + std::to_string(m) +
                          " channels)");
      s.targets.push_back(t);
    }
  } else {
    for (const auto& name : d.targets) s.targets.push_back(index_of(name, "target"));
  }
  s.validate();
  if (d.m_cont && *d.m_cont != s.continuous_count())
    throw ConfigError("dataset.m_cont is " + std::to_string(*d.m_cont) + " but the schema has " +
                      std::to_string(s.continuous_count()) + " continuous channels");
  return s;
}

PreparedData prepare_data(const RunConfig& c) {
  const ChannelSchema schema = resolve_schema(c.dataset);
  CsvOptions opts;
  opts.timestamp_column = c.dataset.timestamp_column;
  opts.min_rows = c.window.span();
  const TimeSeriesDataset raw = load_csv(c.dataset.path, schema, opts);

  PreparedData d;
  d.name = c.dataset.name;
  d.shape = c.window;
  d.bounds = chronological_split(raw.rows(), c.split, c.window);
  d.stats = fit_standardizer(raw, d.bounds);
  d.data = std::make_shared<const TimeSeriesDataset>(apply_standardizer(raw, d.stats));
  d.train_starts = enumerate_windows(d.bounds, Split::Train, c.window);
  d.val_starts = enumerate_windows(d.bounds, Split::Validation, c.window);
  d.test_starts = enumerate_windows(d.bounds, Split::Test, c.window);
  return d;
}

// ---------------------------------------------------------------------------
// Models

ModelFactory::ModelFactory(const RunConfig& c, const PreparedData& d)
    : cfg_(c),
      data_(d),
      val_(ValidationWindows::from_split(d.data, d.bounds, d.shape, c.val_windows,
                                         derive_seed(c.data_seed(), tag_hash("validation")))) {}

WindowSet ModelFactory::training_sample(const ModelConfig& arch, std::size_t member) const {
  if (arch.train_windows == 0) return data_.train_pool();
  auto starts = sample_window_starts(data_.train_starts, arch.train_windows,
                                     derive_seed(cfg_.model_seed(), tag_hash("train"), member));
  return data_.train_pool().with_starts(std::move(starts));
}

namespace {

std::vector<double> ridge_path(const ModelConfig& arch) {
  const std::size_t k = std::min(arch.candidate_cap, arch.ridge.size());
  return {arch.ridge.begin(), arch.ridge.begin() + static_cast<std::ptrdiff_t>(k)};
}

}  // namespace

std::vector<ForecasterPtr> ModelFactory::base_candidates(const ModelConfig& arch, std::size_t member) const {
  const auto& schema = data_.data->schema;
  std::vector<ForecasterPtr> out;
  switch (arch.kind) {
    case ModelKind::SeasonalNaive: {
      auto periods = arch.periods;
      std::sort(periods.begin(), periods.end());
      periods.erase(std::unique(periods.begin(), periods.end()), periods.end());
      for (auto p : periods) out.push_back(std::make_shared<SeasonalNaive>(p, data_.shape.horizon, schema.targets));
      break;
    }
    case ModelKind::Linear: {
      const auto lambdas = ridge_path(arch);
      const std::uint64_t seed = derive_seed(cfg_.model_seed(), tag_hash("train"), member);
      for (auto& m : fit_linear_path(training_sample(arch, member), lambdas, seed))
        out.push_back(std::make_shared<LinearModel>(std::move(m)));
      break;
    }
    case ModelKind::Constant: {
      Matrix y = Matrix::Constant(static_cast<Eigen::Index>(data_.shape.horizon),
                                  static_cast<Eigen::Index>(schema.target_count()), arch.constant);
      out.push_back(std::make_shared<ConstantForecaster>(std::move(y), arch.display_name()));
      break;
    }
    case ModelKind::External: {
      ExternalConfig ec;
      ec.command = arch.command;
      ec.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(arch.timeout_s * 1000.0)));
      ec.workers = arch.adapter_workers;
      ec.id = member == 0 ? arch.display_name() : arch.display_name() + "#" + std::to_string(member);
      WireShape ws{data_.shape.input, data_.shape.horizon, schema.channel_count(), schema.targets};
      out.push_back(std::make_shared<ExternalForecaster>(std::move(ec), std::move(ws)));
      break;
    }
  }
  return out;
}

std::optional<BuiltModel> ModelFactory::build(const ModelConfig& arch, const MethodConfig& method,
                                              SelectorMode mode) const {
  method.validate();
  std::vector<ForecasterPtr> cands;
  switch (method.kind) {
    case MethodKind::Baseline:
      cands = base_candidates(arch, 0);
      break;
    case MethodKind::Ensemble: {
      std::vector<std::vector<ForecasterPtr>> members;
      for (std::size_t i = 0; i < method.members; ++i) members.push_back(base_candidates(arch, i));
      for (std::size_t j = 0; j < members[0].size(); ++j) {
        std::vector<ForecasterPtr> group;
        for (auto& m : members) group.push_back(m[j]);
        cands.push_back(std::make_shared<EnsembleForecaster>(std::move(group), method.aggregator));
      }
      break;
    }
    case MethodKind::Smoothing: {
      const std::uint64_t seed = derive_seed(cfg_.model_seed(), tag_hash("smoothing"));
      for (auto& b : base_candidates(arch, 0))
        cands.push_back(std::make_shared<SmoothedForecaster>(b, method.sigma, method.queries, method.alpha, seed));
      break;
    }
    case MethodKind::Augmentation: {
      if (arch.kind != ModelKind::Linear) return std::nullopt;
      const auto lambdas = ridge_path(arch);
      const std::uint64_t seed = derive_seed(cfg_.model_seed(), tag_hash("augmentation"));
      for (auto& m : fit_fault_augmented_path(training_sample(arch, 0), lambdas, method.p_aug, method.pool, seed))
        cands.push_back(std::make_shared<LinearModel>(std::move(m)));
      break;
    }
  }

  BuiltModel b;
  b.architecture = arch.display_name();
  b.method = method;
  b.selector = mode;
  for (const auto& f : cands) b.candidate_ids.push_back(f->id());
  if (cands.size() == 1) {
    b.model = cands[0];
    b.winner = b.candidate_ids[0];
    return b;
  }
  std::vector<Candidate> list;
  for (const auto& f : cands) list.push_back({f->id(), f});
  const auto ec = make_eval_config(cfg_, derive_seed(cfg_.model_seed(), tag_hash("selection")), configured_rule(cfg_));
  auto sel = select_winner(list, val_, mode, ec);
  b.model = cands[sel.index];
  b.winner = sel.winner;
  b.selection_scores = std::move(sel.scores);
  return b;
}

// ---------------------------------------------------------------------------
// Evaluation helpers

ChannelRule configured_rule(const RunConfig& c) { return ChannelRule::parse(c.channel_rule, c.gamma_max); }

EvalConfig make_eval_config(const RunConfig& c, std::uint64_t eval_seed, const ChannelRule& rule) {
  EvalConfig ec;
  ec.K = c.K;
  ec.eval_seed = eval_seed;
  ec.scenarios = c.scenarios;
  ec.channel_rule = rule;
  ec.bootstrap_replicates = c.bootstrap;
  ec.workers = c.workers;
  ec.block_size = c.block_size;
  return ec;
}

std::optional<LogFit> attach_comparators(std::vector<RobustnessReport>& reports, const RunConfig& c,
                                         const std::vector<std::string>& architectures) {
  std::optional<std::size_t> ref;
  if (!c.reference.empty()) {
    auto it = std::find(architectures.begin(), architectures.end(), c.reference);
    if (it == architectures.end()) throw ConfigError("reference model '" + c.reference + "' was not evaluated");
    ref = static_cast<std::size_t>(it - architectures.begin());
  } else {
    for (std::size_t i = 0; i < c.models.size() && i < reports.size(); ++i)
      if (c.models[i].kind == ModelKind::SeasonalNaive) {
        ref = i;
        break;
      }
  }
  if (ref) {
    const RobustnessReport reference = reports[*ref];
    for (auto& r : reports) r.reference = reference_normalized(r, reference);
  }

  std::vector<RobustnessReport*> pool;
  std::set<double> distinct;
  for (auto& r : reports)
    if (r.summary.mse_c > 0.0 && r.summary.mpc > 0.0 && std::isfinite(r.summary.mpc)) {
      pool.push_back(&r);
      distinct.insert(r.summary.mse_c);
    }
  if (pool.size() < 2 || distinct.size() < 2) return std::nullopt;
  std::vector<const RobustnessReport*> cpool(pool.begin(), pool.end());
  const auto er = effective_robustness(cpool);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i]->effective_robustness = er.rho[i];
  return er.fit;
}

// ---------------------------------------------------------------------------
// validate

DatasetDiagnostics run_validate(const RunConfig& c, std::ostream* log) {
  c.validate();
  const PreparedData d = prepare_data(c);
  DatasetDiagnostics diag;
  diag.rows = d.data->rows();
  diag.channels = d.data->channels();
  diag.continuous = d.data->schema.continuous_count();
  for (auto t : d.data->schema.targets) diag.targets.push_back(d.data->schema.names[t]);
  diag.bounds = d.bounds;
  diag.train_windows = d.train_starts.size();
  diag.val_windows = d.val_starts.size();
  diag.test_windows = d.test_starts.size();

  // Touch every model configuration that can be checked without training.
  for (const auto& m : c.models) {
    if (m.kind == ModelKind::External && m.command.empty())
      throw ConfigError("model '" + m.display_name() + "': external models need a command");
  }
  c.method.validate();
  for (const auto& m : c.methods) m.validate();
  configured_rule(c).validate();

  std::ostringstream os;
  os << "dataset " << d.name << ": " << diag.rows << " rows, " << diag.channels << " channels ("
     << diag.continuous << " continuous), " << diag.targets.size() << " targets\n"
     << "split: train [0, " << d.bounds.train_end << "), val [" << d.bounds.train_end << ", " << d.bounds.val_end
     << "), test [" << d.bounds.val_end << ", " << d.bounds.rows << ")\n"
     << "windows: train " << diag.train_windows << ", val " << diag.val_windows << ", test " << diag.test_windows;
  say(log, os.str());
  return diag;
}

// ---------------------------------------------------------------------------
// evaluate

EvaluateResult run_evaluate(const RunConfig& c, const std::string& out_dir, std::ostream* log) {
  c.validate();
  const PreparedData d = prepare_data(c);
  const ModelFactory factory(c, d);
  const std::uint64_t eval_seed = c.resolved_eval_seed();
  const EvalConfig ec = make_eval_config(c, eval_seed, configured_rule(c));

  EvaluateResult res;
  std::vector<std::string> names;
  for (const auto& arch : c.models) {
    say(log, "building " + label_for(arch, c.method));
    BuiltModel b = require_built(factory.build(arch, c.method, c.selector), arch, c.method);
    say(log, "evaluating " + b.winner + " on " + std::to_string(c.K) + " windows");
    RobustnessReport r = evaluate(*b.model, d.test_pool(), ec, d.name);
    r.model_id = label_for(arch, c.method);
    attach_intervals(r, c);
    say(log, summary_line(r));
    names.push_back(arch.display_name());
    res.models.push_back(std::move(b));
    res.reports.push_back(std::move(r));
  }
  const auto fit = attach_comparators(res.reports, c, names);

  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["command"] = "evaluate";
  j["dataset"] = dataset_json(d);
  j["seeds"] = seeds_json(c, eval_seed);
  j["bootstrap"] = {{"replicates", c.bootstrap}, {"level", 0.95}, {"seed", bootstrap_seed(eval_seed)}};
  j["method"] = c.method.display_name();
  j["selector"] = selector_name(c.selector);
  ojson models = ojson::array();
  for (const auto& b : res.models) models.push_back(built_json(b));
  j["models"] = models;
  ojson reports = ojson::array();
  for (const auto& r : res.reports) reports.push_back(report_json(r));
  j["reports"] = reports;
  if (fit)
    j["effective_robustness_fit"] = {{"a", fit->a}, {"b", fit->b}};
  else
    j["effective_robustness_fit"] = nullptr;

  write_file(join_path(out_dir, "report.json"), dump_json(j));
  write_file(join_path(out_dir, "per_scenario.csv"), per_scenario_csv(res.reports));
  write_file(join_path(out_dir, "summary.csv"), summary_csv(res.reports));
  write_config(c, out_dir);
  say(log, "wrote " + join_path(out_dir, "report.json"));
  check_degradation(res.reports);
  return res;
}

// ---------------------------------------------------------------------------
// compare

CompareResult run_compare(const RunConfig& c, const std::string& out_dir, std::ostream* log) {
  c.validate();
  if (c.methods.empty()) throw ConfigError("compare needs at least one entry in methods");
  const PreparedData d = prepare_data(c);
  const ModelFactory factory(c, d);
  const std::uint64_t eval_seed = c.resolved_eval_seed();
  const EvalConfig ec = make_eval_config(c, eval_seed, configured_rule(c));

  CompareResult res;
  std::vector<RobustnessReport> reports;
  std::vector<std::vector<PairDelta>> by_method(c.methods.size());
  const MethodConfig baseline;
  for (const auto& arch : c.models) {
    say(log, "building " + arch.display_name());
    const BuiltModel base = require_built(factory.build(arch, baseline, c.selector), arch, baseline);
    RobustnessReport rb = evaluate(*base.model, d.test_pool(), ec, d.name);
    rb.model_id = label_for(arch, baseline);
    say(log, summary_line(rb));
    for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
      const auto& method = c.methods[mi];
      const auto built = factory.build(arch, method, c.selector);
      if (!built) {
        res.skipped.push_back(label_for(arch, method));
        say(log, "skipping " + label_for(arch, method) + ": method does not apply");
        continue;
      }
      RobustnessReport rv = evaluate(*built->model, d.test_pool(), ec, d.name);
      rv.model_id = label_for(arch, method);
      say(log, summary_line(rv));
      PairDelta delta = paired_deltas(rv, rb);
      by_method[mi].push_back(delta);
      res.rows.push_back({arch.display_name(), method.display_name(), delta});
      reports.push_back(std::move(rv));
    }
    reports.push_back(std::move(rb));
  }
  check_degradation(reports);

  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["command"] = "compare";
  j["convention"] = "delta = variant - baseline; tau = baseline mPC - variant mPC; negative favors the variant";
  j["dataset"] = dataset_json(d);
  j["seeds"] = seeds_json(c, eval_seed);
  ojson rows = ojson::array();
  for (const auto& row : res.rows) {
    ojson e;
    e["architecture"] = row.architecture;
    e["method"] = row.method;
    e["delta"] = delta_json(row.delta);
    rows.push_back(e);
  }
  j["rows"] = rows;

  std::ostringstream pcsv;
  pcsv << "method,field,point,lo,hi,level,replicates,pairs\n";
  ojson pairs = ojson::object();
  for (std::size_t mi = 0; mi < c.methods.size(); ++mi) {
    const auto& deltas = by_method[mi];
    if (deltas.size() < 2 || c.bootstrap == 0) continue;
    const auto iv = bootstrap_pairs(deltas, c.bootstrap, derive_seed(bootstrap_seed(eval_seed), tag_hash("pairs"), mi));
    const std::string name = c.methods[mi].display_name();
    ojson e = intervals_json(iv);
    e["pairs"] = deltas.size();
    pairs[name] = e;
    for (const auto& field : kPairDeltaFields) {
      const auto& v = iv.at(field);
      pcsv << csv_text(name) << ',' << field << ',' << format_double(v.point) << ',' << format_double(v.lo) << ','
           << format_double(v.hi) << ',' << format_double(v.level) << ',' << v.replicates << ',' << deltas.size()
           << '\n';
    }
  }
  j["pair_intervals"] = pairs;
  j["skipped"] = res.skipped;
  ojson rj = ojson::array();
  for (const auto& r : reports) rj.push_back(report_json(r, false));
  j["reports"] = rj;

  std::ostringstream dcsv;
  dcsv << "# delta = variant - baseline; tau = baseline mPC - variant mPC; negative favors variant\n";
  dcsv << "architecture,method,baseline,variant,d_w,mse_c,mse_w,d_mean,mpc,tau\n";
  for (const auto& row : res.rows) {
    const auto& dl = row.delta;
    dcsv << csv_text(row.architecture) << ',' << csv_text(row.method) << ',' << csv_text(dl.baseline_id) << ','
         << csv_text(dl.variant_id) << ',' << format_double(dl.d_w) << ',' << format_double(dl.mse_c) << ','
         << format_double(dl.mse_w) << ',' << format_double(dl.d_mean) << ',' << format_double(dl.mpc) << ','
         << format_double(dl.tau) << '\n';
  }

  write_file(join_path(out_dir, "compare.json"), dump_json(j));
  write_file(join_path(out_dir, "deltas.csv"), dcsv.str());
  write_file(join_path(out_dir, "pair_intervals.csv"), pcsv.str());
  write_config(c, out_dir);
  say(log, "wrote " + join_path(out_dir, "compare.json"));
  return res;
}

// ---------------------------------------------------------------------------
// sensitivity

SensitivityMode parse_sensitivity_mode(const std::string& s) {
  if (s == "eval-seed") return SensitivityMode::EvalSeed;
  if (s == "channel-rule") return SensitivityMode::ChannelRule;
  if (s == "selector") return SensitivityMode::Selector;
  throw ConfigError("unknown sensitivity mode '" + s + "' (eval-seed, channel-rule, selector)");
}

const char* sensitivity_mode_name(SensitivityMode m) {
  switch (m) {
    case SensitivityMode::EvalSeed: return "eval-seed";
    case SensitivityMode::ChannelRule: return "channel-rule";
    case SensitivityMode::Selector: return "selector";
  }
  return "?";
}

namespace {

// Rank correlation that treats two identical vectors as perfectly
// correlated even when ranks are constant. nullopt when undefined.
std::optional<double> rank_agreement(const std::vector<double>& a, const std::vector<double>& b) {
  if (a == b) return 1.0;
  try {
    return spearman(a, b);
  } catch (const Error&) {
    return std::nullopt;
  }
}

void update_min(std::optional<double>& acc, std::optional<double> v) {
  if (!v) return;
  acc = acc ? std::min(*acc, *v) : *v;
}

}  // namespace

SeedSensitivity summarize_seed_sensitivity(std::vector<std::uint64_t> seeds, std::vector<std::string> models,
                                           std::vector<std::vector<RobustnessReport>> reports) {
  const std::size_t R = seeds.size();
  const std::size_t M = models.size();
  if (R < 2) throw ConfigError("eval-seed sensitivity needs at least two seeds");
  if (reports.size() != R) throw ConfigError("one report row per seed expected");
  for (const auto& row : reports)
    if (row.size() != M) throw ConfigError("one report per model expected");

  SeedSensitivity out;
  out.seeds = std::move(seeds);
  out.models = std::move(models);

  double sum_dw = 0.0, sum_mw = 0.0, sum_mc = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 1; r < R; ++r)
    for (std::size_t m = 0; m < M; ++m) {
      const auto& a = reports[0][m].summary;
      const auto& b = reports[r][m].summary;
      const double dw = std::fabs(b.d_w - a.d_w);
      const double mw = std::fabs(b.mse_w - a.mse_w);
      const double mc = std::fabs(b.mse_c - a.mse_c);
      sum_dw += dw;
      sum_mw += mw;
      sum_mc += mc;
      out.max_shift_d_w = std::max(out.max_shift_d_w, dw);
      out.max_shift_mse_w = std::max(out.max_shift_mse_w, mw);
      out.max_shift_mse_c = std::max(out.max_shift_mse_c, mc);
      ++count;
    }
  if (count > 0) {
    out.mean_shift_d_w = sum_dw / static_cast<double>(count);
    out.mean_shift_mse_w = sum_mw / static_cast<double>(count);
    out.mean_shift_mse_c = sum_mc / static_cast<double>(count);
  }

  auto column = [&](std::size_t r, double ScoreSummary::*field) {
    std::vector<double> v;
    for (std::size_t m = 0; m < M; ++m) v.push_back(reports[r][m].summary.*field);
    return v;
  };
  if (M >= 2) {
    for (std::size_t r1 = 0; r1 < R; ++r1)
      for (std::size_t r2 = r1 + 1; r2 < R; ++r2) {
        update_min(out.min_spearman_d_w, rank_agreement(column(r1, &ScoreSummary::d_w), column(r2, &ScoreSummary::d_w)));
        update_min(out.min_spearman_mse_w,
                   rank_agreement(column(r1, &ScoreSummary::mse_w), column(r2, &ScoreSummary::mse_w)));
      }
  }
  std::optional<double> profile;
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t r1 = 0; r1 < R; ++r1)
      for (std::size_t r2 = r1 + 1; r2 < R; ++r2)
        if (reports[r1][m].summary.d_p.size() >= 2)
          update_min(profile, rank_agreement(reports[r1][m].summary.d_p, reports[r2][m].summary.d_p));
  out.min_spearman_profile = profile.value_or(1.0);

  out.min_exact_agreement = M;
  out.min_class_agreement = M;
  for (std::size_t r = 1; r < R; ++r) {
    std::size_t exact = 0, cls = 0;
    for (std::size_t m = 0; m < M; ++m) {
      const Scenario a = reports[0][m].worst_scenario();
      const Scenario b = reports[r][m].worst_scenario();
      exact += a == b ? 1 : 0;
      cls += scenario_class(a) == scenario_class(b) ? 1 : 0;
    }
    out.min_exact_agreement = std::min(out.min_exact_agreement, exact);
    out.min_class_agreement = std::min(out.min_class_agreement, cls);
  }
  out.reports = std::move(reports);
  return out;
}

namespace {

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::string worst_name(const RobustnessReport& r) {
  return r.summary.degradation_defined ? std::string(scenario_name(r.worst_scenario())) : std::string();
}

std::string worst_class(const RobustnessReport& r) {
  return r.summary.degradation_defined ? std::string(class_name(scenario_class(r.worst_scenario()))) : std::string();
}

void sensitivity_eval_seed(const RunConfig& c, const PreparedData& d, const ModelFactory& factory, ojson& j,
                           std::ostringstream& csv, std::ostream* log) {
  const auto seeds = c.resolved_eval_seeds();
  if (seeds.size() < 2) throw ConfigError("eval-seed sensitivity needs at least two seeds");
  std::vector<BuiltModel> built;
  std::vector<std::string> names;
  for (const auto& arch : c.models) {
    built.push_back(require_built(factory.build(arch, c.method, c.selector), arch, c.method));
    names.push_back(label_for(arch, c.method));
  }
  std::vector<std::vector<RobustnessReport>> reports;
  for (auto seed : seeds) {
    say(log, "evaluation seed " + std::to_string(seed));
    const EvalConfig ec = make_eval_config(c, seed, configured_rule(c));
    std::vector<RobustnessReport> row;
    for (std::size_t m = 0; m < built.size(); ++m) {
      RobustnessReport r = evaluate(*built[m].model, d.test_pool(), ec, d.name);
      r.model_id = names[m];
      say(log, "  " + summary_line(r));
      row.push_back(std::move(r));
    }
    check_degradation(row);
    reports.push_back(std::move(row));
  }
  const SeedSensitivity s = summarize_seed_sensitivity(seeds, names, reports);

  csv << "seed,model,mse_c,d_w,mse_w,worst_scenario,worst_class\n";
  ojson rows = ojson::array();
  for (std::size_t r = 0; r < seeds.size(); ++r)
    for (std::size_t m = 0; m < names.size(); ++m) {
      const auto& rep = s.reports[r][m];
      csv << seeds[r] << ',' << csv_text(names[m]) << ',' << format_double(rep.summary.mse_c) << ','
          << format_double(rep.summary.d_w) << ',' << format_double(rep.summary.mse_w) << ',' << worst_name(rep)
          << ',' << worst_class(rep) << '\n';
      ojson e;
      e["seed"] = seeds[r];
      e["model"] = names[m];
      e["summary"] = summary_json(rep.summary, rep.scenarios);
      rows.push_back(e);
    }
  j["seeds"] = seeds;
  j["rows"] = rows;
  ojson agg;
  agg["mean_shift_d_w"] = s.mean_shift_d_w;
  agg["max_shift_d_w"] = s.max_shift_d_w;
  agg["mean_shift_mse_w"] = s.mean_shift_mse_w;
  agg["max_shift_mse_w"] = s.max_shift_mse_w;
  agg["mean_shift_mse_c"] = s.mean_shift_mse_c;
  agg["max_shift_mse_c"] = s.max_shift_mse_c;
  agg["min_spearman_d_w"] = optional_json(s.min_spearman_d_w);
  agg["min_spearman_mse_w"] = optional_json(s.min_spearman_mse_w);
  agg["min_spearman_profile"] = s.min_spearman_profile;
  agg["min_exact_agreement"] = std::to_string(s.min_exact_agreement) + "/" + std::to_string(names.size());
  agg["min_class_agreement"] = std::to_string(s.min_class_agreement) + "/" + std::to_string(names.size());
  j["aggregate"] = agg;
  say(log, "max |shift D_w| " + format_double(s.max_shift_d_w) + ", worst-scenario agreement " +
               std::to_string(s.min_exact_agreement) + "/" + std::to_string(names.size()));
}

void sensitivity_channel_rule(const RunConfig& c, const PreparedData& d, const ModelFactory& factory, ojson& j,
                              std::ostringstream& csv, std::ostream* log) {
  std::vector<ChannelRule> rules{ChannelRule::coupled(c.gamma_max)};
  for (double q : c.fixed_fractions) rules.push_back(ChannelRule::fixed(q, c.gamma_max));
  const std::size_t m_cont = d.data->schema.continuous_count();
  const std::uint64_t seed = c.resolved_eval_seed();

  csv << "model,rule,k,mse_c,d_w,mse_w,worst_scenario,worst_class\n";
  ojson rows = ojson::array();
  for (const auto& arch : c.models) {
    const BuiltModel b = require_built(factory.build(arch, c.method, c.selector), arch, c.method);
    const std::string name = label_for(arch, c.method);
    for (const auto& rule : rules) {
      RobustnessReport r = evaluate(*b.model, d.test_pool(), make_eval_config(c, seed, rule), d.name);
      r.model_id = name;
      r.require_degradation();
      // Channel count at full severity: the cap for the coupled rule, the
      // fixed count otherwise.
      const std::size_t k = channel_count(rule, 1.0, m_cont);
      say(log, rule.to_string() + " (k=" + std::to_string(k) + ") " + summary_line(r));
      csv << csv_text(name) << ',' << rule.to_string() << ',' << k << ',' << format_double(r.summary.mse_c) << ','
          << format_double(r.summary.d_w) << ',' << format_double(r.summary.mse_w) << ',' << worst_name(r) << ','
          << worst_class(r) << '\n';
      ojson e;
      e["model"] = name;
      e["rule"] = rule.to_string();
      e["k"] = k;
      e["summary"] = summary_json(r.summary, r.scenarios);
      rows.push_back(e);
    }
  }
  j["eval_seed"] = seed;
  j["m_cont"] = m_cont;
  j["rows"] = rows;
}

void sensitivity_selector(const RunConfig& c, const PreparedData& d, const ModelFactory& factory, ojson& j,
                          std::ostringstream& csv, std::ostream* log) {
  std::vector<MethodConfig> methods = c.methods.empty() ? std::vector<MethodConfig>{c.method} : c.methods;
  const std::uint64_t seed = c.resolved_eval_seed();
  const EvalConfig ec = make_eval_config(c, seed, configured_rule(c));
  const MethodConfig baseline;

  csv << "model,method,selector,winner,changed,mse_c,d_w,mse_w,delta_d_w,delta_mse_c,delta_mse_w,tau\n";
  ojson rows = ojson::array();
  for (const auto& arch : c.models) {
    const BuiltModel base = require_built(factory.build(arch, baseline, SelectorMode::CleanValidation), arch, baseline);
    RobustnessReport rb = evaluate(*base.model, d.test_pool(), ec, d.name);
    rb.model_id = label_for(arch, baseline);
    rb.require_degradation();
    for (const auto& method : methods) {
      std::string clean_winner;
      for (SelectorMode mode : {SelectorMode::CleanValidation, SelectorMode::WorstScenarioPerturbedValidation}) {
        const auto built = factory.build(arch, method, mode);
        if (!built) break;
        RobustnessReport rv = evaluate(*built->model, d.test_pool(), ec, d.name);
        rv.model_id = label_for(arch, method);
        const PairDelta delta = paired_deltas(rv, rb);
        if (mode == SelectorMode::CleanValidation) clean_winner = built->winner;
        const bool changed = built->winner != clean_winner;
        say(log, rv.model_id + " [" + selector_name(mode) + "] winner " + built->winner);
        csv << csv_text(rv.model_id) << ',' << csv_text(method.display_name()) << ',' << selector_name(mode) << ','
            << csv_text(built->winner) << ',' << (changed ? 1 : 0) << ',' << format_double(rv.summary.mse_c) << ','
            << format_double(rv.summary.d_w) << ',' << format_double(rv.summary.mse_w) << ','
            << format_double(delta.d_w) << ',' << format_double(delta.mse_c) << ',' << format_double(delta.mse_w)
            << ',' << format_double(delta.tau) << '\n';
        ojson e;
        e["model"] = rv.model_id;
        e["method"] = method.display_name();
        e["selection"] = built_json(*built);
        e["changed"] = changed;
        e["summary"] = summary_json(rv.summary, rv.scenarios);
        e["delta"] = delta_json(delta);
        rows.push_back(e);
      }
    }
  }
  j["eval_seed"] = seed;
  j["rows"] = rows;
}

}  // namespace

void run_sensitivity(const RunConfig& c, SensitivityMode mode, const std::string& out_dir, std::ostream* log) {
  c.validate();
  const PreparedData d = prepare_data(c);
  const ModelFactory factory(c, d);

  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["command"] = "sensitivity";
  j["mode"] = sensitivity_mode_name(mode);
  j["dataset"] = dataset_json(d);
  std::ostringstream csv;
  switch (mode) {
    case SensitivityMode::EvalSeed:
      sensitivity_eval_seed(c, d, factory, j, csv, log);
      break;
    case SensitivityMode::ChannelRule:
      sensitivity_channel_rule(c, d, factory, j, csv, log);
      break;
    case SensitivityMode::Selector:
      sensitivity_selector(c, d, factory, j, csv, log);
      break;
  }
  write_file(join_path(out_dir, "sensitivity.json"), dump_json(j));
  write_file(join_path(out_dir, std::string("sensitivity_") + sensitivity_mode_name(mode) + ".csv"), csv.str());
  write_config(c, out_dir);
  say(log, "wrote " + join_path(out_dir, "sensitivity.json"));
}

}  // namespace robustcast
