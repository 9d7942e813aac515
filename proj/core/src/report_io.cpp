#include "robustcast/report_io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "robustcast/error.hpp"

namespace robustcast {

namespace {

using ojson = nlohmann::ordered_json;

ojson number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

std::string csv_cell(double v) { return std::isnan(v) ? "" : format_double(v); }

const Interval* find_interval(const IntervalMap& m, const std::string& name) {
  const auto it = m.find(name);
  return it == m.end() ? nullptr : &it->second;
}

void append_bounds(std::string& row, const IntervalMap& m, const std::string& name) {
  const Interval* iv = find_interval(m, name);
  row += ',';
  if (iv) row += csv_cell(iv->lo);
  row += ',';
  if (iv) row += csv_cell(iv->hi);
}

const std::vector<std::string> kSummaryStats = {"mse_c", "d_w", "mse_w", "d_mean", "mpc", "rpc"};

}  // namespace

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ojson signature_json(const EvalSignature& s) {
  ojson j;
  j["dataset"] = s.dataset;
  j["input"] = s.shape.input;
  j["horizon"] = s.shape.horizon;
  j["K"] = s.K;
  j["eval_seed"] = s.eval_seed;
  j["scenarios"] = ojson::array();
  for (Scenario sc : s.scenarios) j["scenarios"].push_back(std::string(scenario_name(sc)));
  j["channel_rule"] = s.channel_rule.to_string();
  j["gamma_max"] = s.channel_rule.gamma_max;
  return j;
}

ojson summary_json(const ScoreSummary& s, std::span<const Scenario> scenarios) {
  ojson j;
  j["degradation_defined"] = s.degradation_defined;
  j["mse_c"] = number_or_null(s.mse_c);
  j["worst_scenario"] = std::string(scenario_name(scenarios[s.worst]));
  j["worst_class"] = std::string(class_name(scenario_class(scenarios[s.worst])));
  j["d_w"] = number_or_null(s.d_w);
  j["mse_w"] = number_or_null(s.mse_w);
  j["d_mean"] = number_or_null(s.d_mean);
  j["mpc"] = number_or_null(s.mpc);
  j["rpc"] = number_or_null(s.rpc);
  ojson per = ojson::array();
  for (std::size_t p = 0; p < scenarios.size(); ++p) {
    ojson e;
    e["scenario"] = std::string(scenario_name(scenarios[p]));
    e["mse_p"] = number_or_null(s.mse_p[p]);
    e["d_p"] = number_or_null(s.d_p[p]);
    per.push_back(std::move(e));
  }
  j["per_scenario"] = std::move(per);
  return j;
}

ojson intervals_json(const IntervalMap& m) {
  ojson j = ojson::object();
  for (const auto& [name, iv] : m) {
    ojson e;
    e["point"] = number_or_null(iv.point);
    e["lo"] = number_or_null(iv.lo);
    e["hi"] = number_or_null(iv.hi);
    e["level"] = iv.level;
    e["replicates"] = iv.replicates;
    j[name] = std::move(e);
  }
  return j;
}

ojson report_json(const RobustnessReport& r, bool losses) {
  ojson j;
  j["model"] = r.model_id;
  j["signature"] = signature_json(r.signature);
  j["summary"] = summary_json(r.summary, r.scenarios);
  if (r.reference) {
    ojson ref;
    ref["reference"] = r.reference->reference_id;
    ref["mce"] = number_or_null(r.reference->mce);
    ref["relative_mce"] = number_or_null(r.reference->relative_mce);
    ref["mce_flagged"] = ojson::array();
    for (Scenario s : r.reference->mce_flagged) ref["mce_flagged"].push_back(std::string(scenario_name(s)));
    ref["relative_flagged"] = ojson::array();
    for (Scenario s : r.reference->relative_flagged)
      ref["relative_flagged"].push_back(std::string(scenario_name(s)));
    j["reference_normalized"] = std::move(ref);
  }
  if (r.effective_robustness) j["effective_robustness"] = number_or_null(*r.effective_robustness);
  j["intervals"] = intervals_json(r.intervals);
  if (losses) {
    ojson w;
    w["starts"] = r.window_starts;
    w["clean"] = r.clean_losses;
    ojson per = ojson::object();
    for (std::size_t p = 0; p < r.scenarios.size(); ++p)
      per[std::string(scenario_name(r.scenarios[p]))] = r.perturbed_losses[p];
    w["perturbed"] = std::move(per);
    j["window_losses"] = std::move(w);
  }
  return j;
}

ojson delta_json(const PairDelta& d) {
  ojson j;
  j["baseline"] = d.baseline_id;
  j["variant"] = d.variant_id;
  j["d_w"] = d.d_w;
  j["mse_c"] = d.mse_c;
  j["mse_w"] = d.mse_w;
  j["d_mean"] = d.d_mean;
  j["mpc"] = d.mpc;
  j["tau"] = d.tau;
  return j;
}

std::string per_scenario_csv(std::span<const RobustnessReport> reports) {
  std::string out = "model,scenario,class,mse_p,d_p,mse_p_lo,mse_p_hi,d_p_lo,d_p_hi\n";
  for (const auto& r : reports) {
    for (std::size_t p = 0; p < r.scenarios.size(); ++p) {
      const std::string name(scenario_name(r.scenarios[p]));
      std::string row = csv_text(r.model_id) + "," + name + "," + std::string(class_name(scenario_class(r.scenarios[p]))) +
                        "," + csv_cell(r.summary.mse_p[p]) + "," + csv_cell(r.summary.d_p[p]);
      append_bounds(row, r.intervals, "mse_p:" + name);
      append_bounds(row, r.intervals, "d_p:" + name);
      out += row + "\n";
    }
  }
  return out;
}

std::string summary_csv(std::span<const RobustnessReport> reports) {
  std::string out = "model,mse_c,d_w,mse_w,d_mean,mpc,rpc,worst_scenario,worst_class,mce,relative_mce,rho";
  for (const auto& s : kSummaryStats) out += "," + s + "_lo," + s + "_hi";
  out += "\n";
  const double nan = std::nan("");
  for (const auto& r : reports) {
    const auto& s = r.summary;
    const Scenario w = r.scenarios[s.worst];
    std::string row = csv_text(r.model_id) + "," + csv_cell(s.mse_c) + "," + csv_cell(s.d_w) + "," + csv_cell(s.mse_w) + "," +
                      csv_cell(s.d_mean) + "," + csv_cell(s.mpc) + "," + csv_cell(s.rpc) + "," +
                      std::string(scenario_name(w)) + "," + std::string(class_name(scenario_class(w))) + "," +
                      csv_cell(r.reference ? r.reference->mce : nan) + "," +
                      csv_cell(r.reference ? r.reference->relative_mce : nan) + "," +
                      csv_cell(r.effective_robustness ? *r.effective_robustness : nan);
    for (const auto& st : kSummaryStats) append_bounds(row, r.intervals, st);
    out += row + "\n";
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

std::string dump_json(const ojson& j) { return j.dump(2) + "\n"; }

}  // namespace robustcast
