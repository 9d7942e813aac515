#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "robustcast/score.hpp"

namespace robustcast {

inline constexpr int kReportSchemaVersion = 1;

/// Shortest decimal that round-trips; "nan" and "inf" spelled out.
std::string format_double(double v);
/// CSV field, quoted when it contains a comma, quote or newline.
std::string csv_text(const std::string& s);

nlohmann::ordered_json signature_json(const EvalSignature& s);
nlohmann::ordered_json summary_json(const ScoreSummary& s, std::span<const Scenario> scenarios);
nlohmann::ordered_json intervals_json(const IntervalMap& m);
/// Full report. Per-window losses are included when `losses` is set.
nlohmann::ordered_json report_json(const RobustnessReport& r, bool losses = true);
nlohmann::ordered_json delta_json(const PairDelta& d);

/// Rows: model, scenario, class, mse_p, d_p and interval columns.
std::string per_scenario_csv(std::span<const RobustnessReport> reports);
/// One row per report: MSE_c, D_w, MSE_w, D_mean, mPC, rPC, worst scenario,
/// comparators and <stat>_lo / <stat>_hi columns.
std::string summary_csv(std::span<const RobustnessReport> reports);

/// Writes the file, creating parent directories. Throws ConfigError.
void write_file(const std::string& path, const std::string& content);
std::string dump_json(const nlohmann::ordered_json& j);

}  // namespace robustcast
