#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace calib {

inline constexpr int kReportSchemaVersion = 1;

/// Output of an experiment runner. `config` embeds everything (seeds,
/// grids, sources) needed to replay the run.
struct ExperimentReport {
    std::string kind;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json cells = nlohmann::json::array();
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
    /// One row per cell; columns are the union of scalar cell keys.
    std::string to_csv() const;
};

/// Structural check of a report document; returns a list of problems.
std::vector<std::string> validate_report_schema(const nlohmann::json& report);

}  // namespace calib
