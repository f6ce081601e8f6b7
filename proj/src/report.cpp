#include "calib/report.hpp"

#include <cstdio>
#include <set>
#include <sstream>

namespace calib {

nlohmann::json ExperimentReport::to_json() const
{
    return {{"schema", kReportSchemaVersion},
            {"kind", kind},
            {"config", config},
            {"cells", cells},
            {"summary", summary},
            {"notes", notes}};
}

std::string ExperimentReport::to_csv() const
{
    std::vector<std::string> columns;
    std::set<std::string> seen;
    for (const auto& cell : cells)
        for (auto it = cell.begin(); it != cell.end(); ++it)
            if (it.value().is_primitive() && seen.insert(it.key()).second)
                columns.push_back(it.key());

    std::ostringstream os;
    for (std::size_t c = 0; c < columns.size(); ++c)
        os << (c ? "," : "") << columns[c];
    os << '\n';
    for (const auto& cell : cells) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (c)
                os << ',';
            if (!cell.contains(columns[c]) || cell[columns[c]].is_null())
                continue;
            const auto& v = cell[columns[c]];
            if (v.is_number_float()) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
                os << buf;
            } else if (v.is_string()) {
                os << v.get<std::string>();
            } else {
                os << v.dump();
            }
        }
        os << '\n';
    }
    return os.str();
}

std::vector<std::string> validate_report_schema(const nlohmann::json& report)
{
    std::vector<std::string> problems;
    if (!report.is_object()) {
        problems.push_back("report is not a JSON object");
        return problems;
    }
    if (!report.contains("schema") || !report["schema"].is_number_integer() ||
        report["schema"].get<int>() != kReportSchemaVersion)
        problems.push_back("missing or unsupported 'schema' (expected 1)");

    static const std::set<std::string> kinds{"convergence", "klgap", "compare"};
    if (!report.contains("kind") || !report["kind"].is_string() ||
        !kinds.contains(report["kind"].get<std::string>()))
        problems.push_back("'kind' must be one of convergence, klgap, compare");
    if (!report.contains("config") || !report["config"].is_object())
        problems.push_back("'config' must be an object");
    if (!report.contains("cells") || !report["cells"].is_array()) {
        problems.push_back("'cells' must be an array");
    } else {
        for (std::size_t i = 0; i < report["cells"].size(); ++i)
            if (!report["cells"][i].is_object())
                problems.push_back("cell " + std::to_string(i) + " is not an object");
    }
    if (!report.contains("summary") || !report["summary"].is_object())
        problems.push_back("'summary' must be an object");
    if (!report.contains("notes") || !report["notes"].is_array()) {
        problems.push_back("'notes' must be an array");
    } else {
        for (const auto& n : report["notes"])
            if (!n.is_string())
                problems.push_back("notes must be strings");
    }
    if (!problems.empty())
        return problems;

    const auto kind = report["kind"].get<std::string>();
    const auto& summary = report["summary"];
    auto require = [&](const nlohmann::json& obj, const char* key, const char* where) {
        if (!obj.contains(key))
            problems.push_back(std::string(where) + " lacks '" + key + "'");
    };
    if (kind == "convergence") {
        require(summary, "per_n", "summary");
        require(summary, "slope", "summary");
        require(summary, "reference_rate", "summary");
        for (const auto& cell : report["cells"]) {
            require(cell, "n", "convergence cell");
            require(cell, "deviation", "convergence cell");
        }
    } else if (kind == "klgap") {
        require(summary, "replicates", "summary");
        require(summary, "pooled", "summary");
        for (const auto& cell : report["cells"]) {
            require(cell, "alpha", "klgap cell");
            require(cell, "kl", "klgap cell");
            require(cell, "gap", "klgap cell");
        }
    } else if (kind == "compare") {
        require(summary, "methods", "summary");
        require(summary, "best", "summary");
        if (summary.contains("methods") && summary["methods"].is_object()) {
            for (auto it = summary["methods"].begin(); it != summary["methods"].end(); ++it)
                for (const char* metric : {"ece", "accuracy", "brier", "cross_entropy"}) {
                    if (!it.value().contains(metric) || !it.value()[metric].contains("mean") ||
                        !it.value()[metric].contains("sd"))
                        problems.push_back("method '" + it.key() + "' lacks " + metric +
                                           " mean/sd");
                }
        }
        for (const auto& cell : report["cells"]) {
            require(cell, "fold", "compare cell");
            require(cell, "method", "compare cell");
            require(cell, "ece", "compare cell");
        }
    }
    return problems;
}

}  // namespace calib
