#include "calib/dump.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "calib/error.hpp"

namespace calib {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string_view rest(line);
    while (true) {
        const auto pos = rest.find(',');
        out.push_back(trim(rest.substr(0, pos)));
        if (pos == std::string_view::npos)
            break;
        rest.remove_prefix(pos + 1);
    }
    return out;
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what)
{
    throw ValidationError("line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& token, std::size_t line)
{
    double v = 0.0;
    const auto* end = token.data() + token.size();
    const auto res = std::from_chars(token.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
        fail_line(line, "cannot parse number '" + token + "'");
    return v;
}

int parse_label(const std::string& token, std::size_t line)
{
    int v = 0;
    const auto* end = token.data() + token.size();
    const auto res = std::from_chars(token.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
        fail_line(line, "cannot parse label '" + token + "'");
    return v;
}

struct RawRows {
    std::size_t num_classes = 0;
    std::vector<double> values;
    std::vector<int> labels;
};

void check_label(int label, std::size_t k, std::size_t line)
{
    if (label < 0 || static_cast<std::size_t>(label) >= k)
        fail_line(line, "label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
}

RawRows read_csv(std::istream& in, ScoreMode mode)
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty())
            break;
    }
    if (trim(line).empty())
        throw ValidationError("dump is empty (missing header)");
    const auto header = split_csv(line);
    if (header.size() < 3 || header.back() != "label")
        fail_line(line_no, "header must be p0,...,p{K-1},label or z0,...,z{K-1},label");
    const char prefix = mode == ScoreMode::Probabilities ? 'p' : 'z';
    RawRows rows;
    rows.num_classes = header.size() - 1;
    for (std::size_t k = 0; k < rows.num_classes; ++k)
        if (header[k] != std::string(1, prefix) + std::to_string(k))
            fail_line(line_no, "expected column '" + std::string(1, prefix) + std::to_string(k) +
                                   "' but found '" + header[k] + "'");

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto cols = split_csv(line);
        if (cols.size() != rows.num_classes + 1)
            fail_line(line_no, "expected " + std::to_string(rows.num_classes + 1) + " columns, found " +
                                   std::to_string(cols.size()));
        for (std::size_t k = 0; k < rows.num_classes; ++k)
            rows.values.push_back(parse_double(cols[k], line_no));
        const int label = parse_label(cols.back(), line_no);
        check_label(label, rows.num_classes, line_no);
        rows.labels.push_back(label);
    }
    return rows;
}

RawRows read_jsonl(std::istream& in, ScoreMode mode)
{
    const char* key = mode == ScoreMode::Probabilities ? "probs" : "logits";
    RawRows rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail_line(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains(key) || !j[key].is_array())
            fail_line(line_no, std::string("missing array '") + key + "'");
        if (!j.contains("label") || !j["label"].is_number_integer())
            fail_line(line_no, "missing integer 'label'");
        const auto& arr = j[key];
        if (rows.num_classes == 0)
            rows.num_classes = arr.size();
        if (arr.size() != rows.num_classes)
            fail_line(line_no, "class count " + std::to_string(arr.size()) + " differs from " +
                                   std::to_string(rows.num_classes));
        for (const auto& v : arr) {
            if (!v.is_number())
                fail_line(line_no, "non-numeric score");
            rows.values.push_back(v.get<double>());
        }
        const int label = j["label"].get<int>();
        check_label(label, rows.num_classes, line_no);
        rows.labels.push_back(label);
    }
    if (rows.labels.empty())
        throw ValidationError("dump contains no rows");
    return rows;
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string to_string(DumpFormat format)
{
    return format == DumpFormat::Csv ? "csv" : "jsonl";
}

std::string to_string(ScoreMode mode)
{
    return mode == ScoreMode::Probabilities ? "probs" : "logits";
}

DumpFormat dump_format_from_string(const std::string& name)
{
    if (name == "csv")
        return DumpFormat::Csv;
    if (name == "jsonl" || name == "json-lines" || name == "ndjson")
        return DumpFormat::JsonLines;
    throw ValidationError("unknown dump format '" + name + "'");
}

ScoreMode score_mode_from_string(const std::string& name)
{
    if (name == "probs" || name == "probabilities")
        return ScoreMode::Probabilities;
    if (name == "logits")
        return ScoreMode::Logits;
    throw ValidationError("unknown score mode '" + name + "'");
}

DumpFormat guess_dump_format(const std::filesystem::path& path)
{
    const auto ext = path.extension().string();
    return (ext == ".jsonl" || ext == ".ndjson") ? DumpFormat::JsonLines : DumpFormat::Csv;
}

PredictionSet load_dump(const std::filesystem::path& path, DumpFormat format, ScoreMode mode)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open dump '" + path.string() + "'");
    auto rows = format == DumpFormat::Csv ? read_csv(in, mode) : read_jsonl(in, mode);
    if (rows.labels.empty())
        throw ValidationError("dump '" + path.string() + "' contains no rows");
    if (mode == ScoreMode::Logits)
        return PredictionSet::from_logits(std::move(rows.values), std::move(rows.labels), rows.num_classes);
    const auto violations = validate_prediction_set(rows.values, rows.labels, rows.num_classes);
    if (!violations.empty() && violations.front().row) {
        // header is line 1 for CSV; report file lines
        const std::size_t offset = format == DumpFormat::Csv ? 2 : 1;
        throw ValidationError("line " + std::to_string(*violations.front().row + offset) + ": " +
                              violations.front().message);
    }
    return PredictionSet::from_probabilities(std::move(rows.values), std::move(rows.labels),
                                             rows.num_classes);
}

void write_dump(const PredictionSet& data, const std::filesystem::path& path, DumpFormat format,
                ScoreMode mode)
{
    std::ofstream out(path);
    if (!out)
        throw ValidationError("cannot write dump '" + path.string() + "'");
    const std::size_t k = data.num_classes();
    auto value = [&](std::size_t m, std::size_t c) {
        if (mode == ScoreMode::Probabilities)
            return data.row(m)[c];
        if (data.has_logits())
            return data.logit_row(m)[c];
        return std::log(std::max(data.row(m)[c], kProbabilityFloor));
    };
    if (format == DumpFormat::Csv) {
        const char prefix = mode == ScoreMode::Probabilities ? 'p' : 'z';
        for (std::size_t c = 0; c < k; ++c)
            out << prefix << c << ',';
        out << "label\n";
        for (std::size_t m = 0; m < data.size(); ++m) {
            for (std::size_t c = 0; c < k; ++c)
                out << format_double(value(m, c)) << ',';
            out << data.label(m) << '\n';
        }
    } else {
        const char* key = mode == ScoreMode::Probabilities ? "probs" : "logits";
        for (std::size_t m = 0; m < data.size(); ++m) {
            out << "{\"" << key << "\":[";
            for (std::size_t c = 0; c < k; ++c)
                out << (c ? "," : "") << format_double(value(m, c));
            out << "],\"label\":" << data.label(m) << "}\n";
        }
    }
    if (!out)
        throw ValidationError("failed while writing '" + path.string() + "'");
}

}  // namespace calib
