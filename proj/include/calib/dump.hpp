#pragma once

#include <filesystem>
#include <string>

#include "calib/core.hpp"

namespace calib {

enum class DumpFormat { Csv, JsonLines };
enum class ScoreMode { Probabilities, Logits };

std::string to_string(DumpFormat format);
std::string to_string(ScoreMode mode);
DumpFormat dump_format_from_string(const std::string& name);
ScoreMode score_mode_from_string(const std::string& name);
/// .jsonl / .ndjson are JSON-lines, everything else CSV.
DumpFormat guess_dump_format(const std::filesystem::path& path);

/// Loads a prediction dump. CSV needs the header `p0,...,p{K-1},label`
/// (probabilities) or `z0,...,z{K-1},label` (logits); JSON-lines rows carry
/// {"probs": [...], "label": y} or {"logits": [...], "label": y}. Errors name
/// the offending line.
PredictionSet load_dump(const std::filesystem::path& path, DumpFormat format, ScoreMode mode);

/// Writes probabilities, or logits (the stored logits when present, else log
/// probabilities floored at kProbabilityFloor).
void write_dump(const PredictionSet& data, const std::filesystem::path& path, DumpFormat format,
                ScoreMode mode);

}  // namespace calib
