#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "calib/dump.hpp"
#include "calib/parallel.hpp"
#include "calib/recal.hpp"
#include "calib/report.hpp"
#include "calib/synthetic.hpp"

namespace calib {

struct DumpSource {
    std::filesystem::path path;
    DumpFormat format = DumpFormat::Csv;
    ScoreMode mode = ScoreMode::Probabilities;
};

using SyntheticSource = std::variant<SyntheticSpec1D, SyntheticSpecK>;
using DataSource = std::variant<SyntheticSpec1D, SyntheticSpecK, DumpSource>;

nlohmann::json to_json(const DataSource& source);
DataSource data_source_from_json(const nlohmann::json& j);

/// Draws n fresh samples from a synthetic source.
PredictionSet draw_synthetic(const SyntheticSource& spec, Rng& rng, std::size_t n);

enum class BinRule { Optimal, Fixed };

struct ConvergenceConfig {
    SyntheticSource spec = SyntheticSpec1D{};
    std::vector<std::size_t> n_grid{500, 1000, 2500, 5000, 10000, 25000, 50000};
    std::size_t seeds = 50;
    BinRule bin_rule = BinRule::Optimal;
    /// B (1-D) or B' per dimension (K-D) when bin_rule is Fixed.
    std::size_t fixed_bins = 10;
    std::uint64_t master_seed = 0;
    /// Monte Carlo size of the CE_K oracle (K-D specs only).
    std::size_t oracle_samples = 1000000;

    void validate() const;
};

/// For every (n, seed) cell: draw data, estimate the calibration error, and
/// record |oracle - estimate|. Summarises the per-n median and the log-log
/// slope of the medians.
ExperimentReport convergence_experiment(const ConvergenceConfig& cfg,
                                        Execution exec = Execution::Parallel);

struct KlGapConfig {
    DataSource source = SyntheticSpecK{};
    std::vector<double> alpha_grid = default_alpha_grid();
    std::size_t replicates = 10;
    /// Size of both the recalibration and the test split.
    std::size_t n_re = 1000;
    PbrConfig pbr;
    std::uint64_t master_seed = 0;
    /// Defaults to floor(n_re^(1/3)).
    std::optional<std::size_t> bins;

    void validate() const;
};

/// Trains PBR for every (replicate, alpha) cell and correlates KL(posterior ||
/// prior) with the gap between test and recalibration ECE.
ExperimentReport kl_gap_experiment(const KlGapConfig& cfg, Execution exec = Execution::Parallel);

enum class Method { Uncalibrated, Temperature, Pbr, PbrTotal };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct CompareConfig {
    DataSource source = SyntheticSpecK{};
    std::vector<Method> methods{Method::Uncalibrated, Method::Temperature, Method::Pbr,
                                Method::PbrTotal};
    std::size_t folds = 10;
    /// Explicit recalibration split size; otherwise recal_fraction of the data.
    std::optional<std::size_t> n_re;
    double recal_fraction = 0.1;
    /// Defaults to floor(n_te^(1/3)).
    std::optional<std::size_t> bins;
    PbrConfig pbr;
    std::vector<double> alpha_grid = default_alpha_grid();
    std::uint64_t master_seed = 0;

    void validate() const;
};

/// Fits every method on the recalibration split of each fold and scores it on
/// the test split (ECE, accuracy, Brier, cross-entropy).
ExperimentReport compare_methods(const CompareConfig& cfg, Execution exec = Execution::Parallel);

nlohmann::json to_json(const ConvergenceConfig& cfg);
nlohmann::json to_json(const KlGapConfig& cfg);
nlohmann::json to_json(const CompareConfig& cfg);
ConvergenceConfig convergence_config_from_json(const nlohmann::json& j);
KlGapConfig kl_gap_config_from_json(const nlohmann::json& j);
CompareConfig compare_config_from_json(const nlohmann::json& j);

/// Re-runs an experiment from a report's embedded kind and config.
ExperimentReport replay_report(const nlohmann::json& report, Execution exec = Execution::Parallel);

}  // namespace calib
