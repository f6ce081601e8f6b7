#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "calib/core.hpp"
#include "calib/rng.hpp"

namespace calib {

enum class RecalFamily { Temperature, VectorScale, Affine };

std::string to_string(RecalFamily family);
RecalFamily recal_family_from_string(const std::string& name);
std::size_t parameter_count(RecalFamily family, std::size_t num_classes);

/// Parametric map on the simplex: softmax(scale(x) + offset) where x are the
/// log-scores of a prediction (logits when available, else floored log
/// probabilities).
///
/// Parameter layout of v:
///   Temperature  [ln t]                    z = x / t
///   VectorScale  [w_0..w_{K-1}, b_0..]     z_k = w_k x_k + b_k
///   Affine       [W row-major (K*K), b]    z = W x + b
class RecalMap {
public:
    RecalMap(RecalFamily family, std::size_t num_classes, std::vector<double> params);

    static RecalMap identity(RecalFamily family, std::size_t num_classes);
    static RecalMap temperature(double t, std::size_t num_classes = 2);

    RecalFamily family() const { return family_; }
    std::size_t num_classes() const { return num_classes_; }
    std::span<const double> params() const { return params_; }
    /// Temperature family only.
    double temperature() const;

    /// Recalibrated scores z for one row of log-scores.
    void scores(std::span<const double> log_scores, std::span<double> z) const;
    std::vector<double> apply_log_scores(std::span<const double> log_scores) const;

private:
    RecalFamily family_;
    std::size_t num_classes_;
    std::vector<double> params_;
};

/// Floors probabilities at kProbabilityFloor before taking logs.
std::vector<double> apply_recal(const RecalMap& map, std::span<const double> probs);

/// Whole dataset through the map (logits used when the set carries them).
PredictionSet recalibrate(const RecalMap& map, const PredictionSet& data);

/// Row-major n x K log-scores used by the recalibration maps.
std::vector<double> log_scores(const PredictionSet& data);

double brier_score(const PredictionSet& data);
double softmax_cross_entropy(const PredictionSet& data);
double top_label_accuracy(const PredictionSet& data);

/// Mean-field Gaussian over the flattened map parameters.
struct GaussianPosterior {
    std::vector<double> mu;
    std::vector<double> log_sigma;

    std::size_t dim() const { return mu.size(); }
    std::vector<double> variance() const;
    std::vector<double> sample(Rng& rng) const;

    /// Prior centred on the identity map with unit variance.
    static GaussianPosterior identity_prior(RecalFamily family, std::size_t num_classes);
};

double kl_divergence(const GaussianPosterior& q, const GaussianPosterior& p);

enum class PbrObjective { BrierOnly, BrierPlusLoss };

std::string to_string(PbrObjective objective);
PbrObjective pbr_objective_from_string(const std::string& name);

struct PbrConfig {
    RecalFamily family = RecalFamily::Temperature;
    double alpha = 1.0;
    std::size_t mc_samples = 8;
    std::size_t final_samples = 256;
    double step_size = 0.05;
    /// Per-iteration geometric decay of the step size.
    double step_decay = 0.998;
    std::size_t max_iters = 800;
    std::size_t patience = 50;
    double min_improvement = 1e-8;
    /// Initial posterior spread relative to the prior.
    double init_log_sigma_offset = -2.0;
    std::uint64_t seed = 0;
    PbrObjective objective = PbrObjective::BrierOnly;
    /// Identity-map prior when empty.
    std::optional<GaussianPosterior> prior;

    void validate() const;
    GaussianPosterior resolved_prior(std::size_t num_classes) const;
};

/// Loss of a single point map on the data (Brier, plus cross-entropy for
/// BrierPlusLoss) and its gradient with respect to the map parameters.
struct PointLoss {
    double value = 0.0;
    std::vector<double> gradient;
};
PointLoss point_loss(RecalFamily family, std::span<const double> params,
                     const PredictionSet& data, PbrObjective objective, bool with_gradient);

struct PbrGradient {
    double objective = 0.0;
    std::vector<double> grad_mu;
    std::vector<double> grad_log_sigma;
};

/// Monte Carlo objective: mean over J draws v = mu + sigma * xi of the data
/// loss, plus alpha * KL(posterior || prior) / n. Consumes J*d normals from
/// `rng`; pbr_gradient consumes the same draws in the same order.
double pbr_objective(const GaussianPosterior& posterior, const GaussianPosterior& prior,
                     const PredictionSet& data, const PbrConfig& cfg, Rng& rng);

/// Reparameterised gradient of pbr_objective over (mu, log_sigma).
PbrGradient pbr_gradient(const GaussianPosterior& posterior, const GaussianPosterior& prior,
                         const PredictionSet& data, const PbrConfig& cfg, Rng& rng);

struct PbrFit {
    GaussianPosterior posterior;
    GaussianPosterior prior;
    RecalMap map;
    PbrConfig config;
    double final_objective = 0.0;
    double kl = 0.0;
    std::size_t iterations = 0;
};

/// Adam on (mu, log_sigma) with full-batch reparameterised gradients; the
/// returned point map is the mean of `final_samples` posterior draws.
PbrFit train_pbr(const PredictionSet& data, const PbrConfig& cfg);

struct AlphaSelection {
    std::vector<double> alphas;
    std::vector<PbrFit> fits;
    std::vector<double> recal_ece;
    std::size_t best = 0;
};

/// Trains one fit per alpha and keeps the one with the lowest top-label ECE on
/// the recalibration data itself (bins = floor(n^(1/3))). Fits run in parallel.
AlphaSelection train_pbr_alpha_grid(const PredictionSet& data, const PbrConfig& cfg,
                                    std::span<const double> alphas);
AlphaSelection train_pbr_alpha_grid_serial(const PredictionSet& data, const PbrConfig& cfg,
                                           std::span<const double> alphas);

inline const std::vector<double>& default_alpha_grid()
{
    static const std::vector<double> grid{0.0, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0};
    return grid;
}

struct TemperatureFit {
    RecalMap map = RecalMap::temperature(1.0);
    double nll = 0.0;
    std::optional<std::string> warning;
};

/// Golden-section search on ln t in [-5, 5] minimising cross-entropy.
TemperatureFit temperature_scaling_fit(const PredictionSet& data, double tolerance = 1e-6);

nlohmann::json to_json(const RecalMap& map);
nlohmann::json to_json(const GaussianPosterior& posterior);
nlohmann::json to_json(const PbrConfig& cfg);
nlohmann::json to_json(const PbrFit& fit);
RecalMap recal_map_from_json(const nlohmann::json& j);
PbrConfig pbr_config_from_json(const nlohmann::json& j);

}  // namespace calib
