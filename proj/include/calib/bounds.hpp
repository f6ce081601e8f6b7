#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "calib/synthetic.hpp"

namespace calib {

enum class BoundKind { TotalBiasTest, PacBiasTrain, CeKBias, GenRecal, BiasRecal, JointAccTce };

std::string to_string(BoundKind kind);
BoundKind bound_kind_from_string(const std::string& name);

/// Scalars feeding a bound. `bins` is the total cell count (B, or B'^K for
/// CeKBias). An empty `lambda` selects the closed-form optimum.
struct BoundInputs {
    std::size_t n = 1;
    std::size_t bins = 1;
    double lipschitz = 0.0;
    double epsilon = 0.05;
    std::optional<double> lambda;
    double kl = 0.0;
    std::size_t num_classes = 2;
    /// Sharper exponential-moment coefficients available when the predictions
    /// have a density (lambda^2/2n instead of 2 lambda^2/n, lambda^2/n instead
    /// of 4 lambda^2/n).
    bool assume_density = false;

    void validate(BoundKind kind) const;
};

struct BoundCertificate {
    BoundKind kind = BoundKind::TotalBiasTest;
    BoundInputs inputs;
    double value = 0.0;
    double binning_term = 0.0;
    double statistical_term = 0.0;
    /// JointAccTce only: empirical loss + empirical Brier.
    double empirical_term = 0.0;
    double lambda_used = 0.0;
};

/// (1+L)/B + (B ln2 + ln(1/eps) + 2 lambda^2/n) / lambda.
BoundCertificate total_bias_bound_test(const BoundInputs& in);
/// (1+L)/B + (KL + B ln2 + ln(1/eps) + 2 lambda^2/n) / lambda.
BoundCertificate pac_bias_bound_train(const BoundInputs& in);
/// K(1+L)/B^(1/K) + (KL + B K ln2 + ln(1/eps) + K^2 lambda^2/(2n)) / lambda.
BoundCertificate ce_k_bias_bound(const BoundInputs& in);
/// (KL + B ln2 + ln(1/eps) + 4 lambda^2/n) / lambda; no binning term.
BoundCertificate gen_recal_bound(const BoundInputs& in);
/// Same shape as pac_bias_bound_train, over the recalibration posterior.
BoundCertificate bias_recal_bound(const BoundInputs& in);
/// loss + Brier + 2(1+L)/B + (3 KL + 2B ln2 + 65 lambda^2/(8n) + 3 ln(2/eps)) / lambda.
BoundCertificate joint_acc_tce_bound(const BoundInputs& in, double empirical_loss,
                                     double empirical_brier);

BoundCertificate evaluate_bound(BoundKind kind, const BoundInputs& in, double empirical_loss = 0.0,
                                double empirical_brier = 0.0);

/// Every bound's lambda dependence is a/lambda + c*lambda.
struct LambdaTerms {
    double a = 0.0;
    double c = 0.0;
};
LambdaTerms lambda_terms(BoundKind kind, const BoundInputs& in);

/// sqrt(a/c) clamped to [1e-6, 1e12].
double optimize_lambda(BoundKind kind, const BoundInputs& in);

/// sqrt(B n), the rate-setting choice.
double heuristic_lambda(const BoundInputs& in);

/// KL(N(mu_q, diag var_q) || N(mu_p, diag var_p)).
double kl_gaussian_diag(std::span<const double> mu_q, std::span<const double> var_q,
                        std::span<const double> mu_p, std::span<const double> var_p);

struct CoverageResult {
    double coverage = 0.0;
    double certificate = 0.0;
    double oracle_tce = 0.0;
    std::vector<double> deviations;
};

/// Fraction of `trials` synthetic datasets whose |TCE - ECE| is within the
/// certificate. Trials run in parallel on per-trial streams.
CoverageResult mc_validate_bound(BoundKind kind, const SyntheticSpec1D& spec, std::size_t bins,
                                 double epsilon, std::size_t trials,
                                 std::optional<double> certificate_override = std::nullopt);
CoverageResult mc_validate_bound_serial(BoundKind kind, const SyntheticSpec1D& spec,
                                        std::size_t bins, double epsilon, std::size_t trials,
                                        std::optional<double> certificate_override = std::nullopt);

double coverage_fraction(std::span<const double> deviations, double certificate);

nlohmann::json to_json(const BoundInputs& in);
nlohmann::json to_json(const BoundCertificate& cert);

}  // namespace calib
