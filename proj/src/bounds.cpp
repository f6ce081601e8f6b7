#include "calib/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "calib/ece.hpp"
#include "calib/error.hpp"

namespace calib {

namespace {

constexpr double kLambdaMin = 1e-6;
constexpr double kLambdaMax = 1e12;

double ln_inv(double eps) { return -std::log(eps); }

// Exponential-moment coefficient c in c*lambda (statistical term a/lambda + c lambda).
double moment_coefficient(BoundKind kind, const BoundInputs& in)
{
    const double n = static_cast<double>(in.n);
    const double k = static_cast<double>(in.num_classes);
    switch (kind) {
    case BoundKind::TotalBiasTest:
    case BoundKind::PacBiasTrain:
    case BoundKind::BiasRecal:
        return in.assume_density ? 1.0 / (2.0 * n) : 2.0 / n;
    case BoundKind::GenRecal:
        return in.assume_density ? 1.0 / n : 4.0 / n;
    case BoundKind::CeKBias:
        return k * k / (2.0 * n);
    case BoundKind::JointAccTce:
        return 65.0 / (8.0 * n);
    }
    return 0.0;
}

double binning_term(BoundKind kind, const BoundInputs& in)
{
    const double b = static_cast<double>(in.bins);
    switch (kind) {
    case BoundKind::TotalBiasTest:
    case BoundKind::PacBiasTrain:
    case BoundKind::BiasRecal:
        return (1.0 + in.lipschitz) / b;
    case BoundKind::CeKBias: {
        const double k = static_cast<double>(in.num_classes);
        return k * (1.0 + in.lipschitz) / std::pow(b, 1.0 / k);
    }
    case BoundKind::GenRecal:
        return 0.0;
    case BoundKind::JointAccTce:
        return 2.0 * (1.0 + in.lipschitz) / b;
    }
    return 0.0;
}

BoundCertificate make_certificate(BoundKind kind, const BoundInputs& in, double empirical)
{
    in.validate(kind);
    BoundCertificate cert;
    cert.kind = kind;
    cert.inputs = in;
    cert.lambda_used = in.lambda ? *in.lambda : optimize_lambda(kind, in);
    const auto terms = lambda_terms(kind, in);
    cert.binning_term = binning_term(kind, in);
    cert.statistical_term = terms.a / cert.lambda_used + terms.c * cert.lambda_used;
    cert.empirical_term = empirical;
    cert.value = cert.empirical_term + cert.binning_term + cert.statistical_term;
    return cert;
}

}  // namespace

std::string to_string(BoundKind kind)
{
    switch (kind) {
    case BoundKind::TotalBiasTest:
        return "total_bias_test";
    case BoundKind::PacBiasTrain:
        return "pac_bias_train";
    case BoundKind::CeKBias:
        return "ce_k_bias";
    case BoundKind::GenRecal:
        return "gen_recal";
    case BoundKind::BiasRecal:
        return "bias_recal";
    case BoundKind::JointAccTce:
        return "joint_acc_tce";
    }
    return "unknown";
}

BoundKind bound_kind_from_string(const std::string& name)
{
    for (auto kind : {BoundKind::TotalBiasTest, BoundKind::PacBiasTrain, BoundKind::CeKBias,
                      BoundKind::GenRecal, BoundKind::BiasRecal, BoundKind::JointAccTce})
        if (to_string(kind) == name)
            return kind;
    throw ValidationError("unknown bound kind '" + name + "'");
}

void BoundInputs::validate(BoundKind kind) const
{
    if (n < 1)
        throw ValidationError("bound needs n >= 1");
    if (bins < 1)
        throw ValidationError("bound needs B >= 1");
    if (!(lipschitz >= 0.0) || !std::isfinite(lipschitz))
        throw ValidationError("Lipschitz constant must be finite and >= 0");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ValidationError("confidence level epsilon must lie in (0,1)");
    if (lambda && !(*lambda > 0.0 && std::isfinite(*lambda)))
        throw ValidationError("lambda must be positive");
    if (!(kl >= 0.0) || !std::isfinite(kl))
        throw ValidationError("KL term must be finite and >= 0");
    if (kind == BoundKind::CeKBias && num_classes < 2)
        throw ValidationError("all-class bound needs K >= 2");
    if (kind == BoundKind::TotalBiasTest && kl != 0.0)
        throw ValidationError("the test-set bias bound has no KL term; pass kl = 0");
}

LambdaTerms lambda_terms(BoundKind kind, const BoundInputs& in)
{
    const double b = static_cast<double>(in.bins);
    const double ln2 = std::numbers::ln2;
    LambdaTerms t;
    t.c = moment_coefficient(kind, in);
    switch (kind) {
    case BoundKind::TotalBiasTest:
        t.a = b * ln2 + ln_inv(in.epsilon);
        break;
    case BoundKind::PacBiasTrain:
    case BoundKind::BiasRecal:
    case BoundKind::GenRecal:
        t.a = in.kl + b * ln2 + ln_inv(in.epsilon);
        break;
    case BoundKind::CeKBias:
        t.a = in.kl + b * static_cast<double>(in.num_classes) * ln2 + ln_inv(in.epsilon);
        break;
    case BoundKind::JointAccTce:
        t.a = 3.0 * in.kl + 2.0 * b * ln2 + 3.0 * std::log(2.0 / in.epsilon);
        break;
    }
    return t;
}

double optimize_lambda(BoundKind kind, const BoundInputs& in)
{
    const auto t = lambda_terms(kind, in);
    return std::clamp(std::sqrt(t.a / t.c), kLambdaMin, kLambdaMax);
}

double heuristic_lambda(const BoundInputs& in)
{
    return std::sqrt(static_cast<double>(in.bins) * static_cast<double>(in.n));
}

BoundCertificate total_bias_bound_test(const BoundInputs& in)
{
    return make_certificate(BoundKind::TotalBiasTest, in, 0.0);
}

BoundCertificate pac_bias_bound_train(const BoundInputs& in)
{
    return make_certificate(BoundKind::PacBiasTrain, in, 0.0);
}

BoundCertificate ce_k_bias_bound(const BoundInputs& in)
{
    return make_certificate(BoundKind::CeKBias, in, 0.0);
}

BoundCertificate gen_recal_bound(const BoundInputs& in)
{
    return make_certificate(BoundKind::GenRecal, in, 0.0);
}

BoundCertificate bias_recal_bound(const BoundInputs& in)
{
    return make_certificate(BoundKind::BiasRecal, in, 0.0);
}

BoundCertificate joint_acc_tce_bound(const BoundInputs& in, double empirical_loss,
                                     double empirical_brier)
{
    if (!(empirical_loss >= 0.0 && empirical_loss <= 1.0))
        throw ValidationError("empirical loss must lie in [0,1]");
    if (!(empirical_brier >= 0.0) || !std::isfinite(empirical_brier))
        throw ValidationError("empirical Brier score must be finite and >= 0");
    return make_certificate(BoundKind::JointAccTce, in, empirical_loss + empirical_brier);
}

BoundCertificate evaluate_bound(BoundKind kind, const BoundInputs& in, double empirical_loss,
                                double empirical_brier)
{
    if (kind == BoundKind::JointAccTce)
        return joint_acc_tce_bound(in, empirical_loss, empirical_brier);
    return make_certificate(kind, in, 0.0);
}

double kl_gaussian_diag(std::span<const double> mu_q, std::span<const double> var_q,
                        std::span<const double> mu_p, std::span<const double> var_p)
{
    const std::size_t d = mu_q.size();
    if (var_q.size() != d || mu_p.size() != d || var_p.size() != d)
        throw ValidationError("Gaussian KL needs equal-length parameter vectors");
    double kl = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (!(var_q[i] > 0.0) || !(var_p[i] > 0.0))
            throw ValidationError("Gaussian variances must be positive");
        const double diff = mu_p[i] - mu_q[i];
        kl += var_q[i] / var_p[i] + diff * diff / var_p[i] - 1.0 + std::log(var_p[i] / var_q[i]);
    }
    return 0.5 * kl;
}

double coverage_fraction(std::span<const double> deviations, double certificate)
{
    if (deviations.empty())
        return 0.0;
    std::size_t covered = 0;
    for (double d : deviations)
        if (d <= certificate)
            ++covered;
    return static_cast<double>(covered) / static_cast<double>(deviations.size());
}

namespace {

struct CoveragePlan {
    double certificate = 0.0;
    double oracle = 0.0;
};

CoveragePlan plan_coverage(BoundKind kind, const SyntheticSpec1D& spec, std::size_t bins,
                           double epsilon, std::size_t trials,
                           std::optional<double> certificate_override)
{
    if (trials < 100)
        throw ValidationError("coverage validation needs at least 100 trials");
    if (kind != BoundKind::TotalBiasTest && kind != BoundKind::PacBiasTrain &&
        kind != BoundKind::BiasRecal)
        throw ValidationError("coverage validation supports the top-label bias bounds only");
    BoundInputs in;
    in.n = spec.n;
    in.bins = bins;
    in.lipschitz = spec.map.lipschitz();
    in.epsilon = epsilon;
    CoveragePlan plan;
    plan.certificate = certificate_override ? *certificate_override : evaluate_bound(kind, in).value;
    plan.oracle = true_tce(spec);
    return plan;
}

double coverage_trial(const SyntheticSpec1D& spec, std::size_t bins, double oracle, std::size_t t)
{
    Rng rng = Rng(spec.seed, spec.stream).fork(t);
    const auto data = gen_binary(spec, rng, spec.n);
    return std::abs(oracle - ece_top_label(data, bins));
}

}  // namespace

CoverageResult mc_validate_bound(BoundKind kind, const SyntheticSpec1D& spec, std::size_t bins,
                                 double epsilon, std::size_t trials,
                                 std::optional<double> certificate_override)
{
    const auto plan = plan_coverage(kind, spec, bins, epsilon, trials, certificate_override);
    CoverageResult out;
    out.certificate = plan.certificate;
    out.oracle_tce = plan.oracle;
    out.deviations.resize(trials);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t t = 0; t < trials; ++t)
        out.deviations[t] = coverage_trial(spec, bins, plan.oracle, t);
    out.coverage = coverage_fraction(out.deviations, out.certificate);
    return out;
}

CoverageResult mc_validate_bound_serial(BoundKind kind, const SyntheticSpec1D& spec,
                                        std::size_t bins, double epsilon, std::size_t trials,
                                        std::optional<double> certificate_override)
{
    const auto plan = plan_coverage(kind, spec, bins, epsilon, trials, certificate_override);
    CoverageResult out;
    out.certificate = plan.certificate;
    out.oracle_tce = plan.oracle;
    out.deviations.resize(trials);
    for (std::size_t t = 0; t < trials; ++t)
        out.deviations[t] = coverage_trial(spec, bins, plan.oracle, t);
    out.coverage = coverage_fraction(out.deviations, out.certificate);
    return out;
}

nlohmann::json to_json(const BoundInputs& in)
{
    nlohmann::json j = {{"n", in.n},
                        {"bins", in.bins},
                        {"lipschitz", in.lipschitz},
                        {"epsilon", in.epsilon},
                        {"kl", in.kl},
                        {"num_classes", in.num_classes},
                        {"assume_density", in.assume_density}};
    if (in.lambda)
        j["lambda"] = *in.lambda;
    else
        j["lambda"] = "auto";
    return j;
}

nlohmann::json to_json(const BoundCertificate& cert)
{
    nlohmann::json j = {{"bound_kind", to_string(cert.kind)},
                        {"inputs", to_json(cert.inputs)},
                        {"value", cert.value},
                        {"binning_term", cert.binning_term},
                        {"statistical_term", cert.statistical_term},
                        {"lambda_used", cert.lambda_used}};
    if (cert.kind == BoundKind::JointAccTce)
        j["empirical_term"] = cert.empirical_term;
    return j;
}

}  // namespace calib
