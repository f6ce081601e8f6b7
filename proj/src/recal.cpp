#include "calib/recal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "calib/ece.hpp"
#include "calib/error.hpp"

namespace calib {

namespace {

struct Features {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<double> x;
    std::span<const int> labels;
};

Features make_features(const PredictionSet& data)
{
    return {data.size(), data.num_classes(), log_scores(data), data.labels()};
}

void map_scores(RecalFamily family, std::size_t k, std::span<const double> params,
                std::span<const double> x, std::span<double> z)
{
    switch (family) {
    case RecalFamily::Temperature: {
        const double inv_t = std::exp(-params[0]);
        for (std::size_t i = 0; i < k; ++i)
            z[i] = x[i] * inv_t;
        break;
    }
    case RecalFamily::VectorScale:
        for (std::size_t i = 0; i < k; ++i)
            z[i] = params[i] * x[i] + params[k + i];
        break;
    case RecalFamily::Affine:
        for (std::size_t r = 0; r < k; ++r) {
            double acc = params[k * k + r];
            for (std::size_t c = 0; c < k; ++c)
                acc += params[r * k + c] * x[c];
            z[r] = acc;
        }
        break;
    }
}

// Softmax in place; returns log-sum-exp of the input scores.
double softmax_inplace(std::span<double> z)
{
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        total += v;
    }
    for (double& v : z)
        v /= total;
    return zmax + std::log(total);
}

PointLoss loss_on_features(RecalFamily family, std::span<const double> params, const Features& f,
                           PbrObjective objective, bool with_gradient)
{
    const std::size_t k = f.k;
    PointLoss out;
    if (with_gradient)
        out.gradient.assign(params.size(), 0.0);
    std::vector<double> z(k);
    std::vector<double> s(k);
    std::vector<double> gz(k);
    const bool with_ce = objective == PbrObjective::BrierPlusLoss;

    double total = 0.0;
    for (std::size_t m = 0; m < f.n; ++m) {
        std::span<const double> x(f.x.data() + m * k, k);
        const auto y = static_cast<std::size_t>(f.labels[m]);
        map_scores(family, k, params, x, z);
        const double zy = z[y];
        std::copy(z.begin(), z.end(), s.begin());
        const double lse = softmax_inplace(s);

        double brier = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double r = s[c] - (c == y ? 1.0 : 0.0);
            brier += r * r;
        }
        total += brier;
        if (with_ce)
            total += lse - zy;

        if (!with_gradient)
            continue;
        // d Brier / dz_j = s_j (g_j - <g, s>) with g = 2 (s - e_y).
        double gs = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            gs += 2.0 * (s[c] - (c == y ? 1.0 : 0.0)) * s[c];
        for (std::size_t c = 0; c < k; ++c) {
            const double e = c == y ? 1.0 : 0.0;
            gz[c] = s[c] * (2.0 * (s[c] - e) - gs);
            if (with_ce)
                gz[c] += s[c] - e;
        }
        switch (family) {
        case RecalFamily::Temperature: {
            double acc = 0.0;
            for (std::size_t c = 0; c < k; ++c)
                acc -= gz[c] * z[c];
            out.gradient[0] += acc;
            break;
        }
        case RecalFamily::VectorScale:
            for (std::size_t c = 0; c < k; ++c) {
                out.gradient[c] += gz[c] * x[c];
                out.gradient[k + c] += gz[c];
            }
            break;
        case RecalFamily::Affine:
            for (std::size_t r = 0; r < k; ++r) {
                for (std::size_t c = 0; c < k; ++c)
                    out.gradient[r * k + c] += gz[r] * x[c];
                out.gradient[k * k + r] += gz[r];
            }
            break;
        }
    }
    const double n = static_cast<double>(f.n);
    out.value = total / n;
    for (double& g : out.gradient)
        g /= n;
    return out;
}

void check_dims(const GaussianPosterior& posterior, const GaussianPosterior& prior,
                const PredictionSet& data, const PbrConfig& cfg)
{
    const std::size_t d = parameter_count(cfg.family, data.num_classes());
    if (posterior.mu.size() != d || posterior.log_sigma.size() != d || prior.mu.size() != d ||
        prior.log_sigma.size() != d)
        throw ValidationError("posterior/prior dimension does not match the map family (expected " +
                              std::to_string(d) + ")");
    if (data.empty())
        throw ValidationError("recalibration data is empty");
}

std::vector<double> draw_normals(Rng& rng, std::size_t count)
{
    std::vector<double> xi(count);
    for (double& v : xi)
        v = rng.normal();
    return xi;
}

struct MonteCarloTerms {
    double data_loss = 0.0;
    std::vector<double> grad_mu;
    std::vector<double> grad_log_sigma;
};

MonteCarloTerms monte_carlo_loss(const GaussianPosterior& posterior, const Features& f,
                                 const PbrConfig& cfg, Rng& rng, bool with_gradient)
{
    const std::size_t d = posterior.dim();
    const std::size_t j_count = cfg.mc_samples;
    const auto xi = draw_normals(rng, j_count * d);
    MonteCarloTerms out;
    if (with_gradient) {
        out.grad_mu.assign(d, 0.0);
        out.grad_log_sigma.assign(d, 0.0);
    }
    std::vector<double> v(d);
    std::vector<double> sigma(d);
    for (std::size_t i = 0; i < d; ++i)
        sigma[i] = std::exp(posterior.log_sigma[i]);
    for (std::size_t j = 0; j < j_count; ++j) {
        for (std::size_t i = 0; i < d; ++i)
            v[i] = posterior.mu[i] + sigma[i] * xi[j * d + i];
        const auto loss = loss_on_features(cfg.family, v, f, cfg.objective, with_gradient);
        out.data_loss += loss.value;
        if (!with_gradient)
            continue;
        for (std::size_t i = 0; i < d; ++i) {
            out.grad_mu[i] += loss.gradient[i];
            out.grad_log_sigma[i] += loss.gradient[i] * xi[j * d + i] * sigma[i];
        }
    }
    const double jd = static_cast<double>(j_count);
    out.data_loss /= jd;
    for (double& g : out.grad_mu)
        g /= jd;
    for (double& g : out.grad_log_sigma)
        g /= jd;
    return out;
}

PbrGradient objective_and_gradient(const GaussianPosterior& posterior,
                                   const GaussianPosterior& prior, const Features& f,
                                   const PbrConfig& cfg, Rng& rng, bool with_gradient)
{
    auto mc = monte_carlo_loss(posterior, f, cfg, rng, with_gradient);
    const double scale = cfg.alpha / static_cast<double>(f.n);
    PbrGradient out;
    out.objective = mc.data_loss + scale * kl_divergence(posterior, prior);
    if (!with_gradient)
        return out;
    out.grad_mu = std::move(mc.grad_mu);
    out.grad_log_sigma = std::move(mc.grad_log_sigma);
    for (std::size_t i = 0; i < posterior.dim(); ++i) {
        const double var_p = std::exp(2.0 * prior.log_sigma[i]);
        const double var_q = std::exp(2.0 * posterior.log_sigma[i]);
        out.grad_mu[i] += scale * (posterior.mu[i] - prior.mu[i]) / var_p;
        out.grad_log_sigma[i] += scale * (var_q / var_p - 1.0);
    }
    return out;
}

double nll_at_log_temperature(const Features& f, double log_t)
{
    const double inv_t = std::exp(-log_t);
    std::vector<double> z(f.k);
    double total = 0.0;
    for (std::size_t m = 0; m < f.n; ++m) {
        for (std::size_t c = 0; c < f.k; ++c)
            z[c] = f.x[m * f.k + c] * inv_t;
        const double zy = z[static_cast<std::size_t>(f.labels[m])];
        const double lse = softmax_inplace(z);
        total += lse - zy;
    }
    return total / static_cast<double>(f.n);
}

}  // namespace

std::string to_string(RecalFamily family)
{
    switch (family) {
    case RecalFamily::Temperature:
        return "temperature";
    case RecalFamily::VectorScale:
        return "vector_scale";
    case RecalFamily::Affine:
        return "affine";
    }
    return "unknown";
}

RecalFamily recal_family_from_string(const std::string& name)
{
    if (name == "temperature")
        return RecalFamily::Temperature;
    if (name == "vector_scale" || name == "vector")
        return RecalFamily::VectorScale;
    if (name == "affine")
        return RecalFamily::Affine;
    throw ValidationError("unknown recalibration family '" + name + "'");
}

std::size_t parameter_count(RecalFamily family, std::size_t num_classes)
{
    switch (family) {
    case RecalFamily::Temperature:
        return 1;
    case RecalFamily::VectorScale:
        return 2 * num_classes;
    case RecalFamily::Affine:
        return num_classes * num_classes + num_classes;
    }
    return 0;
}

RecalMap::RecalMap(RecalFamily family, std::size_t num_classes, std::vector<double> params)
    : family_(family), num_classes_(num_classes), params_(std::move(params))
{
    if (num_classes_ < 2)
        throw ValidationError("recalibration map needs K >= 2");
    if (params_.size() != parameter_count(family_, num_classes_))
        throw ValidationError("parameter vector length does not match the map family");
    for (double p : params_)
        if (!std::isfinite(p))
            throw ValidationError("recalibration parameters must be finite");
}

RecalMap RecalMap::identity(RecalFamily family, std::size_t num_classes)
{
    std::vector<double> params(parameter_count(family, num_classes), 0.0);
    if (family == RecalFamily::VectorScale)
        std::fill_n(params.begin(), num_classes, 1.0);
    if (family == RecalFamily::Affine)
        for (std::size_t i = 0; i < num_classes; ++i)
            params[i * num_classes + i] = 1.0;
    return RecalMap(family, num_classes, std::move(params));
}

RecalMap RecalMap::temperature(double t, std::size_t num_classes)
{
    if (!(t > 0.0) || !std::isfinite(t))
        throw ValidationError("temperature must be positive");
    return RecalMap(RecalFamily::Temperature, num_classes, {std::log(t)});
}

double RecalMap::temperature() const
{
    if (family_ != RecalFamily::Temperature)
        throw ValidationError("temperature() is defined for the temperature family only");
    return std::exp(params_[0]);
}

void RecalMap::scores(std::span<const double> log_scores, std::span<double> z) const
{
    // Temperature acts on any class count; the other families are K-specific.
    if (z.size() != log_scores.size() ||
        (family_ != RecalFamily::Temperature && log_scores.size() != num_classes_))
        throw ValidationError("score vector length does not match the map");
    map_scores(family_, log_scores.size(), params_, log_scores, z);
}

std::vector<double> RecalMap::apply_log_scores(std::span<const double> log_scores) const
{
    std::vector<double> z(log_scores.size());
    scores(log_scores, z);
    softmax_inplace(z);
    // Renormalise so the row sums to one to the last bit we can manage.
    const double total = std::accumulate(z.begin(), z.end(), 0.0);
    for (double& v : z)
        v /= total;
    return z;
}

std::vector<double> apply_recal(const RecalMap& map, std::span<const double> probs)
{
    top_prediction(probs);  // simplex check
    std::vector<double> x(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
        x[i] = std::log(std::max(probs[i], kProbabilityFloor));
    return map.apply_log_scores(x);
}

std::vector<double> log_scores(const PredictionSet& data)
{
    const std::size_t k = data.num_classes();
    std::vector<double> x(data.size() * k);
    for (std::size_t m = 0; m < data.size(); ++m) {
        const auto src = data.has_logits() ? data.logit_row(m) : data.row(m);
        for (std::size_t c = 0; c < k; ++c)
            x[m * k + c] = data.has_logits() ? src[c] : std::log(std::max(src[c], kProbabilityFloor));
    }
    return x;
}

PredictionSet recalibrate(const RecalMap& map, const PredictionSet& data)
{
    if (map.num_classes() != data.num_classes() && map.family() != RecalFamily::Temperature)
        throw ValidationError("map and data disagree on the class count");
    const std::size_t k = data.num_classes();
    const RecalMap& m = map;
    const auto x = log_scores(data);
    std::vector<double> probs(x.size());
    std::vector<double> z(k);
    for (std::size_t r = 0; r < data.size(); ++r) {
        map_scores(m.family(), k, m.params(), std::span<const double>(x.data() + r * k, k), z);
        softmax_inplace(z);
        const double total = std::accumulate(z.begin(), z.end(), 0.0);
        for (std::size_t c = 0; c < k; ++c)
            probs[r * k + c] = z[c] / total;
    }
    std::vector<int> labels(data.labels().begin(), data.labels().end());
    return PredictionSet::from_probabilities(std::move(probs), std::move(labels), k);
}

double brier_score(const PredictionSet& data)
{
    if (data.empty())
        throw ValidationError("Brier score of an empty dataset is undefined");
    double total = 0.0;
    for (std::size_t m = 0; m < data.size(); ++m) {
        const auto row = data.row(m);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double r = (static_cast<int>(c) == data.label(m) ? 1.0 : 0.0) - row[c];
            total += r * r;
        }
    }
    return total / static_cast<double>(data.size());
}

double softmax_cross_entropy(const PredictionSet& data)
{
    if (data.empty())
        throw ValidationError("cross-entropy of an empty dataset is undefined");
    double total = 0.0;
    for (std::size_t m = 0; m < data.size(); ++m)
        total -= std::log(std::max(data.row(m)[static_cast<std::size_t>(data.label(m))], kProbabilityFloor));
    return total / static_cast<double>(data.size());
}

double top_label_accuracy(const PredictionSet& data)
{
    if (data.empty())
        throw ValidationError("accuracy of an empty dataset is undefined");
    std::size_t hits = 0;
    for (std::size_t m = 0; m < data.size(); ++m)
        if (top_prediction(data.row(m)).top_label == data.label(m))
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<double> GaussianPosterior::variance() const
{
    std::vector<double> var(log_sigma.size());
    for (std::size_t i = 0; i < var.size(); ++i)
        var[i] = std::exp(2.0 * log_sigma[i]);
    return var;
}

std::vector<double> GaussianPosterior::sample(Rng& rng) const
{
    std::vector<double> v(mu.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = mu[i] + std::exp(log_sigma[i]) * rng.normal();
    return v;
}

GaussianPosterior GaussianPosterior::identity_prior(RecalFamily family, std::size_t num_classes)
{
    const auto id = RecalMap::identity(family, num_classes);
    GaussianPosterior prior;
    prior.mu.assign(id.params().begin(), id.params().end());
    prior.log_sigma.assign(prior.mu.size(), 0.0);
    return prior;
}

double kl_divergence(const GaussianPosterior& q, const GaussianPosterior& p)
{
    if (q.dim() != p.dim() || q.log_sigma.size() != q.dim() || p.log_sigma.size() != p.dim())
        throw ValidationError("posterior and prior dimensions differ");
    // Closed form in log-sigma space; equals kl_gaussian_diag on the variances.
    double kl = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i) {
        const double ratio = std::exp(2.0 * (q.log_sigma[i] - p.log_sigma[i]));
        const double diff = q.mu[i] - p.mu[i];
        kl += ratio + diff * diff * std::exp(-2.0 * p.log_sigma[i]) - 1.0 +
              2.0 * (p.log_sigma[i] - q.log_sigma[i]);
    }
    return 0.5 * kl;
}

std::string to_string(PbrObjective objective)
{
    return objective == PbrObjective::BrierOnly ? "brier" : "brier_plus_loss";
}

PbrObjective pbr_objective_from_string(const std::string& name)
{
    if (name == "brier")
        return PbrObjective::BrierOnly;
    if (name == "brier_plus_loss")
        return PbrObjective::BrierPlusLoss;
    throw ValidationError("unknown PBR objective '" + name + "'");
}

void PbrConfig::validate() const
{
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
        throw ValidationError("alpha must be finite and >= 0");
    if (mc_samples < 1 || final_samples < 1)
        throw ValidationError("Monte Carlo sample counts must be >= 1");
    if (!(step_size > 0.0) || !(step_decay > 0.0 && step_decay <= 1.0))
        throw ValidationError("step size must be positive and decay in (0,1]");
}

GaussianPosterior PbrConfig::resolved_prior(std::size_t num_classes) const
{
    if (prior) {
        if (prior->dim() != parameter_count(family, num_classes))
            throw ValidationError("prior dimension does not match the map family");
        return *prior;
    }
    return GaussianPosterior::identity_prior(family, num_classes);
}

PointLoss point_loss(RecalFamily family, std::span<const double> params, const PredictionSet& data,
                     PbrObjective objective, bool with_gradient)
{
    if (params.size() != parameter_count(family, data.num_classes()))
        throw ValidationError("parameter vector length does not match the map family");
    if (data.empty())
        throw ValidationError("recalibration data is empty");
    return loss_on_features(family, params, make_features(data), objective, with_gradient);
}

double pbr_objective(const GaussianPosterior& posterior, const GaussianPosterior& prior,
                     const PredictionSet& data, const PbrConfig& cfg, Rng& rng)
{
    cfg.validate();
    check_dims(posterior, prior, data, cfg);
    return objective_and_gradient(posterior, prior, make_features(data), cfg, rng, false).objective;
}

PbrGradient pbr_gradient(const GaussianPosterior& posterior, const GaussianPosterior& prior,
                         const PredictionSet& data, const PbrConfig& cfg, Rng& rng)
{
    cfg.validate();
    check_dims(posterior, prior, data, cfg);
    return objective_and_gradient(posterior, prior, make_features(data), cfg, rng, true);
}

PbrFit train_pbr(const PredictionSet& data, const PbrConfig& cfg)
{
    cfg.validate();
    if (data.empty())
        throw ValidationError("recalibration data is empty");
    const std::size_t k = data.num_classes();
    const auto prior = cfg.resolved_prior(k);
    const auto features = make_features(data);
    const std::size_t d = prior.dim();

    GaussianPosterior q = prior;
    for (double& ls : q.log_sigma)
        ls += cfg.init_log_sigma_offset;

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kAdamEps = 1e-8;
    std::vector<double> m1(2 * d, 0.0);
    std::vector<double> m2(2 * d, 0.0);

    Rng rng(cfg.seed, 0);
    // The per-step objective is a J-sample Monte Carlo estimate; the stopping
    // rule watches an exponential moving average so one lucky draw cannot
    // freeze the best value and end training early.
    constexpr double kSmoothing = 0.9;
    double smoothed = 0.0;
    double best = std::numeric_limits<double>::infinity();
    std::size_t last_improvement = 0;
    std::size_t iter = 0;
    double step = cfg.step_size;
    for (; iter < cfg.max_iters; ++iter) {
        const auto g = objective_and_gradient(q, prior, features, cfg, rng, true);
        if (!std::isfinite(g.objective)) {
            std::ostringstream os;
            os << "PBR objective became non-finite at iteration " << iter << " (alpha "
               << cfg.alpha << ", family " << to_string(cfg.family) << ")";
            throw ExperimentError(os.str());
        }
        smoothed = iter == 0 ? g.objective : kSmoothing * smoothed + (1.0 - kSmoothing) * g.objective;
        if (smoothed < best - cfg.min_improvement) {
            best = smoothed;
            last_improvement = iter;
        } else if (iter - last_improvement >= cfg.patience) {
            break;
        }
        const double t = static_cast<double>(iter + 1);
        const double c1 = 1.0 - std::pow(kBeta1, t);
        const double c2 = 1.0 - std::pow(kBeta2, t);
        for (std::size_t i = 0; i < 2 * d; ++i) {
            const double gi = i < d ? g.grad_mu[i] : g.grad_log_sigma[i - d];
            m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * gi;
            m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * gi * gi;
            const double delta = step * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kAdamEps);
            if (i < d)
                q.mu[i] -= delta;
            else
                q.log_sigma[i - d] -= delta;
        }
        step *= cfg.step_decay;
    }

    // Point map: mean of J_final posterior draws.
    Rng final_rng(cfg.seed, 1);
    std::vector<double> v(d, 0.0);
    for (std::size_t j = 0; j < cfg.final_samples; ++j) {
        const auto draw = q.sample(final_rng);
        for (std::size_t i = 0; i < d; ++i)
            v[i] += draw[i];
    }
    for (double& x : v)
        x /= static_cast<double>(cfg.final_samples);

    PbrConfig eval_cfg = cfg;
    eval_cfg.mc_samples = cfg.final_samples;
    Rng eval_rng(cfg.seed, 2);
    const double final_objective =
        objective_and_gradient(q, prior, features, eval_cfg, eval_rng, false).objective;
    if (!std::isfinite(final_objective))
        throw ExperimentError("PBR final objective is non-finite");

    PbrFit fit{q, prior, RecalMap(cfg.family, k, std::move(v)), cfg, final_objective,
               kl_divergence(q, prior), iter};
    return fit;
}

namespace {

AlphaSelection select_best(const PredictionSet& data, std::span<const double> alphas,
                           std::vector<PbrFit> fits)
{
    AlphaSelection sel;
    sel.alphas.assign(alphas.begin(), alphas.end());
    const std::size_t bins = optimal_bins_1d(data.size());
    for (const auto& fit : fits)
        sel.recal_ece.push_back(ece_top_label(recalibrate(fit.map, data), bins));
    sel.best = static_cast<std::size_t>(
        std::min_element(sel.recal_ece.begin(), sel.recal_ece.end()) - sel.recal_ece.begin());
    sel.fits = std::move(fits);
    return sel;
}

void check_alphas(std::span<const double> alphas)
{
    if (alphas.empty())
        throw ValidationError("alpha grid must be nonempty");
}

}  // namespace

AlphaSelection train_pbr_alpha_grid(const PredictionSet& data, const PbrConfig& cfg,
                                    std::span<const double> alphas)
{
    check_alphas(alphas);
    std::vector<std::optional<PbrFit>> slots(alphas.size());
    std::vector<std::string> errors(alphas.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        PbrConfig c = cfg;
        c.alpha = alphas[a];
        try {
            slots[a] = train_pbr(data, c);
        } catch (const std::exception& e) {
            errors[a] = e.what();
        }
    }
    std::vector<PbrFit> fits;
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        if (!slots[a])
            throw ExperimentError("alpha " + std::to_string(alphas[a]) + ": " + errors[a]);
        fits.push_back(std::move(*slots[a]));
    }
    return select_best(data, alphas, std::move(fits));
}

AlphaSelection train_pbr_alpha_grid_serial(const PredictionSet& data, const PbrConfig& cfg,
                                           std::span<const double> alphas)
{
    check_alphas(alphas);
    std::vector<PbrFit> fits;
    for (double alpha : alphas) {
        PbrConfig c = cfg;
        c.alpha = alpha;
        fits.push_back(train_pbr(data, c));
    }
    return select_best(data, alphas, std::move(fits));
}

TemperatureFit temperature_scaling_fit(const PredictionSet& data, double tolerance)
{
    if (data.empty())
        throw ValidationError("temperature scaling needs data");
    TemperatureFit fit;
    fit.map = RecalMap::temperature(1.0, data.num_classes());
    const auto labels = data.labels();
    if (std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) == labels.end()) {
        fit.warning = "all labels belong to one class; temperature left at 1";
        fit.nll = softmax_cross_entropy(data);
        return fit;
    }
    const auto features = make_features(data);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = -5.0;
    double hi = 5.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = nll_at_log_temperature(features, x1);
    double f2 = nll_at_log_temperature(features, x2);
    while (hi - lo > tolerance) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = nll_at_log_temperature(features, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = nll_at_log_temperature(features, x2);
        }
    }
    const double log_t = 0.5 * (lo + hi);
    fit.map = RecalMap(RecalFamily::Temperature, data.num_classes(), {log_t});
    fit.nll = nll_at_log_temperature(features, log_t);
    return fit;
}

nlohmann::json to_json(const RecalMap& map)
{
    nlohmann::json j = {{"family", to_string(map.family())},
                        {"num_classes", map.num_classes()},
                        {"parameters", std::vector<double>(map.params().begin(), map.params().end())}};
    if (map.family() == RecalFamily::Temperature)
        j["temperature"] = map.temperature();
    return j;
}

nlohmann::json to_json(const GaussianPosterior& posterior)
{
    return {{"mu", posterior.mu}, {"log_sigma", posterior.log_sigma}};
}

nlohmann::json to_json(const PbrConfig& cfg)
{
    nlohmann::json j = {{"family", to_string(cfg.family)},
                        {"alpha", cfg.alpha},
                        {"mc_samples", cfg.mc_samples},
                        {"final_samples", cfg.final_samples},
                        {"step_size", cfg.step_size},
                        {"step_decay", cfg.step_decay},
                        {"max_iters", cfg.max_iters},
                        {"patience", cfg.patience},
                        {"min_improvement", cfg.min_improvement},
                        {"init_log_sigma_offset", cfg.init_log_sigma_offset},
                        {"seed", cfg.seed},
                        {"objective", to_string(cfg.objective)}};
    if (cfg.prior)
        j["prior"] = to_json(*cfg.prior);
    return j;
}

nlohmann::json to_json(const PbrFit& fit)
{
    nlohmann::json j = to_json(fit.map);
    j["posterior"] = to_json(fit.posterior);
    j["prior"] = to_json(fit.prior);
    j["config"] = to_json(fit.config);
    j["final_objective"] = fit.final_objective;
    j["kl"] = fit.kl;
    j["iterations"] = fit.iterations;
    return j;
}

RecalMap recal_map_from_json(const nlohmann::json& j)
{
    try {
        return RecalMap(recal_family_from_string(j.at("family").get<std::string>()),
                        j.at("num_classes").get<std::size_t>(),
                        j.at("parameters").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed recalibration map: ") + e.what());
    }
}

PbrConfig pbr_config_from_json(const nlohmann::json& j)
{
    try {
        PbrConfig cfg;
        cfg.family = recal_family_from_string(j.value("family", std::string("temperature")));
        cfg.alpha = j.value("alpha", cfg.alpha);
        cfg.mc_samples = j.value("mc_samples", cfg.mc_samples);
        cfg.final_samples = j.value("final_samples", cfg.final_samples);
        cfg.step_size = j.value("step_size", cfg.step_size);
        cfg.step_decay = j.value("step_decay", cfg.step_decay);
        cfg.max_iters = j.value("max_iters", cfg.max_iters);
        cfg.patience = j.value("patience", cfg.patience);
        cfg.min_improvement = j.value("min_improvement", cfg.min_improvement);
        cfg.init_log_sigma_offset = j.value("init_log_sigma_offset", cfg.init_log_sigma_offset);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.objective = pbr_objective_from_string(j.value("objective", std::string("brier")));
        if (j.contains("prior")) {
            GaussianPosterior p;
            p.mu = j["prior"].at("mu").get<std::vector<double>>();
            p.log_sigma = j["prior"].at("log_sigma").get<std::vector<double>>();
            cfg.prior = p;
        }
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed PBR config: ") + e.what());
    }
}

}  // namespace calib
