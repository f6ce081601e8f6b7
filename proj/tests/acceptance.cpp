// Acceptance suite: one PASS/FAIL line per criterion, at fixed seeds and the
// tolerances the criteria state. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "calib/bounds.hpp"
#include "calib/ece.hpp"
#include "calib/experiments.hpp"
#include "calib/recal.hpp"
#include "calib/stats.hpp"
#include "calib/synthetic.hpp"

using namespace calib;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Paths {
    std::string cli;
    std::string data;
    std::string work;
};

std::string fmt(const char* f, double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

PredictionSet random_set(Rng& rng, std::size_t n, std::size_t k)
{
    std::vector<double> probs;
    std::vector<int> labels;
    const std::vector<double> ones(k, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = sample_dirichlet(ones, rng);
        probs.insert(probs.end(), row.begin(), row.end());
        labels.push_back(static_cast<int>(rng() % k));
    }
    return PredictionSet::from_probabilities(std::move(probs), std::move(labels), k);
}

const std::vector<std::size_t> kNGrid{500, 1000, 2500, 5000, 10000, 25000, 50000};
constexpr std::uint64_t kMasterSeed = 20240601;

SyntheticSpec1D sine_spec()
{
    SyntheticSpec1D s;
    s.confidence.lo = 0.5;
    s.confidence.hi = 1.0;
    s.map = MiscalibrationMap1D::sine(0.003, 3.0);
    return s;
}

SyntheticSpecK mixture_spec()
{
    SyntheticSpecK s;
    s.num_classes = 3;
    s.concentration = {1.0, 1.0, 1.0};
    s.map = SimplexMap::mixture_uniform(0.02);
    return s;
}

SyntheticSpecK temperature_distorted(std::size_t n, std::uint64_t seed)
{
    SyntheticSpecK s;
    s.num_classes = 10;
    s.concentration.assign(10, 1.0);
    s.map = SimplexMap::temperature(2.0);
    s.n = n;
    s.seed = seed;
    return s;
}

double binary_slope = std::numeric_limits<double>::quiet_NaN();

Outcome reformulation_identity()
{
    Rng rng(kMasterSeed, 1);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng() % 200;
        const std::size_t k = 2 + rng() % 4;
        const std::size_t b = 1 + rng() % 20;
        const auto d = random_set(rng, n, k);
        worst = std::max(worst, std::abs(ece_top_label(d, b) - ece_top_label_reformulated(d, b)));
    }
    return {worst < 1e-12, "max |difference| = " + fmt("%.3g", worst) + " (< 1e-12)"};
}

Outcome convergence_slope(const SyntheticSource& spec, double lo, double hi, double* slope_out)
{
    ConvergenceConfig cfg;
    cfg.spec = spec;
    cfg.n_grid = kNGrid;
    cfg.seeds = 50;
    cfg.master_seed = kMasterSeed;
    const auto r = convergence_experiment(cfg);
    const double slope = r.summary.at("slope").get<double>();
    *slope_out = slope;
    return {slope >= lo && slope <= hi,
            "slope = " + fmt("%.4f", slope) + " +/- " +
                fmt("%.4f", r.summary.at("slope_standard_error").get<double>()) + " in [" +
                fmt("%.2f", lo) + ", " + fmt("%.2f", hi) + "]"};
}

Outcome binary_rate()
{
    return convergence_slope(sine_spec(), -0.45, -0.20, &binary_slope);
}

Outcome multiclass_rate()
{
    double slope = 0.0;
    auto out = convergence_slope(mixture_spec(), -0.35, -0.08, &slope);
    const double shallower_by = slope - binary_slope;
    const bool shallower = std::isfinite(binary_slope) && shallower_by >= 0.05;
    out.pass = out.pass && shallower;
    out.detail += "; shallower than binary by " + fmt("%.4f", shallower_by) + " (>= 0.05)";
    return out;
}

Outcome bound_coverage()
{
    auto spec = sine_spec();
    spec.n = 1000;
    spec.seed = kMasterSeed;
    const auto r = mc_validate_bound(BoundKind::TotalBiasTest, spec, 10, 0.05, 1000);
    return {r.coverage >= 0.95, "coverage = " + fmt("%.4f", r.coverage) + " (>= 0.95), certificate " +
                                    fmt("%.4f", r.certificate)};
}

Outcome brier_dominates()
{
    Rng rng(kMasterSeed, 5);
    int violations = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto d = random_set(rng, 1 + rng() % 200, 2 + rng() % 9);
        const double e = ece_top_label(d, 1 + rng() % 30);
        violations += !(e * e <= brier_score(d));
    }
    return {violations == 0, std::to_string(violations) + " violations in 1000 instances"};
}

Outcome pbr_recovery()
{
    int wins = 0;
    std::vector<double> temps;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto data = gen_multiclass(temperature_distorted(10000, kMasterSeed + s));
        std::vector<std::size_t> re(1000), te(9000);
        for (std::size_t i = 0; i < 1000; ++i)
            re[i] = i;
        for (std::size_t i = 0; i < 9000; ++i)
            te[i] = 1000 + i;
        const auto recal = data.subset(re), test = data.subset(te);
        PbrConfig cfg;
        cfg.seed = kMasterSeed + s;
        const auto sel = train_pbr_alpha_grid(recal, cfg, default_alpha_grid());
        const auto& map = sel.fits[sel.best].map;
        const std::size_t bins = optimal_bins_1d(test.size());
        wins += ece_top_label(recalibrate(map, test), bins) < ece_top_label(test, bins);
        temps.push_back(map.temperature());
    }
    const double t = median(temps);
    return {wins >= 9 && t >= 1.6 && t <= 2.4,
            "ECE reduced in " + std::to_string(wins) + "/10 seeds (>= 9), median t = " + fmt("%.3f", t) +
                " in [1.6, 2.4]"};
}

Outcome gradient_check()
{
    Rng rng(kMasterSeed, 7);
    const double h = 1e-5;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto family = static_cast<RecalFamily>(t % 3);
        const auto data = random_set(rng, 20 + rng() % 60, 2);
        PbrConfig cfg;
        cfg.family = family;
        cfg.alpha = rng.uniform();
        cfg.mc_samples = 1 + rng() % 4;
        cfg.objective = rng() % 2 ? PbrObjective::BrierPlusLoss : PbrObjective::BrierOnly;
        const auto prior = GaussianPosterior::identity_prior(family, 2);
        GaussianPosterior q = prior;
        for (std::size_t i = 0; i < q.dim(); ++i) {
            q.mu[i] += 0.5 * rng.normal();
            q.log_sigma[i] = -2.5 + 1.5 * rng.uniform();
        }
        const std::uint64_t seed = rng();
        Rng g_rng(seed, 0);
        const auto g = pbr_gradient(q, prior, data, cfg, g_rng);
        // Central differences on the same Monte Carlo draws.
        auto objective = [&](const GaussianPosterior& p) {
            Rng r(seed, 0);
            return pbr_objective(p, prior, data, cfg, r);
        };
        auto rel = [](double a, double f) {
            return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-6});
        };
        for (std::size_t i = 0; i < q.dim(); ++i) {
            auto plus = q, minus = q;
            plus.mu[i] += h;
            minus.mu[i] -= h;
            worst = std::max(worst, rel(g.grad_mu[i], (objective(plus) - objective(minus)) / (2 * h)));
            plus = q;
            minus = q;
            plus.log_sigma[i] += h;
            minus.log_sigma[i] -= h;
            worst = std::max(worst,
                             rel(g.grad_log_sigma[i], (objective(plus) - objective(minus)) / (2 * h)));
        }
    }
    return {worst < 1e-4, "max relative error = " + fmt("%.3g", worst) + " (< 1e-4)"};
}

Outcome gaussian_kl()
{
    Rng rng(kMasterSeed, 8);
    int agree = 0;
    double worst_z = 0.0;
    for (int t = 0; t < 20; ++t) {
        std::vector<double> mq(5), vq(5), mp(5), vp(5);
        for (int d = 0; d < 5; ++d) {
            mq[d] = rng.normal();
            mp[d] = rng.normal();
            vq[d] = 0.1 + 2.0 * rng.uniform();
            vp[d] = 0.1 + 2.0 * rng.uniform();
        }
        const double closed = kl_gaussian_diag(mq, vq, mp, vp);
        const std::size_t m = 1000000;
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double log_ratio = 0.0;
            for (int d = 0; d < 5; ++d) {
                const double x = mq[d] + std::sqrt(vq[d]) * rng.normal();
                log_ratio += 0.5 * std::log(vp[d] / vq[d]) - 0.5 * (x - mq[d]) * (x - mq[d]) / vq[d] +
                             0.5 * (x - mp[d]) * (x - mp[d]) / vp[d];
            }
            s += log_ratio;
            s2 += log_ratio * log_ratio;
        }
        const double mean = s / m;
        const double se = std::sqrt((s2 / m - mean * mean) / m);
        const double z = std::abs(closed - mean) / se;
        worst_z = std::max(worst_z, z);
        agree += z <= 3.0;
    }
    return {agree == 20, std::to_string(agree) + "/20 pairs within 3 standard errors (worst " +
                             fmt("%.2f", worst_z) + " SE)"};
}

Outcome kl_gap_correlation()
{
    KlGapConfig cfg;
    cfg.source = temperature_distorted(0, kMasterSeed);
    cfg.alpha_grid = default_alpha_grid();
    cfg.n_re = 1000;
    cfg.replicates = 10;
    cfg.pbr.family = RecalFamily::Affine;
    cfg.master_seed = kMasterSeed;
    const auto r = kl_gap_experiment(cfg);
    const auto positive = r.summary.at("positive_pearson_replicates").get<std::size_t>();
    const auto& pooled = r.summary.at("pooled");
    return {positive >= 8, "Pearson > 0 in " + std::to_string(positive) +
                               "/10 replicates (>= 8); pooled Pearson " +
                               (pooled.at("pearson").is_null()
                                    ? std::string("undefined")
                                    : fmt("%.3f", pooled.at("pearson").get<double>()))};
}

Outcome lambda_optimisation()
{
    Rng rng(kMasterSeed, 10);
    const BoundKind kinds[] = {BoundKind::TotalBiasTest, BoundKind::PacBiasTrain, BoundKind::CeKBias,
                               BoundKind::GenRecal,      BoundKind::BiasRecal,    BoundKind::JointAccTce};
    int bad_heuristic = 0, bad_grid = 0;
    for (int t = 0; t < 100; ++t) {
        const auto kind = kinds[t % 6];
        BoundInputs in;
        in.n = 10 + rng() % 100000;
        in.bins = 1 + rng() % 100;
        in.lipschitz = 3.0 * rng.uniform();
        in.epsilon = 0.001 + 0.9 * rng.uniform();
        in.kl = kind == BoundKind::TotalBiasTest ? 0.0 : 100.0 * rng.uniform();
        in.num_classes = 2 + rng() % 5;
        in.assume_density = rng() % 2;
        in.lambda = optimize_lambda(kind, in);
        const double at_star = evaluate_bound(kind, in).value;
        in.lambda = heuristic_lambda(in);
        const double at_heuristic = evaluate_bound(kind, in).value;
        double grid_min = std::numeric_limits<double>::infinity();
        for (int g = 0; g < 10000; ++g) {
            in.lambda = std::pow(10.0, -3.0 + 10.0 * g / 9999.0);
            grid_min = std::min(grid_min, evaluate_bound(kind, in).value);
        }
        bad_heuristic += !(at_star <= at_heuristic);
        bad_grid += !(at_star <= grid_min * 1.001);
    }
    return {bad_heuristic == 0 && bad_grid == 0,
            std::to_string(bad_heuristic) + " worse than sqrt(B n), " + std::to_string(bad_grid) +
                " above grid minimum + 0.1% (of 100)"};
}

Outcome end_to_end(const Paths& p)
{
    fs::create_directories(p.work);
    const auto report = (fs::path(p.work) / "compare_report.json").string();
    const auto dump = (fs::path(p.data) / "sample_logits_k10.csv").string();
    const std::string cmd = "\"" + p.cli + "\" experiment compare --input \"" + dump +
                            "\" --mode logits --folds 5 --seed 1 --out \"" + report + "\"";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0)
        return {false, "exit code " + std::to_string(code)};
    std::ifstream f(report);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const std::exception& e) {
        return {false, std::string("report is not JSON: ") + e.what()};
    }
    const auto problems = validate_report_schema(j);
    std::size_t rows = j.at("summary").at("n").get<std::size_t>();
    return {problems.empty() && rows == 500,
            "exit code 0, " + std::to_string(rows) + " rows, " +
                (problems.empty() ? std::string("schema valid") : "schema problem: " + problems.front())};
}

}  // namespace

int main(int argc, char** argv)
{
    Paths paths{"calib", "data", "acceptance_work"};
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string key = argv[i];
        if (key == "--cli")
            paths.cli = argv[i + 1];
        else if (key == "--data")
            paths.data = argv[i + 1];
        else if (key == "--work")
            paths.work = argv[i + 1];
    }

    struct Criterion {
        int id;
        const char* name;
        double budget_seconds;  // 0: no runtime requirement
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "reformulation identity", 5, reformulation_identity},
        {2, "binary convergence rate", 120, binary_rate},
        {3, "curse of dimensionality", 180, multiclass_rate},
        {4, "bound coverage", 60, bound_coverage},
        {5, "Brier dominates squared ECE", 0, brier_dominates},
        {6, "PBR recovery", 120, pbr_recovery},
        {7, "gradient correctness", 0, gradient_check},
        {8, "Gaussian KL", 0, gaussian_kl},
        {9, "KL-gap correlation", 0, kl_gap_correlation},
        {10, "lambda optimisation", 0, lambda_optimisation},
        {11, "end-to-end ingestion", 0, [&] { return end_to_end(paths); }},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("threw: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_seconds > 0 && secs >= c.budget_seconds) {
            out.pass = false;
            out.detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
        }
        failures += !out.pass;
        std::printf("%s criterion %2d (%s): %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", c.id, c.name,
                    out.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
                criteria.size());
    return failures;
}
