#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "calib/ece.hpp"
#include "calib/error.hpp"
#include "calib/recal.hpp"
#include "calib/stats.hpp"
#include "calib/synthetic.hpp"
#include "helpers.hpp"

using namespace calib;
using calib::testing::random_set;

namespace {

PredictionSet distorted(double temperature, std::size_t k, std::size_t n, std::uint64_t seed)
{
    SyntheticSpecK s;
    s.num_classes = k;
    s.concentration.assign(k, 1.0);
    s.map = temperature == 1.0 ? SimplexMap::identity() : SimplexMap::temperature(temperature);
    s.n = n;
    s.seed = seed;
    return gen_multiclass(s);
}

GaussianPosterior random_posterior(Rng& rng, std::size_t d)
{
    GaussianPosterior q;
    for (std::size_t i = 0; i < d; ++i) {
        q.mu.push_back(0.5 * rng.normal());
        q.log_sigma.push_back(-2.0 + rng.uniform());
    }
    return q;
}

}  // namespace

TEST_SUITE("recal")
{
    TEST_CASE("apply_recal examples")
    {
        const std::vector<double> p{0.8, 0.2};
        const auto id = apply_recal(RecalMap::temperature(1.0), p);
        CHECK(id[0] == doctest::Approx(0.8).epsilon(1e-12));
        const auto t2 = apply_recal(RecalMap::temperature(2.0), p);
        CHECK(t2[0] == doctest::Approx(std::sqrt(0.8) / (std::sqrt(0.8) + std::sqrt(0.2))));
        CHECK(t2[0] == doctest::Approx(0.666667).epsilon(1e-6));
        CHECK(t2[1] == doctest::Approx(0.333333).epsilon(1e-6));
        const std::vector<double> p3{0.5, 0.3, 0.2};
        for (auto fam : {RecalFamily::Affine, RecalFamily::VectorScale, RecalFamily::Temperature}) {
            const auto out = apply_recal(RecalMap::identity(fam, 3), p3);
            for (int i = 0; i < 3; ++i)
                CHECK(out[i] == doctest::Approx(p3[i]).epsilon(1e-12));
        }
        CHECK_THROWS_AS(RecalMap::temperature(0.0), ValidationError);
        CHECK_THROWS_AS(RecalMap::temperature(-1.0), ValidationError);
        CHECK_THROWS_AS(RecalMap(RecalFamily::Affine, 3, std::vector<double>(5, 0.0)), ValidationError);
    }

    TEST_CASE("maps preserve the simplex; temperature preserves the argmax")
    {
        Rng rng(31, 0);
        for (int t = 0; t < 200; ++t) {
            const std::size_t k = 2 + rng() % 5;
            const auto set = random_set(rng, 1, k);
            const auto row = set.row(0);
            for (auto fam : {RecalFamily::Temperature, RecalFamily::VectorScale, RecalFamily::Affine}) {
                std::vector<double> v(parameter_count(fam, k));
                for (double& x : v)
                    x = rng.normal();
                const auto out = apply_recal(RecalMap(fam, k, v), row);
                double s = 0;
                for (double x : out) {
                    CHECK(x >= 0.0);
                    s += x;
                }
                CHECK(std::abs(s - 1.0) <= 1e-12);
            }
            const auto tm = RecalMap::temperature(0.1 + 5 * rng.uniform(), k);
            CHECK(top_prediction(apply_recal(tm, row)).top_label == top_prediction(row).top_label);
        }
    }

    TEST_CASE("temperature scaling keeps top-label accuracy")
    {
        const auto d = distorted(2.0, 5, 500, 3);
        const double acc = top_label_accuracy(d);
        for (double t : {0.3, 0.9, 2.0, 7.0})
            CHECK(top_label_accuracy(recalibrate(RecalMap::temperature(t, 5), d)) == acc);
    }

    TEST_CASE("Brier and cross-entropy examples")
    {
        CHECK(brier_score(PredictionSet::from_probabilities({0.8, 0.2}, {0}, 2)) ==
              doctest::Approx(0.08));
        CHECK(brier_score(PredictionSet::from_probabilities({1, 0, 0, 1}, {0, 1}, 2)) == 0.0);
        CHECK(brier_score(PredictionSet::from_probabilities({0.5, 0.5}, {1}, 2)) ==
              doctest::Approx(0.5));
        CHECK(softmax_cross_entropy(PredictionSet::from_probabilities({1, 0}, {0}, 2)) ==
              doctest::Approx(0.0));
        CHECK(softmax_cross_entropy(PredictionSet::from_probabilities({0.5, 0.5}, {0}, 2)) ==
              doctest::Approx(std::log(2.0)));
        // Floor keeps a wrong one-hot finite.
        CHECK(softmax_cross_entropy(PredictionSet::from_probabilities({1, 0}, {1}, 2)) ==
              doctest::Approx(-std::log(1e-12)));
        Rng rng(2, 2);
        const auto d = random_set(rng, 50, 3);
        std::vector<std::size_t> rev(50);
        for (std::size_t i = 0; i < 50; ++i)
            rev[i] = 49 - i;
        CHECK(softmax_cross_entropy(d.subset(rev)) == doctest::Approx(softmax_cross_entropy(d)));
    }

    TEST_CASE("Brier score dominates squared ECE")
    {
        Rng rng(17, 0);
        for (int t = 0; t < 300; ++t) {
            const auto d = random_set(rng, 1 + rng() % 100, 2 + rng() % 5);
            const double e = ece_top_label(d, 1 + rng() % 20);
            CHECK(e * e <= brier_score(d));
        }
    }

    TEST_CASE("objective: degenerate posterior and additive KL")
    {
        const auto d = distorted(2.0, 3, 200, 1);
        PbrConfig cfg;
        cfg.alpha = 0.0;
        cfg.mc_samples = 4;
        auto prior = GaussianPosterior::identity_prior(RecalFamily::Temperature, 3);
        auto q = prior;
        q.log_sigma[0] = -40.0;
        Rng r1(1, 1);
        CHECK(pbr_objective(q, prior, d, cfg, r1) == doctest::Approx(brier_score(d)).epsilon(1e-12));

        q.mu[0] = 0.4;
        q.log_sigma[0] = -1.0;
        Rng a(5, 0), b(5, 0);
        cfg.alpha = 0.0;
        const double o0 = pbr_objective(q, prior, d, cfg, a);
        cfg.alpha = 1.0;
        const double o1 = pbr_objective(q, prior, d, cfg, b);
        CHECK(o1 - o0 == doctest::Approx(kl_divergence(q, prior) / 200.0).epsilon(1e-10));

        auto wrong = GaussianPosterior::identity_prior(RecalFamily::Affine, 3);
        Rng c(1, 1);
        CHECK_THROWS_AS(pbr_objective(wrong, prior, d, cfg, c), ValidationError);
    }

    TEST_CASE("objective Monte Carlo estimate is stable across seeds")
    {
        const auto d = distorted(2.0, 3, 200, 9);
        PbrConfig cfg;
        cfg.alpha = 0.0;
        auto prior = GaussianPosterior::identity_prior(RecalFamily::Temperature, 3);
        auto q = prior;
        q.mu[0] = 0.3;
        q.log_sigma[0] = -0.5;
        // Spread of single draws gives the standard error of a J = 10^4 mean.
        cfg.mc_samples = 1;
        Rng s(1, 0);
        double m = 0, m2 = 0;
        const int probes = 2000;
        for (int i = 0; i < probes; ++i) {
            const double x = pbr_objective(q, prior, d, cfg, s);
            m += x;
            m2 += x * x;
        }
        m /= probes;
        const double se = std::sqrt((m2 / probes - m * m) / 10000.0);
        cfg.mc_samples = 10000;
        Rng r1(10, 0), r2(20, 0);
        const double a = pbr_objective(q, prior, d, cfg, r1);
        const double b = pbr_objective(q, prior, d, cfg, r2);
        CHECK(std::abs(a - b) < 3 * std::sqrt(2.0) * se);
    }

    TEST_CASE("analytic gradient matches central differences")
    {
        Rng rng(44, 0);
        const double h = 1e-5;
        double worst = 0.0;
        for (int t = 0; t < 30; ++t) {
            const auto fam = static_cast<RecalFamily>(t % 3);
            const auto d = random_set(rng, 20 + rng() % 30, 2);
            PbrConfig cfg;
            cfg.family = fam;
            cfg.alpha = rng.uniform();
            cfg.mc_samples = 3;
            cfg.objective = t % 2 ? PbrObjective::BrierPlusLoss : PbrObjective::BrierOnly;
            const auto prior = GaussianPosterior::identity_prior(fam, 2);
            const auto q = random_posterior(rng, prior.dim());
            const std::uint64_t seed = rng();
            Rng g_rng(seed, 0);
            const auto g = pbr_gradient(q, prior, d, cfg, g_rng);
            auto fd = [&](GaussianPosterior plus, GaussianPosterior minus) {
                Rng a(seed, 0), b(seed, 0);
                return (pbr_objective(plus, prior, d, cfg, a) - pbr_objective(minus, prior, d, cfg, b)) /
                       (2 * h);
            };
            for (std::size_t i = 0; i < q.dim(); ++i) {
                auto p = q, m = q;
                p.mu[i] += h;
                m.mu[i] -= h;
                const double f = fd(p, m);
                worst = std::max(worst, std::abs(g.grad_mu[i] - f) /
                                            std::max({std::abs(g.grad_mu[i]), std::abs(f), 1e-6}));
                p = q;
                m = q;
                p.log_sigma[i] += h;
                m.log_sigma[i] -= h;
                const double fs = fd(p, m);
                worst = std::max(worst, std::abs(g.grad_log_sigma[i] - fs) /
                                            std::max({std::abs(g.grad_log_sigma[i]), std::abs(fs), 1e-6}));
            }
        }
        CHECK(worst < 1e-4);
    }

    TEST_CASE("KL gradient vanishes at the prior and scales with alpha")
    {
        const auto d = distorted(1.0, 2, 100, 4);
        const auto prior = GaussianPosterior::identity_prior(RecalFamily::VectorScale, 2);
        PbrConfig cfg;
        cfg.family = RecalFamily::VectorScale;
        cfg.mc_samples = 2;
        auto grads = [&](double alpha, const GaussianPosterior& q) {
            cfg.alpha = alpha;
            Rng r(3, 3);
            return pbr_gradient(q, prior, d, cfg, r);
        };
        // At q == prior the KL part contributes nothing.
        const auto g0 = grads(0.0, prior), g1 = grads(5.0, prior);
        for (std::size_t i = 0; i < prior.dim(); ++i) {
            CHECK(g1.grad_mu[i] == doctest::Approx(g0.grad_mu[i]).epsilon(1e-12));
            CHECK(g1.grad_log_sigma[i] == doctest::Approx(g0.grad_log_sigma[i]).epsilon(1e-12));
        }
        auto q = prior;
        q.mu[0] += 0.3;
        q.log_sigma[1] -= 0.7;
        const auto a0 = grads(0.0, q), a1 = grads(1.0, q), a3 = grads(3.0, q);
        for (std::size_t i = 0; i < q.dim(); ++i) {
            CHECK(a3.grad_mu[i] - a0.grad_mu[i] ==
                  doctest::Approx(3 * (a1.grad_mu[i] - a0.grad_mu[i])).epsilon(1e-9));
            CHECK(a3.grad_log_sigma[i] - a0.grad_log_sigma[i] ==
                  doctest::Approx(3 * (a1.grad_log_sigma[i] - a0.grad_log_sigma[i])).epsilon(1e-9));
        }
    }

    TEST_CASE("train_pbr: calibrated data keeps t near 1, distorted data recovers t")
    {
        std::vector<double> t_id, t_two;
        for (std::uint64_t s = 0; s < 10; ++s) {
            PbrConfig cfg;
            cfg.seed = s;
            t_id.push_back(train_pbr(distorted(1.0, 4, 1000, 100 + s), cfg).map.temperature());
            t_two.push_back(train_pbr(distorted(2.0, 4, 1000, 200 + s), cfg).map.temperature());
        }
        CHECK(median(t_id) >= 0.9);
        CHECK(median(t_id) <= 1.1);
        CHECK(median(t_two) >= 1.6);
        CHECK(median(t_two) <= 2.4);
    }

    TEST_CASE("train_pbr: huge alpha pins the posterior to the prior")
    {
        PbrConfig cfg;
        cfg.alpha = 1e6;
        cfg.seed = 8;
        const auto fit = train_pbr(distorted(2.0, 3, 500, 8), cfg);
        CHECK(fit.kl <= 1e-3);
    }

    TEST_CASE("train_pbr is deterministic given data and seed")
    {
        const auto d = distorted(2.0, 3, 300, 6);
        PbrConfig cfg;
        cfg.family = RecalFamily::VectorScale;
        cfg.seed = 77;
        cfg.max_iters = 100;
        const auto a = train_pbr(d, cfg), b = train_pbr(d, cfg);
        CHECK(std::vector<double>(a.map.params().begin(), a.map.params().end()) ==
              std::vector<double>(b.map.params().begin(), b.map.params().end()));
        CHECK(a.final_objective == b.final_objective);
        CHECK(a.posterior.mu == b.posterior.mu);
        cfg.seed = 78;
        const auto c = train_pbr(d, cfg);
        CHECK(a.posterior.mu != c.posterior.mu);
    }

    TEST_CASE("alpha grid selection: serial and parallel agree")
    {
        const auto d = distorted(2.0, 3, 300, 12);
        PbrConfig cfg;
        cfg.seed = 4;
        cfg.max_iters = 150;
        const auto p = train_pbr_alpha_grid(d, cfg, default_alpha_grid());
        const auto s = train_pbr_alpha_grid_serial(d, cfg, default_alpha_grid());
        CHECK(p.best == s.best);
        CHECK(p.recal_ece == s.recal_ece);
        CHECK(p.recal_ece[p.best] == *std::min_element(p.recal_ece.begin(), p.recal_ece.end()));
        CHECK_THROWS_AS(train_pbr_alpha_grid(d, cfg, std::vector<double>{}), ValidationError);
    }

    TEST_CASE("config validation")
    {
        PbrConfig cfg;
        cfg.mc_samples = 0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = PbrConfig{};
        cfg.final_samples = 0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = PbrConfig{};
        cfg.step_size = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
        cfg = PbrConfig{};
        cfg.alpha = -1.0;
        CHECK_THROWS_AS(cfg.validate(), ValidationError);
    }

    TEST_CASE("temperature scaling")
    {
        const auto cal = distorted(1.0, 5, 10000, 1);
        const auto fit = temperature_scaling_fit(cal);
        CHECK(std::abs(fit.map.temperature() - 1.0) < 0.05);
        const auto dist = distorted(2.0, 5, 10000, 2);
        const auto fit2 = temperature_scaling_fit(dist);
        CHECK(std::abs(fit2.map.temperature() - 2.0) < 0.1);
        // Optimum beats both bracket ends.
        const double lo = softmax_cross_entropy(recalibrate(RecalMap::temperature(std::exp(-5.0), 5), dist));
        const double hi = softmax_cross_entropy(recalibrate(RecalMap::temperature(std::exp(5.0), 5), dist));
        CHECK(fit2.nll <= lo);
        CHECK(fit2.nll <= hi);
        const auto one = PredictionSet::from_probabilities({0.6, 0.4, 0.7, 0.3}, {0, 0}, 2);
        const auto deg = temperature_scaling_fit(one);
        CHECK(deg.warning.has_value());
        CHECK(deg.map.temperature() == 1.0);
    }

    TEST_CASE("logits are used when present")
    {
        const auto d = PredictionSet::from_logits({3.0, 1.0, 0.0, 2.0}, {0, 1}, 2);
        const auto r = recalibrate(RecalMap::temperature(2.0), d);
        CHECK(r.row(0)[0] == doctest::Approx(std::exp(1.5) / (std::exp(1.5) + std::exp(0.5))));
    }

    TEST_CASE("JSON round trips")
    {
        const RecalMap m(RecalFamily::VectorScale, 2, {1.5, 0.5, -0.1, 0.2});
        const auto back = recal_map_from_json(to_json(m));
        CHECK(back.family() == RecalFamily::VectorScale);
        CHECK(std::vector<double>(back.params().begin(), back.params().end()) ==
              std::vector<double>{1.5, 0.5, -0.1, 0.2});
        PbrConfig cfg;
        cfg.family = RecalFamily::Affine;
        cfg.alpha = 0.25;
        cfg.seed = 99;
        cfg.objective = PbrObjective::BrierPlusLoss;
        CHECK(to_json(pbr_config_from_json(to_json(cfg))) == to_json(cfg));
        PbrConfig small;
        small.max_iters = 20;
        const auto fit = train_pbr(distorted(2.0, 3, 100, 1), small);
        const auto j = to_json(fit);
        for (const char* key : {"family", "parameters", "posterior", "config", "final_objective"})
            CHECK(j.contains(key));
    }
}
