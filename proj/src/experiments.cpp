#include "calib/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>
#include <set>

#include "calib/ece.hpp"
#include "calib/error.hpp"
#include "calib/stats.hpp"

namespace calib {

using nlohmann::json;

namespace {

// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mean_of(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v)
{
    if (v.size() < 2)
        return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

json optional_json(const std::optional<double>& x)
{
    return x ? json(*x) : json(nullptr);
}

PredictionSet load_source(const DataSource& source)
{
    if (const auto* s = std::get_if<SyntheticSpec1D>(&source))
        return gen_binary(*s);
    if (const auto* s = std::get_if<SyntheticSpecK>(&source))
        return gen_multiclass(*s);
    const auto& d = std::get<DumpSource>(source);
    return load_dump(d.path, d.format, d.mode);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng rng)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Fisher-Yates written out: std::shuffle's draw pattern is library-specific.
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

std::vector<double> alpha_grid_from_json(const json& j)
{
    auto grid = j.get<std::vector<double>>();
    if (grid.empty())
        throw ValidationError("alpha_grid must not be empty");
    for (double a : grid)
        if (!(a >= 0.0) || !std::isfinite(a))
            throw ValidationError("alpha_grid entries must be finite and >= 0");
    return grid;
}

std::uint64_t cell_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index)
{
    return splitmix64(master ^ splitmix64(tag * 0x9e3779b97f4a7c15ULL + index));
}

}  // namespace

json to_json(const DataSource& source)
{
    if (const auto* s = std::get_if<SyntheticSpec1D>(&source))
        return to_json(*s);
    if (const auto* s = std::get_if<SyntheticSpecK>(&source))
        return to_json(*s);
    const auto& d = std::get<DumpSource>(source);
    return {{"kind", "dump"},
            {"path", d.path.string()},
            {"format", to_string(d.format)},
            {"mode", to_string(d.mode)}};
}

DataSource data_source_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("kind"))
        throw ValidationError("data source needs a \"kind\"");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "dump") {
        DumpSource d;
        d.path = j.at("path").get<std::string>();
        d.format = j.contains("format") ? dump_format_from_string(j.at("format").get<std::string>())
                                        : guess_dump_format(d.path);
        d.mode = j.contains("mode") ? score_mode_from_string(j.at("mode").get<std::string>())
                                    : ScoreMode::Probabilities;
        return d;
    }
    if (kind == "binary")
        return spec_1d_from_json(j);
    if (kind == "multiclass")
        return spec_k_from_json(j);
    throw ValidationError("unknown data source kind '" + kind + "'");
}

PredictionSet draw_synthetic(const SyntheticSource& spec, Rng& rng, std::size_t n)
{
    if (const auto* s = std::get_if<SyntheticSpec1D>(&spec))
        return gen_binary(*s, rng, n);
    return gen_multiclass(std::get<SyntheticSpecK>(spec), rng, n);
}

// ---------------------------------------------------------------- convergence

void ConvergenceConfig::validate() const
{
    std::visit([](const auto& s) { s.validate(); }, spec);
    if (n_grid.size() < 4)
        throw ValidationError("n_grid needs at least 4 points");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        if (n_grid[i] < 2)
            throw ValidationError("n_grid entries must be >= 2");
        if (i > 0 && n_grid[i] <= n_grid[i - 1])
            throw ValidationError("n_grid must be strictly ascending");
    }
    const double decades = std::log10(static_cast<double>(n_grid.back()) /
                                      static_cast<double>(n_grid.front()));
    if (decades < 1.5 - 1e-12)
        throw ValidationError("n_grid must span at least 1.5 decades");
    if (seeds < 20)
        throw ValidationError("convergence needs at least 20 seeds");
    if (bin_rule == BinRule::Fixed && fixed_bins < 1)
        throw ValidationError("fixed_bins must be >= 1");
}

json to_json(const ConvergenceConfig& cfg)
{
    return {{"spec", std::visit([](const auto& s) { return to_json(s); }, cfg.spec)},
            {"n_grid", cfg.n_grid},
            {"seeds", cfg.seeds},
            {"bin_rule", cfg.bin_rule == BinRule::Optimal ? "optimal" : "fixed"},
            {"fixed_bins", cfg.fixed_bins},
            {"master_seed", cfg.master_seed},
            {"oracle_samples", cfg.oracle_samples}};
}

ConvergenceConfig convergence_config_from_json(const json& j)
{
    ConvergenceConfig cfg;
    const auto& spec = j.at("spec");
    if (synthetic_kind(spec) == "binary")
        cfg.spec = spec_1d_from_json(spec);
    else
        cfg.spec = spec_k_from_json(spec);
    if (j.contains("n_grid"))
        cfg.n_grid = j.at("n_grid").get<std::vector<std::size_t>>();
    if (j.contains("seeds"))
        cfg.seeds = j.at("seeds").get<std::size_t>();
    if (j.contains("bin_rule")) {
        const auto rule = j.at("bin_rule").get<std::string>();
        if (rule == "optimal")
            cfg.bin_rule = BinRule::Optimal;
        else if (rule == "fixed")
            cfg.bin_rule = BinRule::Fixed;
        else
            throw ValidationError("bin_rule must be 'optimal' or 'fixed'");
    }
    if (j.contains("fixed_bins"))
        cfg.fixed_bins = j.at("fixed_bins").get<std::size_t>();
    if (j.contains("master_seed"))
        cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("oracle_samples"))
        cfg.oracle_samples = j.at("oracle_samples").get<std::size_t>();
    cfg.validate();
    return cfg;
}

ExperimentReport convergence_experiment(const ConvergenceConfig& cfg, Execution exec)
{
    cfg.validate();
    const bool binary = std::holds_alternative<SyntheticSpec1D>(cfg.spec);
    const std::size_t num_classes =
        binary ? 2 : std::get<SyntheticSpecK>(cfg.spec).num_classes;

    double oracle = 0.0;
    double oracle_se = 0.0;
    if (binary) {
        oracle = true_tce(std::get<SyntheticSpec1D>(cfg.spec));
    } else {
        const auto& s = std::get<SyntheticSpecK>(cfg.spec);
        const auto seed = cell_seed(cfg.master_seed, 0x0ac1e, 0);
        const auto est = exec == Execution::Parallel
                             ? true_ce_k(s, cfg.oracle_samples, seed)
                             : true_ce_k_serial(s, cfg.oracle_samples, seed);
        oracle = est.value;
        oracle_se = est.standard_error;
    }

    const std::size_t cells = cfg.n_grid.size() * cfg.seeds;
    std::vector<double> ece(cells), deviation(cells);
    std::vector<std::size_t> bins(cells);
    for_each_cell(cells, exec, [&](std::size_t i) {
        const std::size_t n = cfg.n_grid[i / cfg.seeds];
        Rng rng(cfg.master_seed, i);
        const auto data = draw_synthetic(cfg.spec, rng, n);
        std::size_t b = cfg.fixed_bins;
        if (cfg.bin_rule == BinRule::Optimal)
            b = binary ? optimal_bins_1d(n) : optimal_bins_per_dim_k(n, num_classes);
        bins[i] = b;
        ece[i] = binary ? ece_top_label(data, b) : ece_full_k(data, b);
        deviation[i] = std::abs(oracle - ece[i]);
    });

    ExperimentReport report;
    report.kind = "convergence";
    report.config = to_json(cfg);
    for (std::size_t i = 0; i < cells; ++i)
        report.cells.push_back({{"n", cfg.n_grid[i / cfg.seeds]},
                                {"seed_index", i % cfg.seeds},
                                {"bins", bins[i]},
                                {"ece", ece[i]},
                                {"deviation", deviation[i]}});

    json per_n = json::array();
    std::vector<double> ns, medians;
    bool positive = true;
    for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
        std::vector<double> d(deviation.begin() + static_cast<std::ptrdiff_t>(g * cfg.seeds),
                              deviation.begin() + static_cast<std::ptrdiff_t>((g + 1) * cfg.seeds));
        const double med = median(d);
        per_n.push_back({{"n", cfg.n_grid[g]},
                         {"bins", bins[g * cfg.seeds]},
                         {"median", med},
                         {"q25", quantile(d, 0.25)},
                         {"q75", quantile(d, 0.75)}});
        ns.push_back(static_cast<double>(cfg.n_grid[g]));
        medians.push_back(med);
        positive = positive && med > 0.0;
    }
    report.summary["per_n"] = per_n;
    report.summary["oracle"] = oracle;
    if (!binary)
        report.summary["oracle_standard_error"] = oracle_se;
    report.summary["reference_rate"] =
        binary ? -1.0 / 3.0 : -1.0 / static_cast<double>(num_classes + 2);
    if (positive) {
        const auto fit = fit_loglog_slope(ns, medians);
        report.summary["slope"] = fit.slope;
        report.summary["slope_standard_error"] = fit.standard_error;
        report.summary["intercept"] = fit.intercept;
    } else {
        report.summary["slope"] = nullptr;
        report.notes.push_back("a per-n median deviation is zero; slope undefined");
    }
    if (binary) {
        report.notes.push_back("deviation = |TCE_oracle - ECE|, top-label ECE, bins = floor(n^(1/3)) "
                               "unless fixed");
    } else {
        report.notes.push_back("deviation = |CE_K_oracle - ECE_K| on the all-class hypercube; "
                               "bins per dimension = floor(n^(1/(K+2))) unless fixed");
        report.notes.push_back("CE_K oracle is a Monte Carlo estimate; see oracle_standard_error");
    }
    return report;
}

// ---------------------------------------------------------------- KL vs gap

void KlGapConfig::validate() const
{
    if (const auto* s = std::get_if<SyntheticSpec1D>(&source))
        s->validate();
    if (const auto* s = std::get_if<SyntheticSpecK>(&source))
        s->validate();
    if (alpha_grid.empty())
        throw ValidationError("alpha_grid must not be empty");
    for (double a : alpha_grid)
        if (!(a >= 0.0) || !std::isfinite(a))
            throw ValidationError("alpha_grid entries must be finite and >= 0");
    if (replicates < 1)
        throw ValidationError("replicates must be >= 1");
    if (n_re < 2)
        throw ValidationError("n_re must be >= 2");
    if (bins && *bins < 1)
        throw ValidationError("bins must be >= 1");
    pbr.validate();
}

json to_json(const KlGapConfig& cfg)
{
    json j{{"source", to_json(cfg.source)},
           {"alpha_grid", cfg.alpha_grid},
           {"replicates", cfg.replicates},
           {"n_re", cfg.n_re},
           {"pbr", to_json(cfg.pbr)},
           {"master_seed", cfg.master_seed}};
    j["bins"] = cfg.bins ? json(*cfg.bins) : json(nullptr);
    return j;
}

KlGapConfig kl_gap_config_from_json(const json& j)
{
    KlGapConfig cfg;
    cfg.source = data_source_from_json(j.at("source"));
    if (j.contains("alpha_grid"))
        cfg.alpha_grid = alpha_grid_from_json(j.at("alpha_grid"));
    if (j.contains("replicates"))
        cfg.replicates = j.at("replicates").get<std::size_t>();
    if (j.contains("n_re"))
        cfg.n_re = j.at("n_re").get<std::size_t>();
    if (j.contains("pbr"))
        cfg.pbr = pbr_config_from_json(j.at("pbr"));
    if (j.contains("master_seed"))
        cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("bins") && !j.at("bins").is_null())
        cfg.bins = j.at("bins").get<std::size_t>();
    cfg.validate();
    return cfg;
}

ExperimentReport kl_gap_experiment(const KlGapConfig& cfg, Execution exec)
{
    cfg.validate();
    // Per replicate: S_re and S_te of equal size n_re.
    std::vector<PredictionSet> recal(cfg.replicates), test(cfg.replicates);
    std::optional<PredictionSet> pool;
    if (const auto* d = std::get_if<DumpSource>(&cfg.source)) {
        pool = load_dump(d->path, d->format, d->mode);
        if (pool->size() < 2 * cfg.n_re)
            throw ValidationError("dump has " + std::to_string(pool->size()) +
                                  " rows; klgap needs 2 * n_re = " +
                                  std::to_string(2 * cfg.n_re));
    }
    for_each_cell(cfg.replicates, exec, [&](std::size_t r) {
        Rng rng(cfg.master_seed, r);
        if (pool) {
            const auto idx = shuffled_indices(pool->size(), rng.fork(1));
            std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cfg.n_re));
            std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(cfg.n_re),
                                       idx.begin() + static_cast<std::ptrdiff_t>(2 * cfg.n_re));
            recal[r] = pool->subset(a);
            test[r] = pool->subset(b);
        } else {
            const SyntheticSource spec =
                std::holds_alternative<SyntheticSpec1D>(cfg.source)
                    ? SyntheticSource(std::get<SyntheticSpec1D>(cfg.source))
                    : SyntheticSource(std::get<SyntheticSpecK>(cfg.source));
            recal[r] = draw_synthetic(spec, rng, cfg.n_re);
            test[r] = draw_synthetic(spec, rng, cfg.n_re);
        }
    });

    const std::size_t bins = cfg.bins ? *cfg.bins : optimal_bins_1d(cfg.n_re);
    const std::size_t na = cfg.alpha_grid.size();
    const std::size_t cells = cfg.replicates * na;
    std::vector<double> kl(cells), ece_re(cells), ece_te(cells), gap(cells);
    std::vector<std::size_t> iters(cells);
    std::vector<json> maps(cells);
    for_each_cell(cells, exec, [&](std::size_t i) {
        const std::size_t r = i / na;
        PbrConfig c = cfg.pbr;
        c.alpha = cfg.alpha_grid[i % na];
        // One PBR stream per replicate, shared across alpha: differences within a
        // replicate then come from alpha alone.
        c.seed = cell_seed(cfg.master_seed, 0x6a9, r);
        const auto fit = train_pbr(recal[r], c);
        const auto re = recalibrate(fit.map, recal[r]);
        const auto te = recalibrate(fit.map, test[r]);
        kl[i] = fit.kl;
        ece_re[i] = ece_top_label(re, bins);
        ece_te[i] = ece_top_label(te, bins);
        gap[i] = std::abs(ece_te[i] - ece_re[i]);
        iters[i] = fit.iterations;
        maps[i] = to_json(fit.map);
    });

    ExperimentReport report;
    report.kind = "klgap";
    report.config = to_json(cfg);
    for (std::size_t i = 0; i < cells; ++i)
        report.cells.push_back({{"replicate", i / na},
                                {"alpha", cfg.alpha_grid[i % na]},
                                {"kl", kl[i]},
                                {"ece_recal", ece_re[i]},
                                {"ece_test", ece_te[i]},
                                {"gap", gap[i]},
                                {"iterations", iters[i]},
                                {"map", maps[i]}});

    json per_rep = json::array();
    std::size_t positive = 0, undefined = 0;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
        const std::span<const double> x(kl.data() + r * na, na);
        const std::span<const double> y(gap.data() + r * na, na);
        const auto p = na >= 2 ? pearson(x, y) : std::nullopt;
        const auto k = na >= 2 ? kendall_tau(x, y) : std::nullopt;
        if (!p)
            ++undefined;
        else if (*p > 0.0)
            ++positive;
        per_rep.push_back({{"replicate", r},
                           {"pearson", optional_json(p)},
                           {"kendall", optional_json(k)},
                           {"undefined", !p || !k}});
    }
    const auto pp = cells >= 2 ? pearson(kl, gap) : std::nullopt;
    const auto pk = cells >= 2 ? kendall_tau(kl, gap) : std::nullopt;
    report.summary["replicates"] = per_rep;
    report.summary["pooled"] = {{"pearson", optional_json(pp)},
                                {"kendall", optional_json(pk)},
                                {"undefined", !pp || !pk}};
    report.summary["positive_pearson_replicates"] = positive;
    report.summary["undefined_replicates"] = undefined;
    report.summary["bins"] = bins;
    report.notes.push_back("gap = |ECE(test) - ECE(recal)| with n_te = n_re, bins = floor(n_re^(1/3)) "
                           "unless overridden");
    if (undefined > 0)
        report.notes.push_back(std::to_string(undefined) +
                               " replicate(s) have constant KL or gap; correlation undefined");
    return report;
}

// ---------------------------------------------------------------- compare

std::string to_string(Method method)
{
    switch (method) {
    case Method::Uncalibrated: return "uncalibrated";
    case Method::Temperature: return "temperature";
    case Method::Pbr: return "pbr";
    case Method::PbrTotal: return "pbr_total";
    }
    return "?";
}

Method method_from_string(const std::string& name)
{
    if (name == "uncalibrated")
        return Method::Uncalibrated;
    if (name == "temperature")
        return Method::Temperature;
    if (name == "pbr")
        return Method::Pbr;
    if (name == "pbr_total")
        return Method::PbrTotal;
    throw ValidationError("unknown method '" + name + "'");
}

void CompareConfig::validate() const
{
    if (const auto* s = std::get_if<SyntheticSpec1D>(&source))
        s->validate();
    if (const auto* s = std::get_if<SyntheticSpecK>(&source))
        s->validate();
    if (methods.empty())
        throw ValidationError("at least one method is required");
    std::set<Method> seen(methods.begin(), methods.end());
    if (seen.size() != methods.size())
        throw ValidationError("methods must be distinct");
    if (folds < 2)
        throw ValidationError("compare needs at least 2 folds");
    if (n_re && *n_re < 1)
        throw ValidationError("n_re must be >= 1");
    if (!(recal_fraction > 0.0 && recal_fraction < 1.0))
        throw ValidationError("recal_fraction must lie in (0, 1)");
    if (bins && *bins < 1)
        throw ValidationError("bins must be >= 1");
    if (alpha_grid.empty())
        throw ValidationError("alpha_grid must not be empty");
    pbr.validate();
}

json to_json(const CompareConfig& cfg)
{
    json methods = json::array();
    for (auto m : cfg.methods)
        methods.push_back(to_string(m));
    json j{{"source", to_json(cfg.source)},
           {"methods", methods},
           {"folds", cfg.folds},
           {"recal_fraction", cfg.recal_fraction},
           {"pbr", to_json(cfg.pbr)},
           {"alpha_grid", cfg.alpha_grid},
           {"master_seed", cfg.master_seed}};
    j["n_re"] = cfg.n_re ? json(*cfg.n_re) : json(nullptr);
    j["bins"] = cfg.bins ? json(*cfg.bins) : json(nullptr);
    return j;
}

CompareConfig compare_config_from_json(const json& j)
{
    CompareConfig cfg;
    cfg.source = data_source_from_json(j.at("source"));
    if (j.contains("methods")) {
        cfg.methods.clear();
        for (const auto& m : j.at("methods"))
            cfg.methods.push_back(method_from_string(m.get<std::string>()));
    }
    if (j.contains("folds"))
        cfg.folds = j.at("folds").get<std::size_t>();
    if (j.contains("recal_fraction"))
        cfg.recal_fraction = j.at("recal_fraction").get<double>();
    if (j.contains("pbr"))
        cfg.pbr = pbr_config_from_json(j.at("pbr"));
    if (j.contains("alpha_grid"))
        cfg.alpha_grid = alpha_grid_from_json(j.at("alpha_grid"));
    if (j.contains("master_seed"))
        cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("n_re") && !j.at("n_re").is_null())
        cfg.n_re = j.at("n_re").get<std::size_t>();
    if (j.contains("bins") && !j.at("bins").is_null())
        cfg.bins = j.at("bins").get<std::size_t>();
    cfg.validate();
    return cfg;
}

ExperimentReport compare_methods(const CompareConfig& cfg, Execution exec)
{
    cfg.validate();
    const PredictionSet data = load_source(cfg.source);
    const std::size_t n = data.size();
    const std::size_t n_re =
        cfg.n_re ? *cfg.n_re
                 : std::max<std::size_t>(
                       1, static_cast<std::size_t>(std::llround(cfg.recal_fraction *
                                                                static_cast<double>(n))));
    if (n_re >= n)
        throw ValidationError("n_re = " + std::to_string(n_re) + " leaves no test data (n = " +
                              std::to_string(n) + ")");
    const std::size_t n_te = n - n_re;
    const std::size_t bins = cfg.bins ? *cfg.bins : optimal_bins_1d(n_te);

    std::vector<PredictionSet> recal(cfg.folds), test(cfg.folds);
    for_each_cell(cfg.folds, exec, [&](std::size_t f) {
        const auto idx = shuffled_indices(n, Rng(cfg.master_seed, f));
        std::vector<std::size_t> a(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_re));
        std::vector<std::size_t> b(idx.begin() + static_cast<std::ptrdiff_t>(n_re), idx.end());
        recal[f] = data.subset(a);
        test[f] = data.subset(b);
    });

    const std::size_t nm = cfg.methods.size();
    const std::size_t cells = cfg.folds * nm;
    std::vector<json> out(cells);
    for_each_cell(cells, exec, [&](std::size_t i) {
        const std::size_t f = i / nm;
        const Method method = cfg.methods[i % nm];
        const auto& re = recal[f];
        json cell{{"fold", f}, {"method", to_string(method)}};
        RecalMap map = RecalMap::identity(RecalFamily::Temperature, data.num_classes());
        switch (method) {
        case Method::Uncalibrated:
            break;
        case Method::Temperature: {
            auto fit = temperature_scaling_fit(re);
            map = fit.map;
            cell["temperature"] = map.temperature();
            if (fit.warning)
                cell["warning"] = *fit.warning;
            break;
        }
        case Method::Pbr:
        case Method::PbrTotal: {
            PbrConfig c = cfg.pbr;
            c.objective = method == Method::Pbr ? PbrObjective::BrierOnly
                                                : PbrObjective::BrierPlusLoss;
            c.seed = cell_seed(cfg.master_seed, 0xc0f, i);
            auto sel = train_pbr_alpha_grid_serial(re, c, cfg.alpha_grid);
            const auto& fit = sel.fits[sel.best];
            map = fit.map;
            cell["alpha"] = sel.alphas[sel.best];
            cell["kl"] = fit.kl;
            if (map.family() == RecalFamily::Temperature)
                cell["temperature"] = map.temperature();
            break;
        }
        }
        const auto te = recalibrate(map, test[f]);
        cell["ece"] = ece_top_label(te, bins);
        cell["accuracy"] = top_label_accuracy(te);
        cell["brier"] = brier_score(te);
        cell["cross_entropy"] = softmax_cross_entropy(te);
        cell["map"] = to_json(map);
        out[i] = std::move(cell);
    });

    ExperimentReport report;
    report.kind = "compare";
    report.config = to_json(cfg);
    for (auto& c : out)
        report.cells.push_back(c);

    static const char* metrics[] = {"ece", "accuracy", "brier", "cross_entropy"};
    json methods = json::object();
    std::map<std::string, std::map<std::string, std::pair<double, double>>> stats;
    for (std::size_t m = 0; m < nm; ++m) {
        const auto name = to_string(cfg.methods[m]);
        json entry = json::object();
        for (const char* metric : metrics) {
            std::vector<double> v;
            for (std::size_t f = 0; f < cfg.folds; ++f)
                v.push_back(out[f * nm + m].at(metric).get<double>());
            const double mu = mean_of(v), sd = sd_of(v);
            entry[metric] = {{"mean", mu}, {"sd", sd}};
            stats[name][metric] = {mu, sd};
        }
        methods[name] = entry;
    }
    json best = json::object();
    for (const char* metric : metrics) {
        const bool higher = std::string(metric) == "accuracy";
        std::string winner;
        double value = 0.0;
        for (auto m : cfg.methods) {
            const auto name = to_string(m);
            const double mu = stats[name][metric].first;
            if (winner.empty() || (higher ? mu > value : mu < value)) {
                winner = name;
                value = mu;
            }
        }
        best[metric] = winner;
        for (auto m : cfg.methods) {
            const auto name = to_string(m);
            methods[name][metric]["best"] = stats[name][metric].first == value;
        }
    }
    // ECE improvement over uncalibrated beyond one standard deviation on both sides.
    if (stats.count("uncalibrated")) {
        const auto [u_mu, u_sd] = stats["uncalibrated"]["ece"];
        for (auto m : cfg.methods) {
            const auto name = to_string(m);
            if (name == "uncalibrated")
                continue;
            const auto [mu, sd] = stats[name]["ece"];
            methods[name]["ece"]["beats_uncalibrated"] = mu + sd < u_mu - u_sd;
        }
    }
    report.summary["methods"] = methods;
    report.summary["best"] = best;
    report.summary["n"] = n;
    report.summary["n_re"] = n_re;
    report.summary["n_te"] = n_te;
    report.summary["bins"] = bins;
    if (cfg.n_re)
        report.notes.push_back("split: explicit n_re = " + std::to_string(n_re) +
                               ", n_te = " + std::to_string(n_te));
    else
        report.notes.push_back("split: recalibration fraction " + std::to_string(cfg.recal_fraction) +
                               " (1:9 recalibration/test by default); the PAC-Bayes "
                               "guarantees assume n_te = n_re, pass --n-re to match them");
    report.notes.push_back("bins = " + std::to_string(bins) +
                           (cfg.bins ? " (override)" : " = floor(n_te^(1/3))"));
    return report;
}

ExperimentReport replay_report(const json& report, Execution exec)
{
    if (!report.is_object() || !report.contains("kind") || !report.contains("config"))
        throw ValidationError("replay needs a report with \"kind\" and \"config\"");
    const auto kind = report.at("kind").get<std::string>();
    const auto& cfg = report.at("config");
    if (kind == "convergence")
        return convergence_experiment(convergence_config_from_json(cfg), exec);
    if (kind == "klgap")
        return kl_gap_experiment(kl_gap_config_from_json(cfg), exec);
    if (kind == "compare")
        return compare_methods(compare_config_from_json(cfg), exec);
    throw ValidationError("unknown experiment kind '" + kind + "'");
}

}  // namespace calib
