#include "calib/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "calib/error.hpp"

namespace calib {

namespace {

constexpr std::size_t kOracleShards = 64;

// Neumaier-compensated running sum.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x)
    {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            carry += (sum - t) + x;
        else
            carry += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + carry; }
};

struct ShardMoments {
    CompensatedSum sum;
    CompensatedSum sum_sq;
};

ShardMoments ce_k_shard(const SyntheticSpecK& spec, std::size_t samples, std::uint64_t seed,
                        std::size_t shard)
{
    Rng rng(seed, shard);
    ShardMoments m;
    for (std::size_t s = 0; s < samples; ++s) {
        const auto f = sample_dirichlet(spec.concentration, rng);
        const auto q = spec.map(f);
        double dist = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k)
            dist += std::abs(q[k] - f[k]);
        m.sum.add(dist);
        m.sum_sq.add(dist * dist);
    }
    return m;
}

OracleEstimate merge_shards(const std::vector<ShardMoments>& shards, std::size_t total)
{
    CompensatedSum sum;
    CompensatedSum sum_sq;
    for (const auto& s : shards) {
        sum.add(s.sum.value());
        sum_sq.add(s.sum_sq.value());
    }
    const double n = static_cast<double>(total);
    const double mean = sum.value() / n;
    const double var = std::max(0.0, (sum_sq.value() - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

std::size_t shard_size(std::size_t total, std::size_t shard)
{
    return total / kOracleShards + (shard < total % kOracleShards ? 1 : 0);
}

void check_oracle_samples(std::size_t oracle_samples)
{
    if (oracle_samples < 100000)
        throw ValidationError("CE_K oracle needs at least 1e5 samples");
}

// The spec's n is only the default dataset size; the law itself is valid without it.
void check_sample_count(std::size_t n)
{
    if (n < 1)
        throw ValidationError("sample count must be at least 1");
}

}  // namespace

MiscalibrationMap1D MiscalibrationMap1D::identity()
{
    return {Kind::Identity, 0.0, 0.0, 1.0};
}

MiscalibrationMap1D MiscalibrationMap1D::shift(double offset)
{
    if (!std::isfinite(offset) || std::abs(offset) >= 1.0)
        throw ValidationError("shift offset must lie in (-1, 1)");
    return {Kind::Shift, offset, 0.0, 1.0};
}

MiscalibrationMap1D MiscalibrationMap1D::sine(double amplitude, double frequency)
{
    if (!std::isfinite(amplitude) || !std::isfinite(frequency) || frequency < 0.0)
        throw ValidationError("sine map needs finite amplitude and nonnegative frequency");
    const double lip = 1.0 + 2.0 * std::numbers::pi * std::abs(amplitude) * frequency;
    return {Kind::Sine, amplitude, frequency, lip};
}

MiscalibrationMap1D MiscalibrationMap1D::power(double gamma)
{
    if (!(gamma >= 1.0) || !std::isfinite(gamma))
        throw ValidationError("power map needs gamma >= 1");
    return {Kind::Power, gamma, 0.0, gamma};
}

double MiscalibrationMap1D::unclipped(double c) const
{
    switch (kind_) {
    case Kind::Identity:
        return c;
    case Kind::Shift:
        return c + a_;
    case Kind::Sine:
        return c + a_ * std::sin(2.0 * std::numbers::pi * b_ * c);
    case Kind::Power:
        return std::pow(c, a_);
    }
    return c;
}

double MiscalibrationMap1D::operator()(double c) const
{
    return std::clamp(unclipped(c), 0.0, 1.0);
}

double ConfidenceLaw::sample(Rng& rng) const
{
    if (kind == Kind::Uniform)
        return lo + (hi - lo) * rng.uniform();
    const double x = rng.gamma(alpha);
    const double y = rng.gamma(beta);
    const double u = (x + y) > 0.0 ? x / (x + y) : 0.5;
    return lo + (hi - lo) * u;
}

double ConfidenceLaw::density(double c) const
{
    if (c < lo || c > hi)
        return 0.0;
    const double width = hi - lo;
    if (kind == Kind::Uniform)
        return 1.0 / width;
    const double u = (c - lo) / width;
    const double log_norm = std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta);
    const double la = alpha == 1.0 ? 0.0 : (alpha - 1.0) * std::log(u);
    const double lb = beta == 1.0 ? 0.0 : (beta - 1.0) * std::log1p(-u);
    return std::exp(log_norm + la + lb) / width;
}

void SyntheticSpec1D::validate() const
{
    if (!(confidence.lo >= 0.5 && confidence.hi <= 1.0 && confidence.lo < confidence.hi))
        throw ValidationError("binary confidence support must satisfy 1/2 <= lo < hi <= 1");
    if (confidence.kind == ConfidenceLaw::Kind::Beta &&
        !(confidence.alpha >= 1.0 && confidence.beta >= 1.0))
        throw ValidationError("beta confidence law needs alpha, beta >= 1");
}

std::vector<double> SimplexMap::operator()(std::span<const double> f) const
{
    const std::size_t k = f.size();
    std::vector<double> q(f.begin(), f.end());
    switch (kind) {
    case Kind::Identity:
        break;
    case Kind::Temperature: {
        std::vector<double> z(k);
        for (std::size_t i = 0; i < k; ++i)
            z[i] = std::log(std::max(f[i], kProbabilityFloor)) / parameter;
        q = softmax(z);
        break;
    }
    case Kind::MixtureUniform:
        for (std::size_t i = 0; i < k; ++i)
            q[i] = (1.0 - parameter) * f[i] + parameter / static_cast<double>(k);
        break;
    }
    return q;
}

void SyntheticSpecK::validate() const
{
    if (num_classes < 2)
        throw ValidationError("class count must be at least 2");
    if (concentration.size() != num_classes)
        throw ValidationError("Dirichlet concentration length must equal the class count");
    for (double a : concentration)
        if (!(a > 0.0) || !std::isfinite(a))
            throw ValidationError("Dirichlet concentrations must be positive");
    if (map.kind == SimplexMap::Kind::Temperature && !(map.parameter > 0.0))
        throw ValidationError("temperature must be positive");
    if (map.kind == SimplexMap::Kind::MixtureUniform && !(map.parameter >= 0.0 && map.parameter <= 1.0))
        throw ValidationError("mixture weight must lie in [0,1]");
}

std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng)
{
    std::vector<double> f(concentration.size());
    double total = 0.0;
    do {
        total = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) {
            f[k] = rng.gamma(concentration[k]);
            total += f[k];
        }
    } while (!(total > 0.0));
    for (double& v : f)
        v /= total;
    return f;
}

PredictionSet gen_binary(const SyntheticSpec1D& spec, Rng& rng, std::size_t n)
{
    spec.validate();
    check_sample_count(n);
    std::vector<double> probs(2 * n);
    std::vector<int> labels(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double c = spec.confidence.sample(rng);
        probs[2 * m] = c;
        probs[2 * m + 1] = 1.0 - c;
        labels[m] = rng.uniform() < spec.map(c) ? 0 : 1;
    }
    return PredictionSet::from_probabilities(std::move(probs), std::move(labels), 2);
}

PredictionSet gen_binary(const SyntheticSpec1D& spec)
{
    Rng rng(spec.seed, spec.stream);
    return gen_binary(spec, rng, spec.n);
}

PredictionSet gen_multiclass(const SyntheticSpecK& spec, Rng& rng, std::size_t n)
{
    spec.validate();
    check_sample_count(n);
    const std::size_t k = spec.num_classes;
    std::vector<double> probs;
    probs.reserve(n * k);
    std::vector<int> labels(n);
    for (std::size_t m = 0; m < n; ++m) {
        const auto f = sample_dirichlet(spec.concentration, rng);
        const auto q = spec.map(f);
        const double u = rng.uniform();
        double cum = 0.0;
        int label = static_cast<int>(k) - 1;
        for (std::size_t c = 0; c < k; ++c) {
            cum += q[c];
            if (u < cum) {
                label = static_cast<int>(c);
                break;
            }
        }
        labels[m] = label;
        probs.insert(probs.end(), f.begin(), f.end());
    }
    return PredictionSet::from_probabilities(std::move(probs), std::move(labels), k);
}

PredictionSet gen_multiclass(const SyntheticSpecK& spec)
{
    Rng rng(spec.seed, spec.stream);
    return gen_multiclass(spec, rng, spec.n);
}

double true_tce(const SyntheticSpec1D& spec, double tolerance)
{
    spec.validate();
    const auto& law = spec.confidence;
    auto integrand = [&](double c) { return std::abs(spec.map(c) - c) * law.density(c); };

    const double lo = law.lo;
    const double hi = law.hi;
    constexpr std::size_t kMinPanels = 64;
    constexpr std::size_t kMaxPanels = std::size_t{1} << 24;

    auto simpson = [&](std::size_t panels) {
        const double h = (hi - lo) / static_cast<double>(panels);
        double acc = integrand(lo) + integrand(hi);
        for (std::size_t i = 1; i < panels; ++i)
            acc += (i % 2 == 1 ? 4.0 : 2.0) * integrand(lo + h * static_cast<double>(i));
        return acc * h / 3.0;
    };

    double previous = simpson(kMinPanels);
    for (std::size_t panels = 2 * kMinPanels; panels <= kMaxPanels; panels *= 2) {
        const double current = simpson(panels);
        if (std::abs(current - previous) < tolerance)
            return current;
        previous = current;
    }
    throw ExperimentError("TCE quadrature did not converge");
}

OracleEstimate true_ce_k(const SyntheticSpecK& spec, std::size_t oracle_samples,
                         std::uint64_t oracle_seed)
{
    spec.validate();
    check_oracle_samples(oracle_samples);
    std::vector<ShardMoments> shards(kOracleShards);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t s = 0; s < kOracleShards; ++s)
        shards[s] = ce_k_shard(spec, shard_size(oracle_samples, s), oracle_seed, s);
    return merge_shards(shards, oracle_samples);
}

OracleEstimate true_ce_k_serial(const SyntheticSpecK& spec, std::size_t oracle_samples,
                                std::uint64_t oracle_seed)
{
    spec.validate();
    check_oracle_samples(oracle_samples);
    std::vector<ShardMoments> shards(kOracleShards);
    for (std::size_t s = 0; s < kOracleShards; ++s)
        shards[s] = ce_k_shard(spec, shard_size(oracle_samples, s), oracle_seed, s);
    return merge_shards(shards, oracle_samples);
}

double empirical_max_slope(const MiscalibrationMap1D& map, std::size_t grid_points)
{
    const double h = 1.0 / static_cast<double>(grid_points - 1);
    double worst = 0.0;
    double prev = map(0.0);
    for (std::size_t i = 1; i < grid_points; ++i) {
        const double cur = map(static_cast<double>(i) * h);
        worst = std::max(worst, std::abs(cur - prev) / h);
        prev = cur;
    }
    return worst;
}

nlohmann::json to_json(const MiscalibrationMap1D& map)
{
    nlohmann::json j;
    switch (map.kind()) {
    case MiscalibrationMap1D::Kind::Identity:
        j["kind"] = "identity";
        break;
    case MiscalibrationMap1D::Kind::Shift:
        j["kind"] = "shift";
        j["offset"] = map.a();
        break;
    case MiscalibrationMap1D::Kind::Sine:
        j["kind"] = "sine";
        j["amplitude"] = map.a();
        j["frequency"] = map.b();
        break;
    case MiscalibrationMap1D::Kind::Power:
        j["kind"] = "power";
        j["gamma"] = map.a();
        break;
    }
    j["lipschitz"] = map.lipschitz();
    return j;
}

nlohmann::json to_json(const SyntheticSpec1D& spec)
{
    nlohmann::json conf;
    if (spec.confidence.kind == ConfidenceLaw::Kind::Uniform) {
        conf = {{"law", "uniform"}, {"lo", spec.confidence.lo}, {"hi", spec.confidence.hi}};
    } else {
        conf = {{"law", "beta"},
                {"lo", spec.confidence.lo},
                {"hi", spec.confidence.hi},
                {"alpha", spec.confidence.alpha},
                {"beta", spec.confidence.beta}};
    }
    return {{"kind", "binary"},
            {"confidence", conf},
            {"map", to_json(spec.map)},
            {"n", spec.n},
            {"seed", spec.seed},
            {"stream", spec.stream}};
}

nlohmann::json to_json(const SyntheticSpecK& spec)
{
    nlohmann::json map;
    switch (spec.map.kind) {
    case SimplexMap::Kind::Identity:
        map = {{"kind", "identity"}};
        break;
    case SimplexMap::Kind::Temperature:
        map = {{"kind", "temperature"}, {"temperature", spec.map.parameter}};
        break;
    case SimplexMap::Kind::MixtureUniform:
        map = {{"kind", "mixture_uniform"}, {"beta", spec.map.parameter}};
        break;
    }
    return {{"kind", "multiclass"},
            {"num_classes", spec.num_classes},
            {"concentration", spec.concentration},
            {"map", map},
            {"n", spec.n},
            {"seed", spec.seed},
            {"stream", spec.stream}};
}

MiscalibrationMap1D map_1d_from_json(const nlohmann::json& j)
{
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "identity")
        return MiscalibrationMap1D::identity();
    if (kind == "shift")
        return MiscalibrationMap1D::shift(j.at("offset").get<double>());
    if (kind == "sine")
        return MiscalibrationMap1D::sine(j.at("amplitude").get<double>(),
                                         j.at("frequency").get<double>());
    if (kind == "power")
        return MiscalibrationMap1D::power(j.at("gamma").get<double>());
    throw ValidationError("unknown miscalibration map kind '" + kind + "'");
}

std::string synthetic_kind(const nlohmann::json& j)
{
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
        throw ValidationError("synthetic spec needs a string 'kind'");
    const auto kind = j["kind"].get<std::string>();
    if (kind != "binary" && kind != "multiclass")
        throw ValidationError("synthetic spec kind must be 'binary' or 'multiclass'");
    return kind;
}

SyntheticSpec1D spec_1d_from_json(const nlohmann::json& j)
{
    try {
        if (synthetic_kind(j) != "binary")
            throw ValidationError("expected a binary synthetic spec");
        SyntheticSpec1D spec;
        const auto& conf = j.at("confidence");
        const auto law = conf.value("law", std::string("uniform"));
        if (law == "uniform") {
            spec.confidence.kind = ConfidenceLaw::Kind::Uniform;
        } else if (law == "beta") {
            spec.confidence.kind = ConfidenceLaw::Kind::Beta;
            spec.confidence.alpha = conf.at("alpha").get<double>();
            spec.confidence.beta = conf.at("beta").get<double>();
        } else {
            throw ValidationError("unknown confidence law '" + law + "'");
        }
        spec.confidence.lo = conf.value("lo", 0.5);
        spec.confidence.hi = conf.value("hi", 1.0);
        spec.map = map_1d_from_json(j.at("map"));
        spec.n = j.value("n", std::size_t{1000});
        spec.seed = j.value("seed", std::uint64_t{0});
        spec.stream = j.value("stream", std::uint64_t{0});
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed binary spec: ") + e.what());
    }
}

SyntheticSpecK spec_k_from_json(const nlohmann::json& j)
{
    try {
        if (synthetic_kind(j) != "multiclass")
            throw ValidationError("expected a multiclass synthetic spec");
        SyntheticSpecK spec;
        spec.num_classes = j.at("num_classes").get<std::size_t>();
        if (j.contains("concentration")) {
            const auto& c = j["concentration"];
            if (c.is_number())
                spec.concentration.assign(spec.num_classes, c.get<double>());
            else
                spec.concentration = c.get<std::vector<double>>();
        } else {
            spec.concentration.assign(spec.num_classes, 1.0);
        }
        const auto& map = j.at("map");
        const auto kind = map.at("kind").get<std::string>();
        if (kind == "identity")
            spec.map = SimplexMap::identity();
        else if (kind == "temperature")
            spec.map = SimplexMap::temperature(map.at("temperature").get<double>());
        else if (kind == "mixture_uniform")
            spec.map = SimplexMap::mixture_uniform(map.at("beta").get<double>());
        else
            throw ValidationError("unknown simplex map kind '" + kind + "'");
        spec.n = j.value("n", std::size_t{1000});
        spec.seed = j.value("seed", std::uint64_t{0});
        spec.stream = j.value("stream", std::uint64_t{0});
        spec.validate();
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed multiclass spec: ") + e.what());
    }
}

}  // namespace calib
