#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "calib/core.hpp"
#include "calib/rng.hpp"

namespace calib {

/// Conditional hit probability g(c) = P(Y = C | confidence = c), clipped to [0,1].
class MiscalibrationMap1D {
public:
    enum class Kind { Identity, Shift, Sine, Power };

    static MiscalibrationMap1D identity();
    /// g(c) = c + offset.
    static MiscalibrationMap1D shift(double offset);
    /// g(c) = c + amplitude * sin(2 pi frequency c).
    static MiscalibrationMap1D sine(double amplitude, double frequency);
    /// g(c) = c^gamma, gamma >= 1.
    static MiscalibrationMap1D power(double gamma);

    Kind kind() const { return kind_; }
    double a() const { return a_; }
    double b() const { return b_; }
    /// Declared Lipschitz constant of g on [0,1].
    double lipschitz() const { return lipschitz_; }

    double operator()(double c) const;
    /// g before clipping; lets callers confirm clipping is inactive on a support.
    double unclipped(double c) const;

private:
    MiscalibrationMap1D(Kind kind, double a, double b, double lipschitz)
        : kind_(kind), a_(a), b_(b), lipschitz_(lipschitz)
    {
    }
    Kind kind_;
    double a_;
    double b_;
    double lipschitz_;
};

/// Law of the binary top-label confidence on [lo, hi] within [1/2, 1]:
/// uniform, or Beta(alpha, beta) rescaled onto [lo, hi].
struct ConfidenceLaw {
    enum class Kind { Uniform, Beta };
    Kind kind = Kind::Uniform;
    double lo = 0.5;
    double hi = 1.0;
    double alpha = 1.0;
    double beta = 1.0;

    double sample(Rng& rng) const;
    double density(double c) const;
};

struct SyntheticSpec1D {
    ConfidenceLaw confidence;
    MiscalibrationMap1D map = MiscalibrationMap1D::identity();
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    void validate() const;
};

/// Miscalibration of a full probability vector: q = m(f) is the true E[e_Y | f].
struct SimplexMap {
    enum class Kind { Identity, Temperature, MixtureUniform };
    Kind kind = Kind::Identity;
    /// Temperature T (q = softmax(ln f / T)) or mixture weight beta.
    double parameter = 1.0;

    static SimplexMap identity() { return {Kind::Identity, 1.0}; }
    static SimplexMap temperature(double t) { return {Kind::Temperature, t}; }
    static SimplexMap mixture_uniform(double beta) { return {Kind::MixtureUniform, beta}; }

    std::vector<double> operator()(std::span<const double> f) const;
};

struct SyntheticSpecK {
    std::size_t num_classes = 3;
    std::vector<double> concentration{1.0, 1.0, 1.0};
    SimplexMap map;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    void validate() const;
};

struct OracleEstimate {
    double value = 0.0;
    double standard_error = 0.0;
};

/// Binary dataset with P(Y = C | conf = c) = g(c) exactly.
PredictionSet gen_binary(const SyntheticSpec1D& spec);
PredictionSet gen_binary(const SyntheticSpec1D& spec, Rng& rng, std::size_t n);

/// Dirichlet predictions with labels drawn from m(f), so E[e_Y | f] = m(f).
PredictionSet gen_multiclass(const SyntheticSpecK& spec);
PredictionSet gen_multiclass(const SyntheticSpecK& spec, Rng& rng, std::size_t n);

std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng);

/// E|g(c) - c| under the confidence law by composite Simpson quadrature,
/// doubled until successive estimates differ by less than `tolerance`.
double true_tce(const SyntheticSpec1D& spec, double tolerance = 1e-8);

/// Monte Carlo estimate of E||m(f) - f||_1 on a dedicated stream.
OracleEstimate true_ce_k(const SyntheticSpecK& spec, std::size_t oracle_samples,
                         std::uint64_t oracle_seed = 0x5eed0ac1e);

/// Same estimator computed on one thread; shards and merge order match the
/// parallel kernel so the two agree bit-for-bit.
OracleEstimate true_ce_k_serial(const SyntheticSpecK& spec, std::size_t oracle_samples,
                                std::uint64_t oracle_seed = 0x5eed0ac1e);

/// Largest adjacent-point slope of g on a uniform grid over [0,1].
double empirical_max_slope(const MiscalibrationMap1D& map, std::size_t grid_points = 10000);

nlohmann::json to_json(const MiscalibrationMap1D& map);
nlohmann::json to_json(const SyntheticSpec1D& spec);
nlohmann::json to_json(const SyntheticSpecK& spec);
MiscalibrationMap1D map_1d_from_json(const nlohmann::json& j);
SyntheticSpec1D spec_1d_from_json(const nlohmann::json& j);
SyntheticSpecK spec_k_from_json(const nlohmann::json& j);
/// "binary" or "multiclass", from the document's "kind" key.
std::string synthetic_kind(const nlohmann::json& j);

}  // namespace calib
