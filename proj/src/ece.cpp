#include "calib/ece.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "calib/error.hpp"

namespace calib {

namespace {

void require_nonempty(const PredictionSet& data)
{
    if (data.empty())
        throw ValidationError("calibration error of an empty dataset is undefined");
}

// Coordinate-wise hypercube estimator over the given class columns.
double ece_hypercube(const PredictionSet& data, std::span<const int> columns,
                     std::size_t bins_per_dim)
{
    require_nonempty(data);
    const std::size_t dims = columns.size();
    BinningScheme::hypercube(bins_per_dim, dims);  // overflow guard

    // Each occupied cell holds sum_m (e_y - f)_k over its members.
    std::unordered_map<std::uint64_t, std::vector<double>> cells;
    for (std::size_t m = 0; m < data.size(); ++m) {
        const auto row = data.row(m);
        std::uint64_t key = 0;
        for (int c : columns)
            key = key * bins_per_dim + (assign_bin_1d(row[static_cast<std::size_t>(c)], bins_per_dim) - 1);
        auto [it, inserted] = cells.try_emplace(key);
        if (inserted)
            it->second.assign(dims, 0.0);
        for (std::size_t d = 0; d < dims; ++d) {
            const int c = columns[d];
            const double hit = data.label(m) == c ? 1.0 : 0.0;
            it->second[d] += hit - row[static_cast<std::size_t>(c)];
        }
    }
    double total = 0.0;
    for (const auto& [key, residual] : cells)
        for (double r : residual)
            total += std::abs(r);
    return total / static_cast<double>(data.size());
}

}  // namespace

std::size_t assign_bin_1d(double p, std::size_t bins)
{
    if (bins < 1)
        throw ValidationError("bin count must be at least 1");
    if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError("value outside [0,1] cannot be binned");
    if (p == 0.0)
        return 1;
    // ceil(p*B) is the right-closed bin index; guard against p*B rounding
    // just above an integer boundary.
    auto i = static_cast<std::size_t>(std::ceil(p * static_cast<double>(bins)));
    if (i > 1 && p <= static_cast<double>(i - 1) / static_cast<double>(bins))
        --i;
    if (i < bins && p > static_cast<double>(i) / static_cast<double>(bins))
        ++i;
    return std::clamp<std::size_t>(i, 1, bins);
}

BinStats1D bin_stats_top_label(const PredictionSet& data, std::size_t bins)
{
    require_nonempty(data);
    BinStats1D stats;
    stats.count.assign(bins, 0);
    stats.mean_confidence.assign(bins, 0.0);
    stats.mean_hit.assign(bins, 0.0);
    stats.total = data.size();
    for (std::size_t m = 0; m < data.size(); ++m) {
        const auto top = top_prediction(data.row(m));
        const std::size_t b = assign_bin_1d(top.confidence, bins) - 1;
        ++stats.count[b];
        stats.mean_confidence[b] += top.confidence;
        stats.mean_hit[b] += data.label(m) == top.top_label ? 1.0 : 0.0;
    }
    for (std::size_t b = 0; b < bins; ++b) {
        if (stats.count[b] == 0)
            continue;
        stats.mean_confidence[b] /= static_cast<double>(stats.count[b]);
        stats.mean_hit[b] /= static_cast<double>(stats.count[b]);
    }
    return stats;
}

double ece_top_label(const PredictionSet& data, std::size_t bins)
{
    const auto stats = bin_stats_top_label(data, bins);
    double ece = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (stats.count[b] == 0)
            continue;
        const double weight = static_cast<double>(stats.count[b]) / static_cast<double>(stats.total);
        ece += weight * std::abs(stats.mean_confidence[b] - stats.mean_hit[b]);
    }
    return ece;
}

double ece_top_label_reformulated(const PredictionSet& data, std::size_t bins)
{
    require_nonempty(data);
    if (bins < 1)
        throw ValidationError("bin count must be at least 1");
    std::vector<double> residual(bins, 0.0);
    for (std::size_t m = 0; m < data.size(); ++m) {
        const auto top = top_prediction(data.row(m));
        const double hit = data.label(m) == top.top_label ? 1.0 : 0.0;
        residual[assign_bin_1d(top.confidence, bins) - 1] += hit - top.confidence;
    }
    const double n = static_cast<double>(data.size());
    double ece = 0.0;
    for (double r : residual)
        ece += std::abs(r / n);
    return ece;
}

double ece_full_k(const PredictionSet& data, std::size_t bins_per_dim)
{
    std::vector<int> all(data.num_classes());
    for (std::size_t k = 0; k < all.size(); ++k)
        all[k] = static_cast<int>(k);
    return ece_hypercube(data, all, bins_per_dim);
}

double ece_partial_k(const PredictionSet& data, std::span<const int> class_subset,
                     std::size_t bins_per_dim)
{
    if (class_subset.empty())
        throw ValidationError("class subset must be nonempty");
    std::set<int> seen;
    for (int c : class_subset) {
        if (c < 0 || static_cast<std::size_t>(c) >= data.num_classes())
            throw ValidationError("class " + std::to_string(c) + " outside [0, " +
                                  std::to_string(data.num_classes()) + ")");
        if (!seen.insert(c).second)
            throw ValidationError("class " + std::to_string(c) + " repeated in subset");
    }
    return ece_hypercube(data, class_subset, bins_per_dim);
}

double ece_gap(const PredictionSet& a, const PredictionSet& b, std::size_t bins)
{
    if (a.num_classes() != b.num_classes())
        throw ValidationError("ECE gap needs equal class counts");
    return std::abs(ece_top_label(a, bins) - ece_top_label(b, bins));
}

std::uint64_t integer_root(std::uint64_t n, unsigned k)
{
    if (k == 0)
        throw ValidationError("root order must be positive");
    if (k == 1 || n < 2)
        return n;
    // Largest r with r^k <= n, by bisection on integers.
    auto pow_le = [&](std::uint64_t r) {
        std::uint64_t acc = 1;
        for (unsigned i = 0; i < k; ++i) {
            if (acc > n / r)
                return false;
            acc *= r;
        }
        return acc <= n;
    };
    std::uint64_t lo = 1;
    std::uint64_t hi = std::uint64_t{1} << (64 / k + 1);
    while (lo < hi) {
        const std::uint64_t mid = lo + (hi - lo + 1) / 2;
        if (pow_le(mid))
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

std::size_t optimal_bins_1d(std::uint64_t n)
{
    return static_cast<std::size_t>(std::max<std::uint64_t>(1, integer_root(n, 3)));
}

std::size_t optimal_bins_per_dim_k(std::uint64_t n, std::size_t num_classes)
{
    if (num_classes < 2)
        throw ValidationError("class count must be at least 2");
    return static_cast<std::size_t>(
        std::max<std::uint64_t>(1, integer_root(n, static_cast<unsigned>(num_classes + 2))));
}

}  // namespace calib
