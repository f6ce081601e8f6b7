#include "calib/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "calib/error.hpp"

namespace calib {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw ValidationError("correlation inputs must have equal length");
    if (x.size() < 2)
        throw ValidationError("correlation needs at least two points");
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

std::optional<double> pearson(std::span<const double> x, std::span<const double> y)
{
    check_pair(x, y);
    // Test constancy exactly: the mean of identical values can round away from
    // them and leave a spurious nonzero variance.
    auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
    };
    if (x.empty() || constant(x) || constant(y))
        return std::nullopt;
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y)
{
    check_pair(x, y);
    long long concordant_minus_discordant = 0;
    long long pairs_untied_x = 0;
    long long pairs_untied_y = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            const int sx = sign(x[i] - x[j]);
            const int sy = sign(y[i] - y[j]);
            concordant_minus_discordant += sx * sy;
            pairs_untied_x += sx != 0;
            pairs_untied_y += sy != 0;
        }
    }
    if (pairs_untied_x == 0 || pairs_untied_y == 0)
        return std::nullopt;
    return static_cast<double>(concordant_minus_discordant) /
           std::sqrt(static_cast<double>(pairs_untied_x) * static_cast<double>(pairs_untied_y));
}

SlopeFit fit_loglog_slope(std::span<const double> ns, std::span<const double> biases)
{
    if (ns.size() != biases.size())
        throw ValidationError("slope fit inputs must have equal length");
    if (ns.size() < 3)
        throw ValidationError("slope fit needs at least three points");
    std::vector<double> lx(ns.size());
    std::vector<double> ly(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (!(ns[i] > 0.0) || !(biases[i] > 0.0))
            throw ValidationError("log-log slope needs strictly positive values");
        lx[i] = std::log(ns[i]);
        ly[i] = std::log(biases[i]);
    }
    const double n = static_cast<double>(lx.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx == 0.0)
        throw ValidationError("slope fit needs at least two distinct n values");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
        rss += r * r;
    }
    fit.standard_error = std::sqrt(rss / (n - 2.0) / sxx);
    return fit;
}

double median(std::span<const double> values)
{
    if (values.empty())
        throw ValidationError("median of an empty sample");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace calib
