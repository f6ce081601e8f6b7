#pragma once

#include <optional>
#include <span>

namespace calib {

/// Sample Pearson correlation; empty when either input is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Kendall tau-b (tie-corrected); empty when either input is constant.
std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double standard_error = 0.0;
};

/// Ordinary least squares of ln(bias) on ln(n).
SlopeFit fit_loglog_slope(std::span<const double> ns, std::span<const double> biases);

double median(std::span<const double> values);

}  // namespace calib
