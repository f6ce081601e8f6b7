#pragma once

#include <vector>

#include "calib/core.hpp"
#include "calib/rng.hpp"
#include "calib/synthetic.hpp"

namespace calib::testing {

/// Random simplex rows (Dirichlet(1,..,1)) with uniform labels.
inline PredictionSet random_set(Rng& rng, std::size_t n, std::size_t k)
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

inline PredictionSet binary_set(const std::vector<double>& conf, const std::vector<int>& labels)
{
    std::vector<double> probs;
    for (double c : conf) {
        probs.push_back(c);
        probs.push_back(1.0 - c);
    }
    return PredictionSet::from_probabilities(probs, labels, 2);
}

}  // namespace calib::testing
