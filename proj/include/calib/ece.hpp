#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "calib/core.hpp"

namespace calib {

/// Per-bin accumulators of the 1-D top-label estimator.
struct BinStats1D {
    std::vector<std::size_t> count;
    std::vector<double> mean_confidence;
    std::vector<double> mean_hit;
    std::size_t total = 0;
};

/// Bin index in 1..B with p in ((i-1)/B, i/B]; p == 0 maps to bin 1.
std::size_t assign_bin_1d(double p, std::size_t bins);

BinStats1D bin_stats_top_label(const PredictionSet& data, std::size_t bins);

/// Sum over bins of (|I_i|/n) * |mean confidence - mean hit rate| on the
/// top-label confidences. Empty bins contribute nothing.
double ece_top_label(const PredictionSet& data, std::size_t bins);

/// Same estimator written as sum_i |E_n[(1{Y=C} - f_C) 1{f_C in I_i}]|.
double ece_top_label_reformulated(const PredictionSet& data, std::size_t bins);

/// All-class estimator on the hypercube [0,1]^K split into bins_per_dim^K
/// cells. Only occupied cells are materialised.
double ece_full_k(const PredictionSet& data, std::size_t bins_per_dim);

/// All-class estimator restricted to the coordinates in `class_subset`.
double ece_partial_k(const PredictionSet& data, std::span<const int> class_subset,
                     std::size_t bins_per_dim);

/// |ece_top_label(a) - ece_top_label(b)|.
double ece_gap(const PredictionSet& a, const PredictionSet& b, std::size_t bins);

/// floor(n^(1/k)) computed exactly on integers.
std::uint64_t integer_root(std::uint64_t n, unsigned k);

std::size_t optimal_bins_1d(std::uint64_t n);
std::size_t optimal_bins_per_dim_k(std::uint64_t n, std::size_t num_classes);

}  // namespace calib
