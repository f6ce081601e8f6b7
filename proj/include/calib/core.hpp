#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace calib {

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kProbabilityFloor = 1e-12;

struct TopPrediction {
    int top_label = 0;
    double confidence = 0.0;
};

/// One violated invariant; `row` is empty for whole-set problems.
struct Violation {
    std::optional<std::size_t> row;
    std::string message;
};

/// Reports every violated invariant of a raw row-major probability matrix.
/// Rows are accepted when they sum to 1 within kSimplexTolerance.
std::vector<Violation> validate_prediction_set(std::span<const double> probs,
                                               std::span<const int> labels,
                                               std::size_t num_classes);

/// n rows of K-simplex probability vectors with integer labels in {0..K-1}.
/// Immutable after construction; construction validates and renormalizes
/// rows that are within tolerance of the simplex.
class PredictionSet {
public:
    /// Empty set (n = 0, K = 0); only useful as a placeholder to assign into.
    PredictionSet() = default;
    static PredictionSet from_probabilities(std::vector<double> probs, std::vector<int> labels,
                                            std::size_t num_classes);
    /// Softmax is applied row-wise; the raw logits are kept alongside.
    static PredictionSet from_logits(std::vector<double> logits, std::vector<int> labels,
                                     std::size_t num_classes);

    std::size_t size() const { return labels_.size(); }
    std::size_t num_classes() const { return num_classes_; }
    bool empty() const { return labels_.empty(); }

    std::span<const double> row(std::size_t i) const
    {
        return {probs_.data() + i * num_classes_, num_classes_};
    }
    int label(std::size_t i) const { return labels_[i]; }

    std::span<const double> probabilities() const { return probs_; }
    std::span<const int> labels() const { return labels_; }

    bool has_logits() const { return !logits_.empty(); }
    std::span<const double> logit_row(std::size_t i) const
    {
        return {logits_.data() + i * num_classes_, num_classes_};
    }

    /// Rows selected by `indices`, in that order.
    PredictionSet subset(std::span<const std::size_t> indices) const;

private:
    std::size_t num_classes_ = 0;
    std::vector<double> probs_;
    std::vector<int> labels_;
    std::vector<double> logits_;
};

/// Argmax with ties broken towards the lowest class index.
TopPrediction top_prediction(std::span<const double> row);

std::vector<double> one_hot(int label, std::size_t num_classes);

/// Row-wise softmax, numerically stabilised by the row maximum.
std::vector<double> softmax(std::span<const double> scores);

/// Uniform-width partition of [0,1] (dims == 1) or [0,1]^K into bins_per_dim^K
/// cells.
struct BinningScheme {
    std::size_t dims = 1;
    std::size_t bins_per_dim = 1;
    std::uint64_t total_bins = 1;

    static BinningScheme one_dim(std::size_t bins);
    /// Rejects cell-index spaces larger than 2^48.
    static BinningScheme hypercube(std::size_t bins_per_dim, std::size_t dims);
};

}  // namespace calib
