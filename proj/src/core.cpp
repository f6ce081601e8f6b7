#include "calib/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "calib/error.hpp"

namespace calib {

namespace {

[[noreturn]] void throw_violations(const std::vector<Violation>& violations)
{
    std::ostringstream os;
    os << "invalid prediction set (" << violations.size() << " violation"
       << (violations.size() == 1 ? "" : "s") << ")";
    const std::size_t shown = std::min<std::size_t>(violations.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) {
        os << "; ";
        if (violations[i].row)
            os << "row " << *violations[i].row << ": ";
        os << violations[i].message;
    }
    throw ValidationError(os.str());
}

}  // namespace

std::vector<Violation> validate_prediction_set(std::span<const double> probs,
                                               std::span<const int> labels,
                                               std::size_t num_classes)
{
    std::vector<Violation> out;
    if (num_classes < 2) {
        out.push_back({std::nullopt, "class count must be at least 2"});
        return out;
    }
    if (probs.size() % num_classes != 0) {
        out.push_back({std::nullopt, "probability buffer is not a multiple of the class count"});
        return out;
    }
    const std::size_t rows = probs.size() / num_classes;
    if (rows == 0) {
        out.push_back({std::nullopt, "prediction set has no rows"});
        return out;
    }
    if (rows != labels.size()) {
        out.push_back({std::nullopt, "label count " + std::to_string(labels.size()) +
                                         " does not match row count " + std::to_string(rows)});
    }
    for (std::size_t i = 0; i < rows; ++i) {
        double sum = 0.0;
        bool range_ok = true;
        for (std::size_t k = 0; k < num_classes; ++k) {
            const double p = probs[i * num_classes + k];
            if (!(p >= 0.0 && p <= 1.0))
                range_ok = false;
            sum += p;
        }
        if (!range_ok)
            out.push_back({i, "entry outside [0,1]"});
        if (!(std::abs(sum - 1.0) <= kSimplexTolerance)) {
            std::ostringstream os;
            os.precision(12);
            os << "row sums to " << sum;
            out.push_back({i, os.str()});
        }
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            out.push_back({i, "label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(num_classes) + ")"});
    }
    return out;
}

PredictionSet PredictionSet::from_probabilities(std::vector<double> probs, std::vector<int> labels,
                                                std::size_t num_classes)
{
    const auto violations = validate_prediction_set(probs, labels, num_classes);
    if (!violations.empty())
        throw_violations(violations);

    PredictionSet set;
    set.num_classes_ = num_classes;
    set.probs_ = std::move(probs);
    set.labels_ = std::move(labels);
    for (std::size_t i = 0; i < set.labels_.size(); ++i) {
        double* row = set.probs_.data() + i * num_classes;
        const double sum = std::accumulate(row, row + num_classes, 0.0);
        if (sum != 1.0)
            for (std::size_t k = 0; k < num_classes; ++k)
                row[k] /= sum;
    }
    return set;
}

PredictionSet PredictionSet::from_logits(std::vector<double> logits, std::vector<int> labels,
                                         std::size_t num_classes)
{
    if (num_classes < 2 || logits.size() % num_classes != 0)
        throw ValidationError("logit buffer does not match the class count");
    const std::size_t rows = logits.size() / num_classes;
    std::vector<double> probs(logits.size());
    for (std::size_t i = 0; i < rows; ++i) {
        std::span<const double> z(logits.data() + i * num_classes, num_classes);
        for (double v : z)
            if (!std::isfinite(v))
                throw ValidationError("row " + std::to_string(i) + ": non-finite logit");
        const auto p = softmax(z);
        std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(i * num_classes));
    }
    auto set = from_probabilities(std::move(probs), std::move(labels), num_classes);
    set.logits_ = std::move(logits);
    return set;
}

PredictionSet PredictionSet::subset(std::span<const std::size_t> indices) const
{
    PredictionSet out;
    out.num_classes_ = num_classes_;
    out.probs_.reserve(indices.size() * num_classes_);
    out.labels_.reserve(indices.size());
    if (has_logits())
        out.logits_.reserve(indices.size() * num_classes_);
    for (std::size_t idx : indices) {
        if (idx >= size())
            throw ValidationError("subset index out of range");
        auto r = row(idx);
        out.probs_.insert(out.probs_.end(), r.begin(), r.end());
        out.labels_.push_back(labels_[idx]);
        if (has_logits()) {
            auto z = logit_row(idx);
            out.logits_.insert(out.logits_.end(), z.begin(), z.end());
        }
    }
    return out;
}

TopPrediction top_prediction(std::span<const double> row)
{
    if (row.empty())
        throw ValidationError("empty probability vector");
    double sum = 0.0;
    for (double p : row) {
        if (!(p >= 0.0 && p <= 1.0))
            throw ValidationError("probability entry outside [0,1]");
        sum += p;
    }
    if (!(std::abs(sum - 1.0) <= kSimplexTolerance))
        throw ValidationError("probability vector does not sum to 1");

    TopPrediction top{0, row[0]};
    for (std::size_t k = 1; k < row.size(); ++k) {
        if (row[k] > top.confidence) {
            top.top_label = static_cast<int>(k);
            top.confidence = row[k];
        }
    }
    return top;
}

std::vector<double> one_hot(int label, std::size_t num_classes)
{
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes)
        throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    std::vector<double> e(num_classes, 0.0);
    e[static_cast<std::size_t>(label)] = 1.0;
    return e;
}

std::vector<double> softmax(std::span<const double> scores)
{
    std::vector<double> out(scores.size());
    if (scores.empty())
        return out;
    const double zmax = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        out[k] = std::exp(scores[k] - zmax);
        total += out[k];
    }
    for (double& v : out)
        v /= total;
    return out;
}

BinningScheme BinningScheme::one_dim(std::size_t bins)
{
    if (bins < 1)
        throw ValidationError("bin count must be at least 1");
    return {1, bins, bins};
}

BinningScheme BinningScheme::hypercube(std::size_t bins_per_dim, std::size_t dims)
{
    if (bins_per_dim < 1)
        throw ValidationError("bins per dimension must be at least 1");
    if (dims < 1)
        throw ValidationError("dimension must be at least 1");
    constexpr std::uint64_t kMaxCells = std::uint64_t{1} << 48;
    std::uint64_t total = 1;
    for (std::size_t d = 0; d < dims; ++d) {
        if (total > kMaxCells / bins_per_dim)
            throw ValidationError("hypercube binning exceeds 2^48 cells");
        total *= bins_per_dim;
    }
    return {dims, bins_per_dim, total};
}

}  // namespace calib
