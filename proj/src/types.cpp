#include "tcbc/types.hpp"

#include <cmath>

namespace tcbc {

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) {
        cols_ = values.size();
    }
    if (values.size() != cols_) {
        throw InvalidInput("Matrix::append_row: row has " + std::to_string(values.size()) +
                           " columns, expected " + std::to_string(cols_));
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

std::string to_string(DistributionKind kind) {
    switch (kind) {
    case DistributionKind::TrueLabeled: return "true_labeled";
    case DistributionKind::TrueUnlabeled: return "true_unlabeled";
    case DistributionKind::EstimatedTrain: return "estimated_train";
    case DistributionKind::PseudoLabel: return "pseudo_label";
    case DistributionKind::Uniform: return "uniform";
    }
    return "unknown";
}

ClassDistribution ClassDistribution::uniform(std::size_t classes) {
    if (classes < 2) {
        throw InvalidInput("class count must be >= 2");
    }
    return {std::vector<double>(classes, 1.0 / static_cast<double>(classes)),
            DistributionKind::Uniform};
}

ClassDistribution ClassDistribution::from_counts(std::span<const double> counts,
                                                 DistributionKind kind) {
    double total = 0.0;
    for (double c : counts) {
        if (!(c >= 0.0) || !std::isfinite(c)) {
            throw InvalidInput("class counts must be finite and non-negative");
        }
        total += c;
    }
    if (total == 0.0) {
        return uniform(counts.size());
    }
    ClassDistribution dist{std::vector<double>(counts.size()), kind};
    for (std::size_t k = 0; k < counts.size(); ++k) {
        dist.probs[k] = counts[k] / total;
    }
    return dist;
}

void validate_probabilities(std::span<const double> probs) {
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0) {
            throw InvalidInput("probability entries must be finite and non-negative");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw InvalidInput("probabilities must sum to 1");
    }
}

ClassIndex argmax(std::span<const double> values) {
    ClassIndex best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] > values[static_cast<std::size_t>(best)]) {
            best = static_cast<ClassIndex>(k);
        }
    }
    return best;
}

} // namespace tcbc
