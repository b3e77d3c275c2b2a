#include "tcbc/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace tcbc {

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {}

std::int64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::int64_t sum = 0;
    for (std::size_t j = 0; j < classes_; ++j) sum += at(truth, j);
    return sum;
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t sum = 0;
    for (auto c : counts_) sum += c;
    return sum;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < classes_; ++i) sum += at(i, i);
    return sum;
}

ConfusionMatrix confusion(std::span<const ClassIndex> truth, std::span<const ClassIndex> predicted,
                          std::size_t classes) {
    if (truth.size() != predicted.size()) {
        throw InvalidInput("confusion: true and predicted label lists differ in length");
    }
    ConfusionMatrix cm(classes);
    auto check = [classes](ClassIndex y) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw InvalidInput("confusion: label " + std::to_string(y) + " out of range");
        }
        return static_cast<std::size_t>(y);
    };
    for (std::size_t n = 0; n < truth.size(); ++n) {
        ++cm.at(check(truth[n]), check(predicted[n]));
    }
    return cm;
}

std::vector<double> per_class_recall(const ConfusionMatrix& cm) {
    std::vector<double> recall(cm.classes());
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        const auto row = cm.row_sum(i);
        recall[i] = row > 0 ? static_cast<double>(cm.at(i, i)) / static_cast<double>(row)
                            : std::numeric_limits<double>::quiet_NaN();
    }
    return recall;
}

bool has_empty_rows(const ConfusionMatrix& cm) {
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        if (cm.row_sum(i) == 0) return true;
    }
    return false;
}

double balanced_accuracy(const ConfusionMatrix& cm) {
    const auto recall = per_class_recall(cm);
    double sum = 0.0;
    for (double r : recall) sum += r;
    return sum / static_cast<double>(recall.size());
}

double top1_accuracy(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

double l2_distribution_distance(const ClassDistribution& a, const ClassDistribution& b) {
    if (a.classes() != b.classes()) {
        throw InvalidInput("l2_distribution_distance: class counts differ");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < a.classes(); ++k) {
        const double diff = a.probs[k] - b.probs[k];
        sum += diff * diff;
    }
    return std::sqrt(sum);
}

PseudoLabelDistribution pseudo_label_distribution(std::span<const double> histogram) {
    double total = 0.0;
    for (double h : histogram) {
        if (!(h >= 0.0)) {
            throw InvalidInput("pseudo_label_distribution: histogram entries must be >= 0");
        }
        total += h;
    }
    if (total == 0.0) {
        return {ClassDistribution::uniform(histogram.size()), true};
    }
    return {ClassDistribution::from_counts(histogram, DistributionKind::PseudoLabel), false};
}

} // namespace tcbc
