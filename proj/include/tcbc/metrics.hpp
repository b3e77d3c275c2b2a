#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tcbc/types.hpp"

namespace tcbc {

/// K x K counts; rows are true classes, columns are predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes);

    std::size_t classes() const { return classes_; }
    std::int64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
    std::int64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }

    std::int64_t row_sum(std::size_t truth) const;
    std::int64_t total() const;
    std::int64_t trace() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t classes_;
    std::vector<std::int64_t> counts_;
};

ConfusionMatrix confusion(std::span<const ClassIndex> truth, std::span<const ClassIndex> predicted,
                          std::size_t classes);

/// recall[i] = cm(i, i) / row_sum(i); NaN for classes with no samples.
std::vector<double> per_class_recall(const ConfusionMatrix& cm);
bool has_empty_rows(const ConfusionMatrix& cm);

/// Mean per-class recall (NaN if some class has no samples).
double balanced_accuracy(const ConfusionMatrix& cm);
double top1_accuracy(const ConfusionMatrix& cm);

double l2_distribution_distance(const ClassDistribution& a, const ClassDistribution& b);

struct PseudoLabelDistribution {
    ClassDistribution dist;
    bool empty_histogram = false; ///< all-zero input; dist is Uniform
};

PseudoLabelDistribution pseudo_label_distribution(std::span<const double> histogram);

} // namespace tcbc
