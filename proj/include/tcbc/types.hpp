#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcbc {

using ClassIndex = int;

/// Thrown for malformed arguments: wrong shapes, out-of-range labels, non-finite input.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a value lies outside the mathematical domain of an operation (e.g. ln 0).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Thrown when training produces a non-finite loss or parameter.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Rows are samples, columns are features or classes.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void append_row(std::span<const double> values);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

enum class DistributionKind { TrueLabeled, TrueUnlabeled, EstimatedTrain, PseudoLabel, Uniform };

std::string to_string(DistributionKind kind);

/// Probability vector over K classes, tagged with where it came from.
struct ClassDistribution {
    std::vector<double> probs;
    DistributionKind kind = DistributionKind::Uniform;

    static ClassDistribution uniform(std::size_t classes);
    /// Normalizes non-negative counts. All-zero counts yield Uniform.
    static ClassDistribution from_counts(std::span<const double> counts, DistributionKind kind);

    std::size_t classes() const { return probs.size(); }
};

/// Throws InvalidInput unless `probs` is a valid probability vector (non-negative, sums to 1 within 1e-9).
void validate_probabilities(std::span<const double> probs);

/// Lowest index among the maxima.
ClassIndex argmax(std::span<const double> values);

} // namespace tcbc
