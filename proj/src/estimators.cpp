#include "tcbc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tcbc/loss_math.hpp"

namespace tcbc {

std::vector<double> effective_batch_count(std::span<const ClassIndex> labeled_targets,
                                          std::span<const ClassIndex> pseudo_targets,
                                          std::span<const std::uint8_t> masks, double lambda,
                                          std::size_t classes) {
    if (pseudo_targets.size() != masks.size()) {
        throw InvalidInput("effective_batch_count: pseudo-targets and masks differ in length");
    }
    if (!(lambda >= 0.0)) {
        throw InvalidInput("effective_batch_count: lambda must be >= 0");
    }
    auto check = [classes](ClassIndex y) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw InvalidInput("effective_batch_count: class index " + std::to_string(y) +
                               " out of range");
        }
        return static_cast<std::size_t>(y);
    };
    std::vector<double> counts(classes, 0.0);
    for (ClassIndex y : labeled_targets) {
        counts[check(y)] += 1.0;
    }
    // Accumulate masked pseudo-labels as integers first so lambda scales an exact count.
    std::vector<double> pseudo(classes, 0.0);
    for (std::size_t j = 0; j < pseudo_targets.size(); ++j) {
        const auto y = check(pseudo_targets[j]);
        if (masks[j]) {
            pseudo[y] += 1.0;
        }
    }
    for (std::size_t k = 0; k < classes; ++k) {
        counts[k] += lambda * pseudo[k];
    }
    return counts;
}

SlidingClassCounter::SlidingClassCounter(std::size_t classes, std::size_t capacity)
    : classes_(classes), capacity_(capacity), total_(classes, 0.0) {
    if (classes < 2) {
        throw InvalidInput("SlidingClassCounter: class count must be >= 2");
    }
    if (capacity < 1) {
        throw InvalidInput("SlidingClassCounter: capacity must be >= 1");
    }
}

void SlidingClassCounter::push(std::span<const double> counts) {
    if (counts.size() != classes_) {
        throw InvalidInput("SlidingClassCounter::push: wrong class count");
    }
    for (double c : counts) {
        if (!(c >= 0.0) || !std::isfinite(c)) {
            throw InvalidInput("SlidingClassCounter::push: counts must be finite and >= 0");
        }
    }
    window_.emplace_back(counts.begin(), counts.end());
    for (std::size_t k = 0; k < classes_; ++k) {
        total_[k] += counts[k];
    }
    if (window_.size() > capacity_) {
        const auto& oldest = window_.front();
        for (std::size_t k = 0; k < classes_; ++k) {
            total_[k] -= oldest[k];
        }
        window_.pop_front();
    }
    // Incremental add/subtract drifts for non-integer counts; recompute once per window.
    if (++pushes_since_rebuild_ >= capacity_) {
        rebuild();
    }
}

void SlidingClassCounter::rebuild() {
    std::fill(total_.begin(), total_.end(), 0.0);
    for (const auto& entry : window_) {
        for (std::size_t k = 0; k < classes_; ++k) {
            total_[k] += entry[k];
        }
    }
    pushes_since_rebuild_ = 0;
}

void SlidingClassCounter::restore(std::deque<std::vector<double>> window,
                                  std::vector<double> total, std::size_t pushes_since_rebuild) {
    if (window.size() > capacity_ || total.size() != classes_) {
        throw InvalidInput("SlidingClassCounter::restore: state does not match counter shape");
    }
    for (const auto& entry : window) {
        if (entry.size() != classes_) {
            throw InvalidInput("SlidingClassCounter::restore: window entry has wrong class count");
        }
    }
    window_ = std::move(window);
    total_ = std::move(total);
    pushes_since_rebuild_ = pushes_since_rebuild;
}

ClassDistribution estimated_ptr(const SlidingClassCounter& counter, double epsilon) {
    const std::size_t classes = counter.classes();
    if (counter.empty()) {
        return ClassDistribution::uniform(classes);
    }
    const auto& total = counter.total();
    double denom = static_cast<double>(classes) * epsilon;
    for (double t : total) {
        denom += t;
    }
    if (!(denom > 0.0)) {
        return ClassDistribution::uniform(classes);
    }
    ClassDistribution ptr{std::vector<double>(classes), DistributionKind::EstimatedTrain};
    for (std::size_t k = 0; k < classes; ++k) {
        ptr.probs[k] = (total[k] + epsilon) / denom;
    }
    return ptr;
}

std::optional<std::vector<double>> batch_bias_sample(const Matrix& logits,
                                                     const ClassDistribution& ptr) {
    if (logits.rows() == 0) {
        return std::nullopt;
    }
    const std::size_t classes = logits.cols();
    if (ptr.probs.size() != classes) {
        throw InvalidInput("batch_bias_sample: prior class count mismatch");
    }
    std::vector<double> log_prior(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        if (!(ptr.probs[k] > 0.0)) {
            throw DomainError("batch_bias_sample: prior must be strictly positive");
        }
        log_prior[k] = std::log(ptr.probs[k]);
    }

    // terms(i, y) = f_y(x_i) - LSE_k(f_k(x_i) + ln ptr[k]); d'[y] = -(LSE_i terms(i, y) - ln n).
    const std::size_t n = logits.rows();
    Matrix terms(n, classes);
    std::vector<double> shifted(classes);
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = logits.row(i);
        for (std::size_t k = 0; k < classes; ++k) {
            shifted[k] = f[k] + log_prior[k];
        }
        const double lse = log_sum_exp(shifted);
        for (std::size_t y = 0; y < classes; ++y) {
            terms(i, y) = f[y] - lse;
        }
    }
    std::vector<double> d(classes);
    std::vector<double> column(n);
    const double log_n = std::log(static_cast<double>(n));
    for (std::size_t y = 0; y < classes; ++y) {
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = terms(i, y);
        }
        d[y] = -(log_sum_exp(column) - log_n);
    }
    return d;
}

BiasEstimate::BiasEstimate(std::size_t classes, double momentum)
    : d_(classes, 0.0), momentum_(momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw InvalidInput("BiasEstimate: momentum must lie in [0, 1)");
    }
}

void BiasEstimate::update(std::span<const double> d_prime) {
    if (d_prime.size() != d_.size()) {
        throw InvalidInput("BiasEstimate::update: class count mismatch");
    }
    for (double v : d_prime) {
        if (!std::isfinite(v)) {
            throw InvalidInput("BiasEstimate::update: non-finite bias sample");
        }
    }
    if (!initialized_) {
        d_.assign(d_prime.begin(), d_prime.end());
        initialized_ = true;
        return;
    }
    for (std::size_t k = 0; k < d_.size(); ++k) {
        d_[k] = momentum_ * d_[k] + (1.0 - momentum_) * d_prime[k];
    }
}

void BiasEstimate::restore(std::vector<double> d, bool initialized) {
    if (d.size() != d_.size()) {
        throw InvalidInput("BiasEstimate::restore: class count mismatch");
    }
    d_ = std::move(d);
    initialized_ = initialized;
}

RefinedLabel refine_pseudo_label(std::span<const double> logits, std::span<const double> bias) {
    if (logits.size() != bias.size()) {
        throw InvalidInput("refine_pseudo_label: bias has wrong class count");
    }
    std::vector<double> corrected(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        corrected[k] = logits[k] + bias[k];
    }
    RefinedLabel out;
    out.probs = softmax(corrected);
    out.label = argmax(corrected);
    return out;
}

} // namespace tcbc
