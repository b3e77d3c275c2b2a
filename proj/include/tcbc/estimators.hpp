#pragma once

// Stateful estimators behind the two corrections:
//  * SlidingClassCounter tracks the class distribution of the samples that actually
//    participated in training over the last T iterations (the prior used for logit
//    adjustment).
//  * BiasEstimate tracks, with momentum, the per-class log-ratio between that prior and
//    the class marginal the current model predicts. Adding it to the logits of a weak
//    view yields the refined pseudo-label.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "tcbc/types.hpp"

namespace tcbc {

inline constexpr double kDefaultPriorSmoothing = 1e-3;

/// count(y) = #labeled with y + lambda * #(masked unlabeled with pseudo-label y).
std::vector<double> effective_batch_count(std::span<const ClassIndex> labeled_targets,
                                          std::span<const ClassIndex> pseudo_targets,
                                          std::span<const std::uint8_t> masks, double lambda,
                                          std::size_t classes);

/// FIFO window of per-iteration class counts with an incrementally maintained column sum.
class SlidingClassCounter {
public:
    SlidingClassCounter(std::size_t classes, std::size_t capacity);

    void push(std::span<const double> counts);

    std::size_t classes() const { return classes_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return window_.size(); }
    bool empty() const { return window_.empty(); }
    bool full() const { return window_.size() == capacity_; }

    const std::vector<double>& total() const { return total_; }
    const std::deque<std::vector<double>>& window() const { return window_; }

    /// Pushes since the running total was last recomputed from scratch.
    std::size_t pushes_since_rebuild() const { return pushes_since_rebuild_; }

    /// Restores an exact state (used by checkpoint loading).
    void restore(std::deque<std::vector<double>> window, std::vector<double> total,
                 std::size_t pushes_since_rebuild);

private:
    void rebuild();

    std::size_t classes_;
    std::size_t capacity_;
    std::deque<std::vector<double>> window_;
    std::vector<double> total_;
    std::size_t pushes_since_rebuild_ = 0;
};

/// Smoothed prior (total[y] + eps) / (sum + K*eps). Uniform while the window is empty.
ClassDistribution estimated_ptr(const SlidingClassCounter& counter,
                                double epsilon = kDefaultPriorSmoothing);

/// One-batch estimate of the bias vector:
///   d'[y] = -ln mean_i( exp(f_y(x_i)) / sum_k exp(f_k(x_i) + ln ptr[k]) ).
/// Returns nullopt for an empty batch (the caller skips the momentum step).
std::optional<std::vector<double>> batch_bias_sample(const Matrix& logits,
                                                     const ClassDistribution& ptr);

/// Momentum-averaged bias vector. The first sample is adopted as-is.
class BiasEstimate {
public:
    BiasEstimate(std::size_t classes, double momentum);

    void update(std::span<const double> d_prime);

    const std::vector<double>& values() const { return d_; }
    double momentum() const { return momentum_; }
    bool initialized() const { return initialized_; }

    void restore(std::vector<double> d, bool initialized);

private:
    std::vector<double> d_;
    double momentum_;
    bool initialized_ = false;
};

struct RefinedLabel {
    ClassIndex label = 0;
    std::vector<double> probs;
};

/// argmax and softmax of (logits + d). Ties go to the lowest class index.
RefinedLabel refine_pseudo_label(std::span<const double> logits, std::span<const double> bias);

} // namespace tcbc
