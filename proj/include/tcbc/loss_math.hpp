#pragma once

// Stateless probability/logit operations used by both the training loss and the
// pseudo-labeling pipeline. All functions are pure and thread-safe.

#include <cstdint>
#include <span>
#include <vector>

#include "tcbc/types.hpp"

namespace tcbc {

inline constexpr double kProbabilityFloor = 1e-12;

/// Max-subtracted softmax. Throws InvalidInput on non-finite logits.
std::vector<double> softmax(std::span<const double> logits);

/// log(sum(exp(v))), stabilized.
double log_sum_exp(std::span<const double> values);

/// logits + ln(prior), elementwise. Throws DomainError if any prior entry is <= 0.
std::vector<double> adjust_logits_with_log_prior(std::span<const double> logits,
                                                 const ClassDistribution& prior);

struct CrossEntropy {
    double value = 0.0;
    bool clamped = false; ///< probs[target] fell below kProbabilityFloor
};

CrossEntropy cross_entropy(ClassIndex target, std::span<const double> probs);

/// True iff the largest probability reaches tau_c (inclusive).
bool confidence_mask(std::span<const double> weak_probs, double tau_c);

struct BatchLoss {
    double value = 0.0;
    bool empty_batch = false;
    bool clamped = false;
};

/// Mean cross-entropy over the labeled batch. Rows of `adjusted_probs` are per-sample
/// probabilities that already include the log-prior adjustment.
BatchLoss supervised_loss(std::span<const ClassIndex> targets, const Matrix& adjusted_probs);

/// Mean over the whole unlabeled batch of mask * cross-entropy. Unmasked samples
/// contribute zero but still count in the denominator.
BatchLoss unsupervised_loss(std::span<const ClassIndex> pseudo_targets,
                            std::span<const std::uint8_t> masks,
                            const Matrix& strong_adjusted_probs);

} // namespace tcbc
