#include "tcbc/loss_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tcbc {

namespace {

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw InvalidInput(std::string(what) + ": non-finite entry");
        }
    }
}

void require_class(ClassIndex target, std::size_t classes) {
    if (target < 0 || static_cast<std::size_t>(target) >= classes) {
        throw InvalidInput("class index " + std::to_string(target) + " out of range [0, " +
                           std::to_string(classes) + ")");
    }
}

} // namespace

std::vector<double> softmax(std::span<const double> logits) {
    require_finite(logits, "softmax");
    std::vector<double> out(logits.size());
    if (logits.empty()) {
        return out;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - top);
        sum += out[k];
    }
    for (double& p : out) {
        p /= sum;
    }
    return out;
}

double log_sum_exp(std::span<const double> values) {
    const double top = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) {
        sum += std::exp(v - top);
    }
    return top + std::log(sum);
}

std::vector<double> adjust_logits_with_log_prior(std::span<const double> logits,
                                                 const ClassDistribution& prior) {
    if (prior.probs.size() != logits.size()) {
        throw InvalidInput("adjust_logits_with_log_prior: prior has " +
                           std::to_string(prior.probs.size()) + " classes, logits have " +
                           std::to_string(logits.size()));
    }
    std::vector<double> out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (!(prior.probs[k] > 0.0)) {
            throw DomainError("adjust_logits_with_log_prior: prior entry " + std::to_string(k) +
                              " is not strictly positive; smooth the prior first");
        }
        out[k] = logits[k] + std::log(prior.probs[k]);
    }
    return out;
}

CrossEntropy cross_entropy(ClassIndex target, std::span<const double> probs) {
    require_class(target, probs.size());
    const double p = probs[static_cast<std::size_t>(target)];
    if (p < kProbabilityFloor) {
        return {-std::log(kProbabilityFloor), true};
    }
    // -log(1) is -0.0; normalize so a perfect prediction reports +0.
    return {p >= 1.0 ? 0.0 : -std::log(p), false};
}

bool confidence_mask(std::span<const double> weak_probs, double tau_c) {
    return *std::max_element(weak_probs.begin(), weak_probs.end()) >= tau_c;
}

BatchLoss supervised_loss(std::span<const ClassIndex> targets, const Matrix& adjusted_probs) {
    if (targets.size() != adjusted_probs.rows()) {
        throw InvalidInput("supervised_loss: targets and probability rows differ in length");
    }
    if (targets.empty()) {
        return {0.0, true, false};
    }
    BatchLoss loss;
    double sum = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto ce = cross_entropy(targets[i], adjusted_probs.row(i));
        sum += ce.value;
        loss.clamped = loss.clamped || ce.clamped;
    }
    loss.value = sum / static_cast<double>(targets.size());
    return loss;
}

BatchLoss unsupervised_loss(std::span<const ClassIndex> pseudo_targets,
                            std::span<const std::uint8_t> masks,
                            const Matrix& strong_adjusted_probs) {
    if (pseudo_targets.size() != masks.size() ||
        pseudo_targets.size() != strong_adjusted_probs.rows()) {
        throw InvalidInput("unsupervised_loss: pseudo-targets, masks and probabilities differ in length");
    }
    if (pseudo_targets.empty()) {
        return {0.0, true, false};
    }
    BatchLoss loss;
    double sum = 0.0;
    for (std::size_t j = 0; j < pseudo_targets.size(); ++j) {
        if (!masks[j]) {
            continue;
        }
        const auto ce = cross_entropy(pseudo_targets[j], strong_adjusted_probs.row(j));
        sum += ce.value;
        loss.clamped = loss.clamped || ce.clamped;
    }
    loss.value = sum / static_cast<double>(pseudo_targets.size());
    return loss;
}

} // namespace tcbc
