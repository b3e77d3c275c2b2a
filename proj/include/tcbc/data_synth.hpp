#pragma once

// Synthetic long-tailed SSL benchmarks: isotropic Gaussian classes whose labeled and
// unlabeled sizes decay exponentially from the head class with independent imbalance
// ratios, plus weak/strong corruption analogs of image augmentation.

#include <cstdint>
#include <span>
#include <vector>

#include "tcbc/rng.hpp"
#include "tcbc/types.hpp"

namespace tcbc {

struct ImbalanceSpec {
    std::size_t classes = 10;
    std::int64_t n1 = 1500;  ///< labeled head-class count
    std::int64_t m1 = 3000;  ///< unlabeled head-class count
    double gamma_l = 100.0;  ///< labeled imbalance ratio
    double gamma_u = 100.0;  ///< unlabeled imbalance ratio; < 1 reverses the order
    std::uint64_t seed = 0;

    void validate() const;
};

/// counts[k] = round_half_up(n1 * gamma^(-k / (K - 1))), clamped to >= 1.
/// `clamped` (optional) reports whether any count had to be raised to 1.
std::vector<std::int64_t> longtail_counts(std::int64_t n1, double gamma, std::size_t classes,
                                          bool* clamped = nullptr);

/// Per-class sizes of one split. gamma >= 1: longtail_counts(max_count, gamma).
/// gamma < 1 (reversed): the long tail of ratio 1/gamma read backwards, so the last
/// class holds max_count and the first class max_count * gamma.
std::vector<std::int64_t> split_counts(std::int64_t max_count, double gamma, std::size_t classes);

struct SyntheticSSLDataset {
    ImbalanceSpec spec;
    std::size_t dim = 2;
    double separation = 3.0;
    std::int64_t test_per_class = 0;
    Matrix class_means; ///< K x D; covariance is the identity for every class

    Matrix labeled_x;
    std::vector<ClassIndex> labeled_y;
    Matrix unlabeled_x;
    std::vector<ClassIndex> unlabeled_hidden_y; ///< for metrics only, never read by the trainer
    Matrix test_x;
    std::vector<ClassIndex> test_y;

    std::size_t classes() const { return spec.classes; }
};

struct GenerateOptions {
    std::size_t dim = 2;
    double separation = 3.0;
    std::int64_t test_per_class = 500;
};

/// Pure function of (spec, options): identical inputs give bit-identical datasets.
SyntheticSSLDataset generate(const ImbalanceSpec& spec, const GenerateOptions& options);

/// Class means on a circle in the first two coordinates, adjacent means `separation` apart.
Matrix class_means(std::size_t classes, std::size_t dim, double separation);

/// Normalized class histogram of labels (true distributions for diagnostics).
ClassDistribution label_distribution(std::span<const ClassIndex> labels, std::size_t classes,
                                     DistributionKind kind);

struct AugmentationPolicy {
    double weak_sigma = 0.1;
    double strong_sigma = 0.5;
    double strong_dropout_p = 0.1;
    double strong_scale_min = 0.8;
    double strong_scale_max = 1.2;

    void validate() const;
    /// Every knob zero (scale range pinned to 1): both views equal the input.
    static AugmentationPolicy identity();
};

/// x + N(0, weak_sigma^2 I)
void weak_augment(std::span<const double> x, const AugmentationPolicy& policy, SplitMix64& rng,
                  std::span<double> out);

/// Scale jitter, additive N(0, strong_sigma^2 I), then per-coordinate dropout.
void strong_augment(std::span<const double> x, const AugmentationPolicy& policy, SplitMix64& rng,
                    std::span<double> out);

} // namespace tcbc
