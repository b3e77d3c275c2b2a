#include "tcbc/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace tcbc {

void ImbalanceSpec::validate() const {
    if (classes < 2) {
        throw InvalidInput("imbalance spec: classes must be >= 2");
    }
    if (n1 < 1 || m1 < 1) {
        throw InvalidInput("imbalance spec: head counts n1 and m1 must be >= 1");
    }
    if (!std::isfinite(gamma_l) || !(gamma_l > 0.0) || !std::isfinite(gamma_u) ||
        !(gamma_u > 0.0)) {
        throw InvalidInput("imbalance spec: imbalance ratios must be finite and > 0");
    }
}

std::vector<std::int64_t> longtail_counts(std::int64_t n1, double gamma, std::size_t classes,
                                          bool* clamped) {
    if (n1 < 1 || classes < 2 || !(gamma > 0.0) || !std::isfinite(gamma)) {
        throw InvalidInput("longtail_counts: need n1 >= 1, gamma > 0 and classes >= 2");
    }
    std::vector<std::int64_t> counts(classes);
    bool any_clamped = false;
    for (std::size_t k = 0; k < classes; ++k) {
        const double exponent = static_cast<double>(k) / static_cast<double>(classes - 1);
        const double raw = static_cast<double>(n1) * std::pow(gamma, -exponent);
        auto c = static_cast<std::int64_t>(std::floor(raw + 0.5));
        if (c < 1) {
            c = 1;
            any_clamped = true;
        }
        counts[k] = c;
    }
    if (clamped) {
        *clamped = any_clamped;
    }
    return counts;
}

std::vector<std::int64_t> split_counts(std::int64_t max_count, double gamma, std::size_t classes) {
    if (gamma >= 1.0) {
        return longtail_counts(max_count, gamma, classes);
    }
    auto counts = longtail_counts(max_count, 1.0 / gamma, classes);
    std::reverse(counts.begin(), counts.end());
    return counts;
}

Matrix class_means(std::size_t classes, std::size_t dim, double separation) {
    if (dim < 2) {
        throw InvalidInput("class_means: dim must be >= 2");
    }
    // Chord between adjacent points on a circle of radius r is 2 r sin(pi / K).
    const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
    Matrix means(classes, dim);
    for (std::size_t k = 0; k < classes; ++k) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
        means(k, 0) = radius * std::cos(angle);
        means(k, 1) = radius * std::sin(angle);
    }
    return means;
}

namespace {

enum class Split : std::uint64_t { Labeled = 1, Unlabeled = 2, Test = 3 };

void sample_split(const Matrix& means, std::span<const std::int64_t> counts, Split split,
                  std::uint64_t seed, Matrix& xs, std::vector<ClassIndex>& ys) {
    const std::size_t dim = means.cols();
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    xs = Matrix(static_cast<std::size_t>(total), dim);
    ys.resize(static_cast<std::size_t>(total));
    std::size_t row = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        SplitMix64 rng(derive_seed({seed, static_cast<std::uint64_t>(split), k}));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::int64_t n = 0; n < counts[k]; ++n, ++row) {
            for (std::size_t d = 0; d < dim; ++d) {
                xs(row, d) = means(k, d) + normal(rng);
            }
            ys[row] = static_cast<ClassIndex>(k);
        }
    }
}

} // namespace

SyntheticSSLDataset generate(const ImbalanceSpec& spec, const GenerateOptions& options) {
    spec.validate();
    if (options.dim < 2) {
        throw InvalidInput("generate: dim must be >= 2");
    }
    if (options.test_per_class < 0) {
        throw InvalidInput("generate: test_per_class must be >= 0");
    }
    SyntheticSSLDataset ds;
    ds.spec = spec;
    ds.dim = options.dim;
    ds.separation = options.separation;
    ds.test_per_class = options.test_per_class;
    ds.class_means = class_means(spec.classes, options.dim, options.separation);

    const auto labeled = split_counts(spec.n1, spec.gamma_l, spec.classes);
    const auto unlabeled = split_counts(spec.m1, spec.gamma_u, spec.classes);
    const std::vector<std::int64_t> test(spec.classes, options.test_per_class);
    sample_split(ds.class_means, labeled, Split::Labeled, spec.seed, ds.labeled_x, ds.labeled_y);
    sample_split(ds.class_means, unlabeled, Split::Unlabeled, spec.seed, ds.unlabeled_x,
                 ds.unlabeled_hidden_y);
    sample_split(ds.class_means, test, Split::Test, spec.seed, ds.test_x, ds.test_y);
    return ds;
}

ClassDistribution label_distribution(std::span<const ClassIndex> labels, std::size_t classes,
                                     DistributionKind kind) {
    std::vector<double> counts(classes, 0.0);
    for (ClassIndex y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw InvalidInput("label_distribution: label out of range");
        }
        counts[static_cast<std::size_t>(y)] += 1.0;
    }
    return ClassDistribution::from_counts(counts, kind);
}

void AugmentationPolicy::validate() const {
    const bool identity_policy = weak_sigma == 0.0 && strong_sigma == 0.0;
    if (weak_sigma < 0.0 || strong_sigma < 0.0 || (!identity_policy && !(weak_sigma < strong_sigma))) {
        throw InvalidInput("augmentation: need 0 <= weak_sigma < strong_sigma");
    }
    if (strong_dropout_p < 0.0 || strong_dropout_p > 1.0) {
        throw InvalidInput("augmentation: dropout probability must lie in [0, 1]");
    }
    if (!(strong_scale_min <= strong_scale_max) || strong_scale_min < 0.0) {
        throw InvalidInput("augmentation: invalid scale range");
    }
}

AugmentationPolicy AugmentationPolicy::identity() {
    return {0.0, 0.0, 0.0, 1.0, 1.0};
}

void weak_augment(std::span<const double> x, const AugmentationPolicy& policy, SplitMix64& rng,
                  std::span<double> out) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t d = 0; d < x.size(); ++d) {
        out[d] = policy.weak_sigma == 0.0 ? x[d] : x[d] + policy.weak_sigma * normal(rng);
    }
}

void strong_augment(std::span<const double> x, const AugmentationPolicy& policy, SplitMix64& rng,
                    std::span<double> out) {
    std::normal_distribution<double> normal(0.0, 1.0);
    double scale = 1.0;
    if (policy.strong_scale_max > policy.strong_scale_min) {
        scale = policy.strong_scale_min +
                (policy.strong_scale_max - policy.strong_scale_min) * uniform01(rng);
    } else {
        scale = policy.strong_scale_min;
    }
    for (std::size_t d = 0; d < x.size(); ++d) {
        double v = scale * x[d];
        if (policy.strong_sigma != 0.0) {
            v += policy.strong_sigma * normal(rng);
        }
        if (policy.strong_dropout_p > 0.0 && uniform01(rng) < policy.strong_dropout_p) {
            v = 0.0;
        }
        out[d] = v;
    }
}

} // namespace tcbc
