#pragma once

// Central finite differences of L_s + lambda * L_u against the analytic gradient.

#include <algorithm>
#include <cmath>
#include <random>

#include "support.hpp"
#include "tcbc/model.hpp"

namespace tcbc::test {

struct GradCheckCase {
    ModelParams params;
    SslBatch batch;
    ClassDistribution prior;
    double lambda = 1.0;
};

/// Random instance with parameters at 1e-2 scale. MLP instances whose hidden
/// pre-activations sit within `kink_margin` of zero are redrawn, since the finite
/// difference would straddle the ReLU kink there.
inline GradCheckCase random_gradcheck_case(std::mt19937_64& rng, bool mlp, double kink_margin = 2e-3) {
    std::uniform_int_distribution<std::size_t> dim(2, 5), classes(2, 5), hidden(3, 8), batch(0, 6);
    for (;;) {
        GradCheckCase c;
        const Architecture arch{dim(rng), mlp ? hidden(rng) : 0, classes(rng)};
        c.params = ModelParams::zeros(arch);
        std::normal_distribution<double> normal(0.0, 1e-2);
        c.params.for_each_value([&](double& v) { v = normal(rng); });

        std::size_t n_l = batch(rng);
        std::size_t n_u = batch(rng);
        if (n_l + n_u == 0) n_l = 1;
        c.batch.labeled_x = random_matrix(n_l, arch.input_dim, rng);
        c.batch.strong_x = random_matrix(n_u, arch.input_dim, rng);
        for (std::size_t i = 0; i < n_l; ++i) c.batch.labeled_y.push_back(static_cast<ClassIndex>(rng() % arch.classes));
        for (std::size_t j = 0; j < n_u; ++j) {
            c.batch.pseudo_y.push_back(static_cast<ClassIndex>(rng() % arch.classes));
            c.batch.masks.push_back(static_cast<std::uint8_t>(rng() % 2));
        }
        c.prior = random_distribution(arch.classes, rng);
        c.lambda = std::uniform_real_distribution<double>(0.25, 2.0)(rng);

        if (mlp) {
            bool near_kink = false;
            for (const Matrix* x : {&c.batch.labeled_x, &c.batch.strong_x}) {
                if (x->rows() == 0) continue;
                const auto cache = forward_cached(c.params, *x);
                for (double v : cache.pre.front().data()) near_kink = near_kink || std::abs(v) < kink_margin;
            }
            if (near_kink) continue;
        }
        return c;
    }
}

/// Largest elementwise relative error |a - n| / max(|a|, |n|, floor).
inline double gradcheck_max_relative_error(const GradCheckCase& c, double h = 1e-4, double floor = 1e-8) {
    const auto analytic = loss_and_gradient(c.params, c.batch, c.prior, c.lambda);
    std::vector<double> grads;
    analytic.gradient.for_each_value([&](double g) { grads.push_back(g); });

    ModelParams probe = c.params;
    std::vector<double*> slots;
    probe.for_each_value([&](double& v) { slots.push_back(&v); });

    double worst = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const double original = *slots[i];
        *slots[i] = original + h;
        const double up = loss_and_gradient(probe, c.batch, c.prior, c.lambda).total;
        *slots[i] = original - h;
        const double down = loss_and_gradient(probe, c.batch, c.prior, c.lambda).total;
        *slots[i] = original;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(grads[i]), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(grads[i] - numeric) / scale);
    }
    return worst;
}

} // namespace tcbc::test
