#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tcbc/estimators.hpp"
#include "tcbc/loss_math.hpp"

using namespace tcbc;

TEST_CASE("effective_batch_count") {
    using V = std::vector<ClassIndex>;
    using M = std::vector<std::uint8_t>;
    CHECK(effective_batch_count(V{0, 0, 1}, V{}, M{}, 1.0, 2) == std::vector<double>{2, 1});
    CHECK(effective_batch_count(V{}, V{0, 1}, M{1, 0}, 1.0, 2) == std::vector<double>{1, 0});
    CHECK(effective_batch_count(V{0}, V{1, 1}, M{1, 1}, 0.5, 2) == std::vector<double>{1, 1});
    CHECK_THROWS_AS(effective_batch_count(V{2}, V{}, M{}, 1.0, 2), InvalidInput);
    CHECK_THROWS_AS(effective_batch_count(V{}, V{0}, M{}, 1.0, 2), InvalidInput);
}

TEST_CASE("SlidingClassCounter FIFO") {
    SlidingClassCounter c(2, 2);
    CHECK(c.empty());
    c.push(std::vector<double>{2, 1});
    CHECK(c.total() == std::vector<double>{2, 1});

    SlidingClassCounter t(2, 2);
    t.push(std::vector<double>{1, 0});
    t.push(std::vector<double>{0, 1});
    t.push(std::vector<double>{1, 1});
    CHECK(t.size() == 2);
    CHECK(t.full());
    CHECK(t.total() == std::vector<double>{1, 2});
}

TEST_CASE("estimated_ptr") {
    SlidingClassCounter empty(3, 5);
    const auto u = estimated_ptr(empty, 1e-3);
    CHECK(u.kind == DistributionKind::Uniform);
    for (double p : u.probs) CHECK(p == doctest::Approx(1.0 / 3));

    SlidingClassCounter c(2, 5);
    c.push(std::vector<double>{3, 1});
    auto p = estimated_ptr(c, 0.0);
    CHECK(p.kind == DistributionKind::EstimatedTrain);
    CHECK(p.probs[0] == doctest::Approx(0.75));
    CHECK(p.probs[1] == doctest::Approx(0.25));

    SlidingClassCounter s(2, 5);
    s.push(std::vector<double>{0, 4});
    p = estimated_ptr(s, 1.0);
    CHECK(p.probs[0] == doctest::Approx(1.0 / 6));
    CHECK(p.probs[1] == doctest::Approx(5.0 / 6));

    // A class missing from the window keeps a positive prior under smoothing.
    SlidingClassCounter z(3, 5);
    z.push(std::vector<double>{4, 0, 0});
    for (double v : estimated_ptr(z).probs) CHECK(v > 0.0);
}

TEST_CASE("batch_bias_sample examples") {
    Matrix zeros(4, 3);
    auto d = batch_bias_sample(zeros, ClassDistribution::uniform(3));
    REQUIRE(d);
    for (double v : *d) CHECK(std::abs(v) <= 1e-15);

    const ClassDistribution prior{{0.75, 0.25}, DistributionKind::EstimatedTrain};
    Matrix one(1, 2);
    one(0, 0) = 1;
    d = batch_bias_sample(one, prior);
    REQUIRE(d);
    CHECK(std::abs((*d)[0] - -0.17201106075713019) <= 1e-9);
    CHECK(std::abs((*d)[1] - 0.8279889392428699) <= 1e-9);
    // The rounded values as usually quoted; only good to about 1e-4.
    CHECK(std::abs((*d)[0] - -0.17203) <= 1e-4);
    CHECK(std::abs((*d)[1] - 0.82806) <= 1e-4);

    Matrix two(2, 2);
    two(0, 0) = 1;
    two(1, 0) = 1;
    const auto d2 = batch_bias_sample(two, prior);
    CHECK(std::abs((*d2)[0] - (*d)[0]) <= 1e-15);
    CHECK(std::abs((*d2)[1] - (*d)[1]) <= 1e-15);

    CHECK_FALSE(batch_bias_sample(Matrix(0, 2), prior).has_value());
}

TEST_CASE("property: both algebraic routes to d' agree") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + trial % 9;
        const std::size_t n = 1 + static_cast<std::size_t>(rng() % 40);
        const auto logits = test::random_matrix(n, k, rng, 3.0);
        const auto prior = test::random_distribution(k, rng);
        const auto d = batch_bias_sample(logits, prior);
        REQUIRE(d);
        std::vector<double> mean(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = softmax(adjust_logits_with_log_prior(logits.row(i), prior));
            for (std::size_t y = 0; y < k; ++y) mean[y] += p[y] / static_cast<double>(n);
        }
        for (std::size_t y = 0; y < k; ++y) {
            CHECK(std::abs((*d)[y] - (std::log(prior.probs[y]) - std::log(mean[y]))) <= 1e-9);
        }
    }
}

TEST_CASE("BiasEstimate momentum") {
    BiasEstimate b(2, 0.9);
    CHECK_FALSE(b.initialized());
    CHECK(b.values() == std::vector<double>{0, 0});
    b.update(std::vector<double>{1, -1});
    CHECK(b.initialized());
    CHECK(b.values() == std::vector<double>{1, -1});

    BiasEstimate blend(2, 0.9);
    blend.restore({0, 0}, true);
    blend.update(std::vector<double>{1, 1});
    CHECK(blend.values()[0] == doctest::Approx(0.1));
    CHECK(blend.values()[1] == doctest::Approx(0.1));

    BiasEstimate none(2, 0.0);
    none.update(std::vector<double>{5, 5});
    none.update(std::vector<double>{0.25, -3});
    CHECK(none.values() == std::vector<double>{0.25, -3});
}

TEST_CASE("property: momentum update contracts toward the sample") {
    std::mt19937_64 rng(22);
    std::normal_distribution<double> n(0, 2);
    for (double m : {0.0, 0.3, 0.9, 0.999}) {
        BiasEstimate b(4, m);
        b.update(std::vector<double>{n(rng), n(rng), n(rng), n(rng)});
        for (int step = 0; step < 50; ++step) {
            const auto before = b.values();
            const std::vector<double> sample{n(rng), n(rng), n(rng), n(rng)};
            b.update(sample);
            for (std::size_t y = 0; y < 4; ++y) {
                CHECK(std::abs(b.values()[y] - sample[y]) ==
                      doctest::Approx(m * std::abs(before[y] - sample[y])).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("refine_pseudo_label") {
    const std::vector<double> logits{0.4, 0.5};
    CHECK(refine_pseudo_label(logits, std::vector<double>{0, 0}).label == 1);
    CHECK(refine_pseudo_label(logits, std::vector<double>{0.3, 0}).label == 0);
    const auto r = refine_pseudo_label(std::vector<double>{1, 1}, std::vector<double>{0, 0});
    CHECK(r.label == 0);
    CHECK(r.probs[0] == doctest::Approx(0.5));
}

TEST_CASE("property: refinement ignores a common shift of d") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> n(0, 2);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> f(5), d(5);
        for (auto& v : f) v = n(rng);
        for (auto& v : d) v = n(rng);
        auto shifted = d;
        const double c = n(rng) * 10;
        for (auto& v : shifted) v += c;
        CHECK(refine_pseudo_label(f, d).label == refine_pseudo_label(f, shifted).label);
        CHECK(refine_pseudo_label(f, std::vector<double>(5, 0.0)).label == argmax(f));
    }
}

TEST_CASE("property: counter totals equal a brute-force recount") {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (std::size_t capacity : {1u, 3u, 17u, 150u}) {
        SlidingClassCounter c(4, capacity);
        for (int step = 0; step < 2000; ++step) {
            std::vector<double> counts(4);
            for (auto& v : counts) v = step % 7 == 0 ? 0.0 : u(rng);
            c.push(counts);
            CHECK(c.size() <= capacity);
            std::vector<double> brute(4, 0.0);
            for (const auto& e : c.window()) {
                for (std::size_t y = 0; y < 4; ++y) brute[y] += e[y];
            }
            for (std::size_t y = 0; y < 4; ++y) {
                CHECK(std::abs(c.total()[y] - brute[y]) <= 1e-9);
                CHECK(c.total()[y] >= 0.0);
            }
            validate_probabilities(estimated_ptr(c).probs);
        }
    }
}
