#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "tcbc/data_synth.hpp"
#include "tcbc/loss_math.hpp"
#include "tcbc/model.hpp"

using namespace tcbc;

TEST_CASE("forward examples") {
    const Architecture lin{2, 0, 2};
    auto p = ModelParams::zeros(lin);
    Matrix x(1, 2);
    x(0, 0) = 3;
    x(0, 1) = -1;
    CHECK(forward(p, x).data() == std::vector<double>{0, 0});

    p.layers[0].weight(0, 0) = 1;
    p.layers[0].weight(1, 1) = 1;
    CHECK(forward(p, x).data() == std::vector<double>{3, -1});

    Matrix bad(1, 3);
    CHECK_THROWS_AS(forward(p, bad), InvalidInput);
}

TEST_CASE("MLP forward matches a hand-rolled matrix product") {
    const Architecture arch{3, 4, 2};
    std::mt19937_64 rng(31);
    auto p = ModelParams::initialize(arch, 5);
    const auto x = test::random_matrix(7, 3, rng);
    const auto logits = forward(p, x);
    const auto& l1 = p.layers[0];
    const auto& l2 = p.layers[1];
    for (std::size_t i = 0; i < 7; ++i) {
        std::vector<double> h(4);
        for (std::size_t j = 0; j < 4; ++j) {
            double s = l1.bias[j];
            for (std::size_t d = 0; d < 3; ++d) s += l1.weight(j, d) * x(i, d);
            h[j] = s > 0 ? s : 0;
        }
        for (std::size_t k = 0; k < 2; ++k) {
            double s = l2.bias[k];
            for (std::size_t j = 0; j < 4; ++j) s += l2.weight(k, j) * h[j];
            CHECK(logits(i, k) == doctest::Approx(s).epsilon(1e-14));
        }
        const auto one = forward_one(p, x.row(i));
        CHECK(one[0] == logits(i, 0));
        CHECK(one[1] == logits(i, 1));
    }
    CHECK(forward(p, x) == logits);
}

TEST_CASE("finite-difference gradients: labeled, masked unlabeled, combined") {
    std::mt19937_64 rng(32);
    for (bool mlp : {false, true}) {
        for (int trial = 0; trial < 20; ++trial) {
            auto c = test::random_gradcheck_case(rng, mlp);
            CHECK(test::gradcheck_max_relative_error(c) < 1e-5);
            auto only_l = c;
            only_l.batch.strong_x = Matrix(0, c.params.arch.input_dim);
            only_l.batch.pseudo_y.clear();
            only_l.batch.masks.clear();
            if (only_l.batch.labeled_y.empty()) continue;
            CHECK(test::gradcheck_max_relative_error(only_l) < 1e-5);
        }
    }
}

TEST_CASE("single labeled sample, linear model, every parameter") {
    test::GradCheckCase c;
    c.params = ModelParams::zeros({2, 0, 3});
    std::normal_distribution<double> n(0, 1e-2);
    std::mt19937_64 rng(33);
    c.params.for_each_value([&](double& v) { v = n(rng); });
    c.batch.labeled_x = Matrix(1, 2);
    c.batch.labeled_x(0, 0) = 0.7;
    c.batch.labeled_x(0, 1) = -1.3;
    c.batch.labeled_y = {2};
    c.batch.strong_x = Matrix(0, 2);
    c.prior = ClassDistribution{{0.6, 0.3, 0.1}, DistributionKind::EstimatedTrain};
    CHECK(test::gradcheck_max_relative_error(c) < 1e-5);
}

TEST_CASE("backward_step edge cases") {
    auto p = ModelParams::initialize({2, 4, 3}, 1);
    const auto before = p;
    std::mt19937_64 rng(34);
    SslBatch batch{test::random_matrix(4, 2, rng), {0, 1, 2, 0}, test::random_matrix(3, 2, rng), {1, 1, 0}, {1, 0, 1}};
    const auto prior = ClassDistribution::uniform(3);
    backward_step(p, batch, prior, 1.0, {0.0, 0.0});
    CHECK(p == before);

    SslBatch nothing{Matrix(0, 2), {}, test::random_matrix(3, 2, rng), {1, 1, 0}, {0, 0, 0}};
    backward_step(p, nothing, prior, 1.0, {0.1, 0.0});
    CHECK(p == before);

    backward_step(p, batch, prior, 1.0, {0.1, 0.0});
    CHECK_FALSE(p == before);

    auto broken = before;
    broken.layers[0].weight(0, 0) = std::nan("");
    const auto snapshot = broken;
    CHECK_THROWS_AS(backward_step(broken, batch, prior, 1.0, {0.1, 0.0}), NumericalFailure);
    CHECK(broken.layers[1] == snapshot.layers[1]);
}

TEST_CASE("EMA update") {
    const Architecture arch{2, 0, 2};
    auto params = ModelParams::zeros(arch);
    params.for_each_value([](double& v) { v = 2.0; });

    EmaParams zero{ModelParams::zeros(arch), 0.0};
    ema_update(zero, params);
    CHECK(zero.shadow == params);

    EmaParams slow{ModelParams::zeros(arch), 1.0 - 1e-9};
    ema_update(slow, params);
    slow.shadow.for_each_value([](double v) { CHECK(std::abs(v) < 1e-8); });

    EmaParams half{ModelParams::zeros(arch), 0.5};
    ema_update(half, params);
    half.shadow.for_each_value([](double v) { CHECK(v == 1.0); });

    // Affine: scaling params by c scales the increment by c.
    EmaParams a{ModelParams::zeros(arch), 0.9};
    EmaParams b{ModelParams::zeros(arch), 0.9};
    auto scaled = params;
    scaled.for_each_value([](double& v) { v *= 3.0; });
    ema_update(a, params);
    ema_update(b, scaled);
    std::vector<double> va, vb;
    a.shadow.for_each_value([&](double v) { va.push_back(v); });
    b.shadow.for_each_value([&](double v) { vb.push_back(v); });
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(vb[i] == doctest::Approx(3.0 * va[i]));
}

TEST_CASE("predict_balanced") {
    const auto zero = ModelParams::zeros({2, 0, 3});
    const auto pred = predict_balanced(zero, std::vector<double>{1.5, -2});
    CHECK(pred.label == 0);
    for (double v : pred.probs) CHECK(v == doctest::Approx(1.0 / 3));

    auto p = ModelParams::zeros({1, 0, 3});
    p.layers[0].bias = {2, 1, 0};
    CHECK(predict_balanced(p, std::vector<double>{0}).label == 0);

    // A common shift of the final-layer bias leaves every prediction unchanged.
    std::mt19937_64 rng(35);
    auto mlp = ModelParams::initialize({2, 6, 4}, 9);
    auto shifted = mlp;
    for (auto& b : shifted.layers.back().bias) b += 7.5;
    const auto x = test::random_matrix(50, 2, rng);
    CHECK(predict_labels(mlp, x) == predict_labels(shifted, x));
}

TEST_CASE("separable balanced toy reaches 100% train accuracy") {
    ImbalanceSpec spec{2, 100, 1, 1.0, 1.0, 4};
    const auto data = generate(spec, {2, 12.0, 0});
    for (std::size_t hidden : {0u, 8u}) {
        auto params = ModelParams::initialize({2, hidden, 2}, 3);
        SslBatch batch{data.labeled_x, data.labeled_y, Matrix(0, 2), {}, {}};
        for (int step = 0; step < 300; ++step) {
            backward_step(params, batch, ClassDistribution::uniform(2), 1.0, {0.1, 0.0});
        }
        CHECK(predict_labels(params, data.labeled_x) == data.labeled_y);
    }
}
