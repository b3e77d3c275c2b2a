#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tcbc/kernels.hpp"
#include "tcbc/model.hpp"
#include "tcbc/trainer.hpp"

using namespace tcbc;

namespace {

struct ThreadLimit {
    explicit ThreadLimit(int n) { kernels::set_thread_limit(n); }
    ~ThreadLimit() { kernels::set_thread_limit(0); }
};

} // namespace

TEST_CASE("OpenMP kernels are bit-identical to the serial reference") {
    std::mt19937_64 rng(41);
    for (std::size_t rows : {1u, 7u, 255u, 256u, 1031u}) {
        const auto in = test::random_matrix(rows, 9, rng);
        const auto w = test::random_matrix(6, 9, rng);
        const auto b = test::random_matrix(1, 6, rng).data();
        const auto delta = test::random_matrix(rows, 6, rng);
        const auto pre = test::random_matrix(rows, 9, rng);
        for (int threads : {1, 2, 3, 8}) {
            ThreadLimit limit(threads);
            Matrix so, oo;
            kernels::serial::affine(in, w, b, so);
            kernels::omp::affine(in, w, b, oo);
            CHECK(so == oo);

            Matrix sr, orr;
            kernels::serial::relu(in, sr);
            kernels::omp::relu(in, orr);
            CHECK(sr == orr);

            Matrix sgw, ogw;
            std::vector<double> sgb, ogb;
            kernels::serial::weight_gradient(delta, in, sgw, sgb);
            kernels::omp::weight_gradient(delta, in, ogw, ogb);
            CHECK(sgw == ogw);
            CHECK(sgb == ogb);

            Matrix sd, od;
            kernels::serial::backprop_relu(delta, w, pre, sd);
            kernels::omp::backprop_relu(delta, w, pre, od);
            CHECK(sd == od);

            std::vector<ClassIndex> sa, oa;
            kernels::serial::argmax_rows(in, sa);
            kernels::omp::argmax_rows(in, oa);
            CHECK(sa == oa);
        }
    }
}

TEST_CASE("training trajectories agree across backends and thread counts") {
    const ImbalanceSpec spec{4, 200, 400, 10.0, 1.0, 3};
    const auto data = generate(spec, {5, 3.0, 50});
    TrainConfig config;
    config.iterations = 40;
    config.hidden = 16;
    config.labeled_batch = 300; // above the parallel cutoff
    config.unlabeled_batch = 300;
    config.backend = Backend::Serial;
    const auto reference = run(config, data);
    for (int threads : {1, 2, 5}) {
        ThreadLimit limit(threads);
        config.backend = Backend::OpenMP;
        const auto parallel = run(config, data);
        CHECK(parallel.trace == reference.trace);
        CHECK(parallel.final_params == reference.final_params);
        CHECK(parallel.final_ema == reference.final_ema);
    }
}

TEST_CASE("batch sampling does not depend on the thread count") {
    const auto data = generate({3, 100, 300, 10.0, 10.0, 1}, {2, 3.0, 10});
    TrainConfig config;
    config.labeled_batch = 500;
    config.unlabeled_batch = 700;
    std::pair<LabeledBatch, UnlabeledBatch> reference;
    {
        ThreadLimit limit(1);
        reference = sample_batches(data, config, 17);
    }
    for (int threads : {2, 4, 7}) {
        ThreadLimit limit(threads);
        const auto b = sample_batches(data, config, 17);
        CHECK(b.first.x == reference.first.x);
        CHECK(b.first.y == reference.first.y);
        CHECK(b.second.weak == reference.second.weak);
        CHECK(b.second.strong == reference.second.strong);
    }
}
