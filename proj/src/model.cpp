#include "tcbc/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "tcbc/kernels.hpp"
#include "tcbc/loss_math.hpp"
#include "tcbc/rng.hpp"

namespace tcbc {

namespace {

void affine(const Matrix& in, const Layer& layer, Matrix& out, Backend backend) {
    if (backend == Backend::OpenMP) {
        kernels::omp::affine(in, layer.weight, layer.bias, out);
    } else {
        kernels::serial::affine(in, layer.weight, layer.bias, out);
    }
}

void relu(const Matrix& in, Matrix& out, Backend backend) {
    if (backend == Backend::OpenMP) {
        kernels::omp::relu(in, out);
    } else {
        kernels::serial::relu(in, out);
    }
}

std::vector<std::size_t> layer_widths(const Architecture& arch) {
    if (arch.is_linear()) {
        return {arch.input_dim, arch.classes};
    }
    return {arch.input_dim, arch.hidden, arch.classes};
}

void check_arch(const Architecture& arch) {
    if (arch.input_dim < 1 || arch.classes < 2) {
        throw InvalidInput("architecture needs input_dim >= 1 and classes >= 2");
    }
}

void check_inputs(const ModelParams& params, const Matrix& inputs) {
    if (!inputs.empty() && inputs.cols() != params.arch.input_dim) {
        throw InvalidInput("input dimension " + std::to_string(inputs.cols()) +
                           " does not match model input_dim " +
                           std::to_string(params.arch.input_dim));
    }
}

// dL/dlogits for rows of one loss term: scale * (softmax(f + ln prior) - onehot(target)),
// skipped where the mask is off. Also accumulates the loss sum.
void adjusted_ce_gradient(const Matrix& logits, std::span<const ClassIndex> targets,
                          std::span<const std::uint8_t> masks, const ClassDistribution& prior,
                          double scale, Matrix& grads, double& loss_sum, bool& clamped) {
    grads = Matrix(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (!masks.empty() && !masks[i]) {
            continue;
        }
        for (double f : logits.row(i)) {
            if (!std::isfinite(f)) {
                throw NumericalFailure("non-finite logit in the loss");
            }
        }
        const auto probs = softmax(adjust_logits_with_log_prior(logits.row(i), prior));
        const auto ce = cross_entropy(targets[i], probs);
        loss_sum += ce.value;
        clamped = clamped || ce.clamped;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            const double onehot = static_cast<ClassIndex>(k) == targets[i] ? 1.0 : 0.0;
            grads(i, k) = scale * (probs[k] - onehot);
        }
    }
}

void add_scaled(ModelParams& into, const ModelParams& from, double scale) {
    for (std::size_t l = 0; l < into.layers.size(); ++l) {
        auto& dw = into.layers[l].weight.data();
        const auto& sw = from.layers[l].weight.data();
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += scale * sw[i];
        auto& db = into.layers[l].bias;
        const auto& sb = from.layers[l].bias;
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += scale * sb[i];
    }
}

} // namespace

ModelParams ModelParams::zeros(const Architecture& arch) {
    check_arch(arch);
    ModelParams params;
    params.arch = arch;
    const auto widths = layer_widths(arch);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        params.layers.push_back({Matrix(widths[l + 1], widths[l]), std::vector<double>(widths[l + 1], 0.0)});
    }
    return params;
}

ModelParams ModelParams::initialize(const Architecture& arch, std::uint64_t seed) {
    auto params = zeros(arch);
    if (arch.is_linear()) {
        return params;
    }
    SplitMix64 rng(derive_seed({seed, 0x1417ULL}));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double hidden_scale = std::sqrt(2.0 / static_cast<double>(arch.input_dim));
    for (double& w : params.layers[0].weight.data()) {
        w = hidden_scale * normal(rng);
    }
    const double out_scale = std::sqrt(1.0 / static_cast<double>(arch.hidden));
    for (double& w : params.layers[1].weight.data()) {
        w = 0.1 * out_scale * normal(rng);
    }
    return params;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t count = 0;
    for_each_value([&count](double) { ++count; });
    return count;
}

bool ModelParams::all_finite() const {
    bool ok = true;
    for_each_value([&ok](double v) { ok = ok && std::isfinite(v); });
    return ok;
}

ForwardCache forward_cached(const ModelParams& params, const Matrix& inputs, Backend backend) {
    check_inputs(params, inputs);
    ForwardCache cache;
    cache.pre.resize(params.layers.size());
    cache.post.resize(params.layers.size() - 1);
    const Matrix* current = &inputs;
    Matrix empty_input(0, params.arch.input_dim);
    if (inputs.empty()) {
        current = &empty_input;
    }
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        affine(*current, params.layers[l], cache.pre[l], backend);
        if (l + 1 < params.layers.size()) {
            relu(cache.pre[l], cache.post[l], backend);
            current = &cache.post[l];
        }
    }
    return cache;
}

Matrix forward(const ModelParams& params, const Matrix& inputs, Backend backend) {
    auto cache = forward_cached(params, inputs, backend);
    return std::move(cache.pre.back());
}

std::vector<double> forward_one(const ModelParams& params, std::span<const double> x) {
    Matrix in(1, x.size());
    std::copy(x.begin(), x.end(), in.data().begin());
    const auto logits = forward(params, in);
    return {logits.data().begin(), logits.data().end()};
}

ModelParams backpropagate(const ModelParams& params, const Matrix& inputs,
                          const ForwardCache& cache, const Matrix& logit_grads,
                          Backend backend) {
    ModelParams grad = ModelParams::zeros(params.arch);
    if (inputs.empty()) {
        return grad;
    }
    Matrix delta = logit_grads;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Matrix& layer_in = l == 0 ? inputs : cache.post[l - 1];
        if (backend == Backend::OpenMP) {
            kernels::omp::weight_gradient(delta, layer_in, grad.layers[l].weight, grad.layers[l].bias);
        } else {
            kernels::serial::weight_gradient(delta, layer_in, grad.layers[l].weight, grad.layers[l].bias);
        }
        if (l > 0) {
            Matrix delta_prev;
            if (backend == Backend::OpenMP) {
                kernels::omp::backprop_relu(delta, params.layers[l].weight, cache.pre[l - 1], delta_prev);
            } else {
                kernels::serial::backprop_relu(delta, params.layers[l].weight, cache.pre[l - 1], delta_prev);
            }
            delta = std::move(delta_prev);
        }
    }
    return grad;
}

LossAndGradient loss_and_gradient(const ModelParams& params, const SslBatch& batch,
                                  const ClassDistribution& prior, double lambda,
                                  Backend backend) {
    if (batch.labeled_x.rows() != batch.labeled_y.size()) {
        throw InvalidInput("loss_and_gradient: labeled inputs and targets differ in length");
    }
    if (batch.strong_x.rows() != batch.pseudo_y.size() ||
        batch.pseudo_y.size() != batch.masks.size()) {
        throw InvalidInput("loss_and_gradient: unlabeled inputs, pseudo-labels and masks differ in length");
    }
    if (prior.classes() != params.arch.classes) {
        throw InvalidInput("loss_and_gradient: prior class count mismatch");
    }

    LossAndGradient out;
    out.gradient = ModelParams::zeros(params.arch);

    const std::size_t n_l = batch.labeled_y.size();
    if (n_l > 0) {
        auto cache = forward_cached(params, batch.labeled_x, backend);
        Matrix grads;
        double sum = 0.0;
        adjusted_ce_gradient(cache.logits(), batch.labeled_y, {}, prior,
                             1.0 / static_cast<double>(n_l), grads, sum, out.clamped);
        out.loss_s = sum / static_cast<double>(n_l);
        add_scaled(out.gradient, backpropagate(params, batch.labeled_x, cache, grads, backend), 1.0);
        out.labeled_logits = std::move(cache.pre.back());
    }

    const std::size_t n_u = batch.pseudo_y.size();
    if (n_u > 0) {
        auto cache = forward_cached(params, batch.strong_x, backend);
        Matrix grads;
        double sum = 0.0;
        adjusted_ce_gradient(cache.logits(), batch.pseudo_y, batch.masks, prior,
                             lambda / static_cast<double>(n_u), grads, sum, out.clamped);
        out.loss_u = sum / static_cast<double>(n_u);
        bool any_masked = false;
        for (auto m : batch.masks) any_masked = any_masked || m != 0;
        if (any_masked) {
            add_scaled(out.gradient, backpropagate(params, batch.strong_x, cache, grads, backend), 1.0);
        }
        out.strong_logits = std::move(cache.pre.back());
    }

    out.total = out.loss_s + lambda * out.loss_u;
    return out;
}

LossAndGradient backward_step(ModelParams& params, const SslBatch& batch,
                              const ClassDistribution& prior, double lambda,
                              const SgdOptions& sgd, Backend backend) {
    // ReLU maps a NaN pre-activation to 0, so a poisoned weight can hide behind a finite loss.
    if (!params.all_finite()) throw NumericalFailure("non-finite model parameter");
    auto result = loss_and_gradient(params, batch, prior, lambda, backend);
    if (!std::isfinite(result.total) || !result.gradient.all_finite()) {
        throw NumericalFailure("non-finite loss (L_s=" + std::to_string(result.loss_s) +
                               ", L_u=" + std::to_string(result.loss_u) + ")");
    }
    if (sgd.learning_rate == 0.0) {
        return result;
    }
    if (sgd.weight_decay != 0.0) {
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            auto& gw = result.gradient.layers[l].weight.data();
            const auto& w = params.layers[l].weight.data();
            for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += sgd.weight_decay * w[i];
        }
    }
    add_scaled(params, result.gradient, -sgd.learning_rate);
    return result;
}

void ema_update(EmaParams& ema, const ModelParams& params) {
    if (!(ema.shadow.arch == params.arch)) {
        throw InvalidInput("ema_update: shadow and params have different shapes");
    }
    const double keep = ema.decay;
    const double take = 1.0 - ema.decay;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& sw = ema.shadow.layers[l].weight.data();
        const auto& pw = params.layers[l].weight.data();
        for (std::size_t i = 0; i < sw.size(); ++i) sw[i] = keep * sw[i] + take * pw[i];
        auto& sb = ema.shadow.layers[l].bias;
        const auto& pb = params.layers[l].bias;
        for (std::size_t i = 0; i < sb.size(); ++i) sb[i] = keep * sb[i] + take * pb[i];
    }
}

Prediction predict_balanced(const ModelParams& params, std::span<const double> x) {
    const auto logits = forward_one(params, x);
    return {argmax(logits), softmax(logits)};
}

std::vector<ClassIndex> predict_labels(const ModelParams& params, const Matrix& inputs,
                                       Backend backend) {
    const auto logits = forward(params, inputs, backend);
    std::vector<ClassIndex> labels;
    if (backend == Backend::OpenMP) {
        kernels::omp::argmax_rows(logits, labels);
    } else {
        kernels::serial::argmax_rows(logits, labels);
    }
    return labels;
}

} // namespace tcbc
