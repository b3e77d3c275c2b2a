#pragma once

// Small trainable classifier: linear softmax (hidden == 0) or one-hidden-layer ReLU MLP.
// Backpropagation is written out by hand for the prior-adjusted cross-entropy used by
// both the labeled and the pseudo-labeled loss terms.

#include <cstdint>
#include <span>
#include <vector>

#include "tcbc/types.hpp"

namespace tcbc {

struct Architecture {
    std::size_t input_dim = 2;
    std::size_t hidden = 0; ///< 0 selects the linear model
    std::size_t classes = 2;

    bool is_linear() const { return hidden == 0; }
    friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct Layer {
    Matrix weight; ///< out x in
    std::vector<double> bias;

    friend bool operator==(const Layer&, const Layer&) = default;
};

/// Parameters of the classifier. Also used as the container for gradients.
struct ModelParams {
    Architecture arch;
    std::vector<Layer> layers; ///< ReLU between consecutive layers, none after the last

    static ModelParams zeros(const Architecture& arch);

    /// Linear: all zeros. MLP: He-normal hidden weights, small output weights, zero biases.
    static ModelParams initialize(const Architecture& arch, std::uint64_t seed);

    std::size_t parameter_count() const;

    /// Visits every scalar parameter in a fixed order (layer, weight row-major, bias).
    template <class Fn>
    void for_each_value(Fn&& fn) {
        for (auto& layer : layers) {
            for (double& w : layer.weight.data()) fn(w);
            for (double& b : layer.bias) fn(b);
        }
    }
    template <class Fn>
    void for_each_value(Fn&& fn) const {
        for (const auto& layer : layers) {
            for (double w : layer.weight.data()) fn(w);
            for (double b : layer.bias) fn(b);
        }
    }

    bool all_finite() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

enum class Backend { Serial, OpenMP };

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardCache {
    std::vector<Matrix> pre;  ///< affine outputs per layer; the last one holds the logits
    std::vector<Matrix> post; ///< ReLU outputs of the hidden layers

    const Matrix& logits() const { return pre.back(); }
};

ForwardCache forward_cached(const ModelParams& params, const Matrix& inputs,
                            Backend backend = Backend::Serial);

/// Logits for every row of `inputs`. Throws InvalidInput on a dimension mismatch.
Matrix forward(const ModelParams& params, const Matrix& inputs, Backend backend = Backend::Serial);

std::vector<double> forward_one(const ModelParams& params, std::span<const double> x);

/// Parameter gradient given dLoss/dlogits for every row of the cached forward pass.
ModelParams backpropagate(const ModelParams& params, const Matrix& inputs,
                          const ForwardCache& cache, const Matrix& logit_grads,
                          Backend backend = Backend::Serial);

/// One SSL minibatch as seen by the loss: labeled weak views with targets, and strong
/// views of the unlabeled samples with their pseudo-labels and confidence masks.
struct SslBatch {
    Matrix labeled_x;
    std::vector<ClassIndex> labeled_y;
    Matrix strong_x;
    std::vector<ClassIndex> pseudo_y;
    std::vector<std::uint8_t> masks;
};

struct LossAndGradient {
    double loss_s = 0.0;
    double loss_u = 0.0;
    double total = 0.0;
    bool clamped = false;
    ModelParams gradient;
    Matrix labeled_logits; ///< pre-step logits, reused by the bias estimator
    Matrix strong_logits;
};

/// L = L_s + lambda * L_u with every posterior computed as softmax(f(x) + ln prior).
LossAndGradient loss_and_gradient(const ModelParams& params, const SslBatch& batch,
                                  const ClassDistribution& prior, double lambda,
                                  Backend backend = Backend::Serial);

struct SgdOptions {
    double learning_rate = 0.1;
    double weight_decay = 0.0;
};

/// One SGD step on L_s + lambda * L_u. Throws NumericalFailure on a non-finite loss,
/// leaving `params` untouched.
LossAndGradient backward_step(ModelParams& params, const SslBatch& batch,
                              const ClassDistribution& prior, double lambda,
                              const SgdOptions& sgd, Backend backend = Backend::Serial);

struct EmaParams {
    ModelParams shadow;
    double decay = 0.999;
};

/// shadow <- decay * shadow + (1 - decay) * params
void ema_update(EmaParams& ema, const ModelParams& params);

struct Prediction {
    ClassIndex label = 0;
    std::vector<double> probs;
};

/// Prior-free prediction: argmax of softmax(f(x)). Raw logits already model the
/// class-balanced posterior once training absorbed ln p_tr(y).
Prediction predict_balanced(const ModelParams& params, std::span<const double> x);

std::vector<ClassIndex> predict_labels(const ModelParams& params, const Matrix& inputs,
                                       Backend backend = Backend::Serial);

} // namespace tcbc
