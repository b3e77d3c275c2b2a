#pragma once

// FixMatch-style training loop with the two class-bias corrections:
//   model bias correction  - every posterior in the loss is softmax(f(x) + ln p_tr(y)),
//                            with p_tr(y) estimated over a sliding window of the samples
//                            that actually participated in training
//   pseudo-label refinement - pseudo-labels come from softmax(f(weak) + d), where d is a
//                            momentum estimate of the model's current class bias
// Baseline, ModelBiasOnly and RefineOnly switch the corrections off individually.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tcbc/data_synth.hpp"
#include "tcbc/estimators.hpp"
#include "tcbc/metrics.hpp"
#include "tcbc/model.hpp"

namespace tcbc {

enum class Mode { Baseline, ModelBiasOnly, RefineOnly, TCBC };
enum class BiasSource { UnlabeledOnly, LabeledAndUnlabeled };

inline constexpr Mode kAllModes[] = {Mode::Baseline, Mode::ModelBiasOnly, Mode::RefineOnly, Mode::TCBC};

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);
std::string to_string(BiasSource source);
BiasSource parse_bias_source(const std::string& text);

bool uses_prior_adjustment(Mode mode);
bool uses_refinement(Mode mode);

struct TrainConfig {
    Mode mode = Mode::TCBC;
    double tau_c = 0.95;
    double lambda = 1.0;
    double momentum = 0.999;
    std::size_t window = 0; ///< sliding-window length T; 0 selects 50 * K
    double learning_rate = 0.1;
    double weight_decay = 0.0;
    std::int64_t iterations = 5000;
    std::size_t labeled_batch = 64;
    std::size_t unlabeled_batch = 64; ///< equal to labeled_batch so count(y) matches the loss weighting
    double ema_decay = 0.999;
    double prior_smoothing = kDefaultPriorSmoothing;
    BiasSource bias_source = BiasSource::LabeledAndUnlabeled;
    bool mask_on_refined = true;
    std::uint64_t seed = 0;
    std::size_t hidden = 0; ///< 0: linear classifier
    AugmentationPolicy augmentation;
    std::int64_t eval_every = 0;       ///< 0 selects max(1, iterations / 50)
    std::int64_t checkpoint_every = 0; ///< 0 disables checkpoints
    Backend backend = Backend::OpenMP;

    // Diagnostic overrides: keep the prior at 1/K and/or the bias vector at 0 even in
    // modes that would otherwise estimate them.
    bool freeze_prior_uniform = false;
    bool freeze_bias_zero = false;

    void validate() const;
    std::size_t window_size(std::size_t classes) const { return window ? window : 50 * classes; }
    std::int64_t eval_interval() const;
};

struct IterationTrace {
    std::int64_t iteration = 0;
    double loss_s = 0.0;
    double loss_u = 0.0;
    double mask_rate = 0.0;
    double l2_ptr_to_true = 0.0;
    double l2_pseudo_to_uniform = 0.0;     ///< masked pseudo-labels only
    double l2_pseudo_all_to_uniform = 0.0; ///< every unlabeled sample in the batch
    std::vector<double> pseudo_histogram;     ///< masked pseudo-labels per class
    std::vector<double> pseudo_histogram_all; ///< all pseudo-labels per class

    friend bool operator==(const IterationTrace&, const IterationTrace&) = default;
};

struct Evaluation {
    ConfusionMatrix confusion{2};
    std::vector<double> recall;
    double balanced_accuracy = 0.0;
    double top1_accuracy = 0.0;
};

Evaluation evaluate(const ModelParams& params, const Matrix& x, std::span<const ClassIndex> y,
                    std::size_t classes, Backend backend = Backend::Serial);

struct EvalPoint {
    std::int64_t iteration = 0;
    double balanced_accuracy = 0.0;
    friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

/// How often each estimator was consulted to shape training (not for diagnostics).
struct EstimatorReads {
    std::int64_t prior_for_adjustment = 0;
    std::int64_t bias_for_refinement = 0;
};

struct TrainerState {
    ModelParams params;
    EmaParams ema;
    SlidingClassCounter counter;
    BiasEstimate bias;
    std::int64_t iteration = 0; ///< next iteration to run
    EstimatorReads reads;
    std::vector<EvalPoint> evals;
    std::vector<IterationTrace> trace;
};

TrainerState make_state(const TrainConfig& config, const Architecture& arch);

struct LabeledBatch {
    Matrix x; ///< weak views
    std::vector<ClassIndex> y;
};

struct UnlabeledBatch {
    Matrix weak;
    Matrix strong;
};

struct StepOutput {
    IterationTrace trace;
    std::vector<ClassIndex> pseudo_labels;
    std::vector<std::uint8_t> masks;
    ClassDistribution prior; ///< prior used for the logit adjustment this step
};

/// One training iteration. `true_distribution` (class distribution of labeled plus
/// unlabeled data) only feeds the l2_ptr_to_true diagnostic and may be null.
StepOutput train_step(TrainerState& state, const LabeledBatch& labeled,
                      const UnlabeledBatch& unlabeled, const TrainConfig& config,
                      const ClassDistribution* true_distribution = nullptr);

/// Batches for one iteration, drawn from streams keyed by (seed, iteration), with
/// replacement and without class balancing.
std::pair<LabeledBatch, UnlabeledBatch> sample_batches(const SyntheticSSLDataset& data,
                                                       const TrainConfig& config,
                                                       std::int64_t iteration);

/// Class distribution of labeled plus unlabeled data (uses hidden labels; diagnostics only).
ClassDistribution true_training_distribution(const SyntheticSSLDataset& data);

struct RunResult {
    TrainConfig config;
    std::vector<IterationTrace> trace;
    Evaluation final_eval;
    double median_last20_balanced_accuracy = 0.0;
    std::vector<EvalPoint> evals;
    ClassDistribution final_ptr;
    std::vector<double> final_bias;
    EstimatorReads reads;
    ModelParams final_params;
    ModelParams final_ema;
    double wall_clock_seconds = 0.0;
};

struct RunHooks {
    /// Called after every checkpoint_every iterations and once more at the end of the run.
    std::function<void(const TrainerState&)> on_checkpoint;
    /// Resume from this state instead of a fresh initialization.
    std::optional<TrainerState> resume_from;
};

RunResult run(const TrainConfig& config, const SyntheticSSLDataset& data, const RunHooks& hooks = {});

struct AblationRow {
    Mode mode;
    RunResult result;
};

/// All four modes on identical data and seed, in the order of kAllModes.
std::vector<AblationRow> ablate(const TrainConfig& base, const SyntheticSSLDataset& data);

} // namespace tcbc
