#include "tcbc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "tcbc/loss_math.hpp"
#include "tcbc/rng.hpp"

namespace tcbc {

std::string to_string(Mode mode) {
    switch (mode) {
    case Mode::Baseline: return "baseline";
    case Mode::ModelBiasOnly: return "model-bias";
    case Mode::RefineOnly: return "refine";
    case Mode::TCBC: return "tcbc";
    }
    return "unknown";
}

Mode parse_mode(const std::string& text) {
    for (Mode m : kAllModes) {
        if (to_string(m) == text) return m;
    }
    throw InvalidInput("unknown mode '" + text + "' (expected baseline, model-bias, refine or tcbc)");
}

std::string to_string(BiasSource source) {
    return source == BiasSource::UnlabeledOnly ? "unlabeled" : "labeled+unlabeled";
}

BiasSource parse_bias_source(const std::string& text) {
    if (text == "unlabeled") return BiasSource::UnlabeledOnly;
    if (text == "labeled+unlabeled") return BiasSource::LabeledAndUnlabeled;
    throw InvalidInput("unknown bias source '" + text + "' (expected unlabeled or labeled+unlabeled)");
}

bool uses_prior_adjustment(Mode mode) { return mode == Mode::ModelBiasOnly || mode == Mode::TCBC; }
bool uses_refinement(Mode mode) { return mode == Mode::RefineOnly || mode == Mode::TCBC; }

void TrainConfig::validate() const {
    if (!(tau_c > 0.0 && tau_c <= 1.0)) throw InvalidInput("tau_c must lie in (0, 1]");
    if (!(lambda >= 0.0)) throw InvalidInput("lambda must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0, 1)");
    if (!(learning_rate >= 0.0)) throw InvalidInput("learning rate must be >= 0");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw InvalidInput("ema decay must lie in [0, 1)");
    if (!(prior_smoothing >= 0.0)) throw InvalidInput("prior smoothing must be >= 0");
    if (iterations < 0) throw InvalidInput("iterations must be >= 0");
    if (eval_every < 0 || checkpoint_every < 0) throw InvalidInput("intervals must be >= 0");
    augmentation.validate();
}

std::int64_t TrainConfig::eval_interval() const {
    if (eval_every > 0) return eval_every;
    return std::max<std::int64_t>(1, iterations / 50);
}

Evaluation evaluate(const ModelParams& params, const Matrix& x, std::span<const ClassIndex> y,
                    std::size_t classes, Backend backend) {
    Evaluation eval;
    const auto predicted = predict_labels(params, x, backend);
    eval.confusion = confusion(y, predicted, classes);
    eval.recall = per_class_recall(eval.confusion);
    eval.balanced_accuracy = balanced_accuracy(eval.confusion);
    eval.top1_accuracy = top1_accuracy(eval.confusion);
    return eval;
}

TrainerState make_state(const TrainConfig& config, const Architecture& arch) {
    config.validate();
    auto params = ModelParams::initialize(arch, config.seed);
    EmaParams ema{params, config.ema_decay};
    return TrainerState{std::move(params), std::move(ema),
                        SlidingClassCounter(arch.classes, config.window_size(arch.classes)),
                        BiasEstimate(arch.classes, config.momentum), 0, {}, {}, {}};
}

namespace {

std::string describe_state(const TrainerState& state, const ClassDistribution& prior) {
    std::ostringstream os;
    os << "iteration " << state.iteration << "; prior [";
    for (double p : prior.probs) os << ' ' << p;
    os << " ]; bias d [";
    for (double d : state.bias.values()) os << ' ' << d;
    os << " ]; window " << state.counter.size() << '/' << state.counter.capacity();
    return os.str();
}

Matrix stack_rows(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    if (out.rows() == 0) {
        return b;
    }
    for (std::size_t i = 0; i < b.rows(); ++i) out.append_row(b.row(i));
    return out;
}

} // namespace

StepOutput train_step(TrainerState& state, const LabeledBatch& labeled,
                      const UnlabeledBatch& unlabeled, const TrainConfig& config,
                      const ClassDistribution* true_distribution) {
    const std::size_t classes = state.params.arch.classes;
    const std::size_t n_u = unlabeled.weak.rows();
    const bool refine = uses_refinement(config.mode);
    const bool adjust = uses_prior_adjustment(config.mode);

    StepOutput out;
    out.trace.iteration = state.iteration;

    // (1) weak views of the unlabeled batch
    const Matrix weak_logits = forward(state.params, unlabeled.weak, config.backend);
    for (double f : weak_logits.data()) {
        if (!std::isfinite(f)) {
            throw NumericalFailure("non-finite logit on a weak view at " +
                                   describe_state(state, ClassDistribution::uniform(classes)));
        }
    }

    // (2) pseudo-labels and (3) confidence masks
    const std::vector<double> zero_bias(classes, 0.0);
    const std::vector<double>* bias = &zero_bias;
    if (refine && !config.freeze_bias_zero) {
        bias = &state.bias.values();
        ++state.reads.bias_for_refinement;
    }
    out.pseudo_labels.resize(n_u);
    out.masks.resize(n_u);
    for (std::size_t j = 0; j < n_u; ++j) {
        const auto f = weak_logits.row(j);
        if (refine) {
            const auto refined = refine_pseudo_label(f, *bias);
            out.pseudo_labels[j] = refined.label;
            const auto& mask_probs = config.mask_on_refined ? refined.probs : softmax(f);
            out.masks[j] = confidence_mask(mask_probs, config.tau_c) ? 1 : 0;
        } else {
            out.pseudo_labels[j] = argmax(f);
            out.masks[j] = confidence_mask(softmax(f), config.tau_c) ? 1 : 0;
        }
    }

    // (5) prior for the logit adjustment: estimated p_tr(y), or fixed at 1/K
    if (adjust && !config.freeze_prior_uniform) {
        out.prior = estimated_ptr(state.counter, config.prior_smoothing);
        ++state.reads.prior_for_adjustment;
    } else {
        out.prior = ClassDistribution::uniform(classes);
    }

    // (4) + (6) forward labeled/strong views, loss, SGD step
    SslBatch batch{labeled.x, labeled.y, unlabeled.strong, out.pseudo_labels, out.masks};
    LossAndGradient step;
    try {
        step = backward_step(state.params, batch, out.prior, config.lambda,
                             {config.learning_rate, config.weight_decay}, config.backend);
    } catch (const NumericalFailure& e) {
        throw NumericalFailure(std::string(e.what()) + " at " + describe_state(state, out.prior));
    }
    out.trace.loss_s = step.loss_s;
    out.trace.loss_u = step.loss_u;

    // (7) participating-sample counts for the sliding window
    state.counter.push(effective_batch_count(labeled.y, out.pseudo_labels, out.masks,
                                             config.lambda, classes));

    // (8) bias sample from this iteration's pre-step logits
    if (refine && !config.freeze_bias_zero) {
        const Matrix source = config.bias_source == BiasSource::LabeledAndUnlabeled
                                  ? stack_rows(step.labeled_logits, weak_logits)
                                  : weak_logits;
        if (auto d_prime = batch_bias_sample(source, out.prior)) {
            state.bias.update(*d_prime);
        }
    }

    // (9) evaluation copy
    ema_update(state.ema, state.params);

    // (10) diagnostics
    auto& trace = out.trace;
    trace.pseudo_histogram.assign(classes, 0.0);
    trace.pseudo_histogram_all.assign(classes, 0.0);
    std::size_t masked = 0;
    for (std::size_t j = 0; j < n_u; ++j) {
        const auto y = static_cast<std::size_t>(out.pseudo_labels[j]);
        trace.pseudo_histogram_all[y] += 1.0;
        if (out.masks[j]) {
            trace.pseudo_histogram[y] += 1.0;
            ++masked;
        }
    }
    trace.mask_rate = n_u ? static_cast<double>(masked) / static_cast<double>(n_u) : 0.0;
    const auto uniform = ClassDistribution::uniform(classes);
    trace.l2_pseudo_to_uniform =
        l2_distribution_distance(pseudo_label_distribution(trace.pseudo_histogram).dist, uniform);
    trace.l2_pseudo_all_to_uniform =
        l2_distribution_distance(pseudo_label_distribution(trace.pseudo_histogram_all).dist, uniform);
    trace.l2_ptr_to_true =
        true_distribution
            ? l2_distribution_distance(estimated_ptr(state.counter, config.prior_smoothing), *true_distribution)
            : std::numeric_limits<double>::quiet_NaN();

    ++state.iteration;
    return out;
}

std::pair<LabeledBatch, UnlabeledBatch> sample_batches(const SyntheticSSLDataset& data,
                                                       const TrainConfig& config,
                                                       std::int64_t iteration) {
    const std::size_t dim = data.dim;
    const auto it = static_cast<std::uint64_t>(iteration);
    constexpr std::uint64_t kLabeledStream = 0x4C;
    constexpr std::uint64_t kUnlabeledStream = 0x55;

    LabeledBatch lb{Matrix(config.labeled_batch, dim), std::vector<ClassIndex>(config.labeled_batch)};
    UnlabeledBatch ub{Matrix(config.unlabeled_batch, dim), Matrix(config.unlabeled_batch, dim)};

    const std::size_t n_l = data.labeled_y.size();
    const std::size_t n_u = data.unlabeled_x.rows();
    if (n_l == 0) {
        lb = {Matrix(0, dim), {}};
    }
    if (n_u == 0) {
        ub = {Matrix(0, dim), Matrix(0, dim)};
    }

    const auto labeled_rows = static_cast<std::ptrdiff_t>(lb.y.size());
#pragma omp parallel for schedule(static) if (config.backend == Backend::OpenMP && labeled_rows >= 256)
    for (std::ptrdiff_t ii = 0; ii < labeled_rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        SplitMix64 rng(derive_seed({config.seed, it, kLabeledStream, i}));
        std::uniform_int_distribution<std::size_t> pick(0, n_l - 1);
        const std::size_t idx = pick(rng);
        lb.y[i] = data.labeled_y[idx];
        weak_augment(data.labeled_x.row(idx), config.augmentation, rng, lb.x.row(i));
    }

    const auto unlabeled_rows = static_cast<std::ptrdiff_t>(ub.weak.rows());
#pragma omp parallel for schedule(static) if (config.backend == Backend::OpenMP && unlabeled_rows >= 256)
    for (std::ptrdiff_t jj = 0; jj < unlabeled_rows; ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        SplitMix64 rng(derive_seed({config.seed, it, kUnlabeledStream, j}));
        std::uniform_int_distribution<std::size_t> pick(0, n_u - 1);
        const std::size_t idx = pick(rng);
        weak_augment(data.unlabeled_x.row(idx), config.augmentation, rng, ub.weak.row(j));
        strong_augment(data.unlabeled_x.row(idx), config.augmentation, rng, ub.strong.row(j));
    }
    return {std::move(lb), std::move(ub)};
}

ClassDistribution true_training_distribution(const SyntheticSSLDataset& data) {
    std::vector<ClassIndex> all = data.labeled_y;
    all.insert(all.end(), data.unlabeled_hidden_y.begin(), data.unlabeled_hidden_y.end());
    auto dist = label_distribution(all, data.classes(), DistributionKind::TrueUnlabeled);
    return dist;
}

namespace {

double median_of_last(const std::vector<EvalPoint>& evals, std::size_t count) {
    if (evals.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t start = evals.size() > count ? evals.size() - count : 0;
    std::vector<double> values;
    for (std::size_t i = start; i < evals.size(); ++i) values.push_back(evals[i].balanced_accuracy);
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace

RunResult run(const TrainConfig& config, const SyntheticSSLDataset& data, const RunHooks& hooks) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const Architecture arch{data.dim, config.hidden, data.classes()};
    TrainerState state = hooks.resume_from ? *hooks.resume_from : make_state(config, arch);
    if (!(state.params.arch == arch)) {
        throw InvalidInput("resume state does not match the dataset/model architecture");
    }
    const auto truth = true_training_distribution(data);
    const std::int64_t eval_interval = config.eval_interval();

    while (state.iteration < config.iterations) {
        const auto [labeled, unlabeled] = sample_batches(data, config, state.iteration);
        auto step = train_step(state, labeled, unlabeled, config, &truth);
        state.trace.push_back(std::move(step.trace));
        if (state.iteration % eval_interval == 0) {
            const auto eval = evaluate(state.ema.shadow, data.test_x, data.test_y, data.classes(), config.backend);
            state.evals.push_back({state.iteration, eval.balanced_accuracy});
        }
        if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0 &&
            hooks.on_checkpoint) {
            hooks.on_checkpoint(state);
        }
    }
    const bool saved_last = config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0;
    if (hooks.on_checkpoint && !saved_last) {
        hooks.on_checkpoint(state);
    }

    RunResult result;
    result.config = config;
    result.final_eval = evaluate(state.ema.shadow, data.test_x, data.test_y, data.classes(), config.backend);
    result.evals = state.evals;
    result.median_last20_balanced_accuracy =
        state.evals.empty() ? result.final_eval.balanced_accuracy : median_of_last(state.evals, 20);
    result.final_ptr = estimated_ptr(state.counter, config.prior_smoothing);
    result.final_bias = state.bias.values();
    result.reads = state.reads;
    result.final_params = state.params;
    result.final_ema = state.ema.shadow;
    result.trace = std::move(state.trace);
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

std::vector<AblationRow> ablate(const TrainConfig& base, const SyntheticSSLDataset& data) {
    std::vector<AblationRow> rows;
    for (Mode mode : kAllModes) {
        TrainConfig config = base;
        config.mode = mode;
        rows.push_back({mode, run(config, data)});
    }
    return rows;
}

} // namespace tcbc
