#include "tcbc/app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "tcbc/checkpoint.hpp"
#include "tcbc/io.hpp"
#include "tcbc/kernels.hpp"
#include "tcbc/trainer.hpp"

#ifndef TCBC_VERSION
#define TCBC_VERSION "dev"
#endif

namespace tcbc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOutputRootEnv = "TCBC_OUTPUT_ROOT";

/// Relative output paths are placed under $TCBC_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& out) {
    fs::path p(out);
    const char* root = std::getenv(kOutputRootEnv);
    if (root && *root && p.is_relative()) {
        return fs::path(root) / p;
    }
    return p;
}

struct GenerateArgs {
    ImbalanceSpec spec;
    GenerateOptions options;
    std::string out;
};

struct TrainArgs {
    TrainConfig config;
    std::string mode = "tcbc";
    std::string d_source = "labeled+unlabeled";
    std::string backend = "openmp";
    bool mask_on_raw = false;
    int threads = 0;
    std::string data;
    std::string out;
    std::string resume;
};

// CLI11 only reads config files at the top level, so a subcommand's --config file is
// expanded into --key=value tokens placed ahead of the explicit flags. Every option keeps
// its last value, which lets the command line override the file.
void add_config_file(CLI::App* cmd) {
    cmd->add_option("--config", "key=value file (optionally under [<subcommand>]); flags override it");
    for (auto* opt : cmd->get_options()) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

std::vector<std::string> expand_config_files(const std::vector<std::string>& args,
                                             const std::vector<std::string>& subcommands) {
    auto sub = std::find_if(args.begin() + (args.empty() ? 0 : 1), args.end(), [&](const std::string& a) {
        return std::find(subcommands.begin(), subcommands.end(), a) != subcommands.end();
    });
    if (sub == args.end()) return args;
    std::string file;
    for (auto it = sub + 1; it != args.end(); ++it) {
        if (*it == "--config" && it + 1 != args.end()) file = *(it + 1);
        if (it->rfind("--config=", 0) == 0) file = it->substr(9);
    }
    if (file.empty()) return args;
    if (!fs::is_regular_file(file)) throw CLI::FileError::Missing(file);

    std::vector<std::string> injected;
    for (const auto& item : CLI::ConfigINI().from_file(file)) {
        if (item.name == "++" || item.name == "--") continue; // section markers
        if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == *sub)) continue;
        if (item.inputs.size() != 1) throw CLI::ConversionError("config key '" + item.name + "' needs one value");
        injected.push_back("--" + item.name + "=" + item.inputs.front());
    }
    std::vector<std::string> out(args.begin(), sub + 1);
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), sub + 1, args.end());
    return out;
}

void add_train_options(CLI::App* cmd, TrainArgs& a) {
    auto& c = a.config;
    cmd->add_option("--data", a.data, "dataset directory written by `generate`")->required();
    cmd->add_option("--mode", a.mode, "baseline | model-bias | refine | tcbc")->capture_default_str();
    cmd->add_option("--tau-c", c.tau_c, "confidence threshold")->capture_default_str();
    cmd->add_option("--lambda", c.lambda, "unlabeled loss weight")->capture_default_str();
    cmd->add_option("--m", c.momentum, "bias estimate momentum")->capture_default_str();
    cmd->add_option("--window", c.window, "sliding window length in iterations (0: 50*K)")->capture_default_str();
    cmd->add_option("--lr", c.learning_rate, "SGD learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", c.weight_decay)->capture_default_str();
    cmd->add_option("--iters", c.iterations, "training iterations")->capture_default_str();
    cmd->add_option("--batch-l", c.labeled_batch, "labeled batch size")->capture_default_str();
    cmd->add_option("--batch-u", c.unlabeled_batch, "unlabeled batch size")->capture_default_str();
    cmd->add_option("--ema-decay", c.ema_decay)->capture_default_str();
    cmd->add_option("--eps", c.prior_smoothing, "additive smoothing of the estimated prior")->capture_default_str();
    cmd->add_option("--d-source", a.d_source, "samples for the bias estimate: unlabeled | labeled+unlabeled")
        ->capture_default_str();
    cmd->add_flag("--mask-on-raw", a.mask_on_raw, "confidence mask from unrefined probabilities");
    cmd->add_option("--seed", c.seed)->capture_default_str();
    cmd->add_option("--hidden", c.hidden, "hidden units (0: linear classifier)")->capture_default_str();
    cmd->add_option("--weak-sigma", c.augmentation.weak_sigma)->capture_default_str();
    cmd->add_option("--strong-sigma", c.augmentation.strong_sigma)->capture_default_str();
    cmd->add_option("--strong-dropout", c.augmentation.strong_dropout_p)->capture_default_str();
    cmd->add_option("--strong-scale-min", c.augmentation.strong_scale_min)->capture_default_str();
    cmd->add_option("--strong-scale-max", c.augmentation.strong_scale_max)->capture_default_str();
    cmd->add_option("--eval-every", c.eval_every, "EMA evaluation interval (0: iters/50)")->capture_default_str();
    cmd->add_option("--backend", a.backend, "serial | openmp")->capture_default_str();
    cmd->add_option("--threads", a.threads, "cap on OpenMP threads (0: runtime default)")->capture_default_str();
}

/// Turns the string-valued flags into the config; throws InvalidInput on bad values.
void finalize(TrainArgs& a) {
    a.config.mode = parse_mode(a.mode);
    a.config.bias_source = parse_bias_source(a.d_source);
    a.config.mask_on_refined = !a.mask_on_raw;
    if (a.backend == "serial") {
        a.config.backend = Backend::Serial;
    } else if (a.backend == "openmp") {
        a.config.backend = Backend::OpenMP;
    } else {
        throw InvalidInput("unknown backend '" + a.backend + "' (expected serial or openmp)");
    }
    if (a.threads < 0) {
        throw InvalidInput("--threads must be >= 0");
    }
    if (a.threads > 0) {
        kernels::set_thread_limit(a.threads);
    }
    a.config.validate();
}

SyntheticSSLDataset load_dataset(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw io::FormatError("dataset directory not found: " + dir);
    }
    return io::read_dataset(dir);
}

json manifest_json(const std::string& command, const json& config, const SyntheticSSLDataset* data,
                   const std::string& data_dir, const std::string& started, double seconds,
                   const fs::path& root, const std::vector<std::string>& files) {
    json m;
    m["schema_version"] = io::kSchemaVersion;
    m["tool"] = "tcbc";
    m["version"] = TCBC_VERSION;
    m["command"] = command;
    m["config"] = config;
    if (data) {
        m["dataset"] = {{"path", data_dir},
                        {"spec", io::dataset_sidecar(*data)["spec"]},
                        {"sha256", io::sha256_file(fs::path(data_dir) / io::kDatasetCsv)}};
    }
    m["started_utc"] = started;
    m["finished_utc"] = io::utc_timestamp();
    m["wall_clock_seconds"] = io::round9(seconds);
    m["threads"] = kernels::max_threads();
    json listed = json::array();
    for (const auto& f : io::hash_files(root, files)) {
        listed.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    }
    m["files"] = listed;
    return m;
}

std::string ckpt_name(std::int64_t iteration) {
    std::ostringstream os;
    os << "checkpoints/iter_" << iteration;
    return os.str();
}

/// Writes trace.csv and result.json for one run; returns the written relative paths.
std::vector<std::string> write_run_outputs(const fs::path& dir, const RunResult& result,
                                           const SyntheticSSLDataset& data) {
    io::write_file(dir / "trace.csv", io::trace_csv(result.trace, data.classes()));
    io::write_file(dir / "result.json", io::dump_json(io::result_to_json(result, data)));
    return {"trace.csv", "result.json"};
}

int cmd_generate(const GenerateArgs& a) {
    const auto data = generate(a.spec, a.options);
    const auto dir = output_path(a.out);
    io::write_dataset(dir, data);
    std::cout << "wrote " << (dir / io::kDatasetCsv).string() << " (" << data.labeled_y.size()
              << " labeled, " << data.unlabeled_hidden_y.size() << " unlabeled, "
              << data.test_y.size() << " test)\n";
    return kExitOk;
}

int cmd_train(TrainArgs& a, const std::vector<std::string>& argv) {
    finalize(a);
    const auto data = load_dataset(a.data);
    const auto dir = output_path(a.out);
    const std::string started = io::utc_timestamp();
    auto& config = a.config;

    RunHooks hooks;
    std::vector<std::string> files;
    if (config.checkpoint_every > 0) {
        hooks.on_checkpoint = [&](const TrainerState& state) {
            const auto name = ckpt_name(state.iteration);
            io::save_checkpoint(dir / name, state, config);
            files.push_back(name + ".bin");
            files.push_back(name + ".json");
        };
    }
    if (!a.resume.empty()) {
        hooks.resume_from = io::load_checkpoint(a.resume, config);
        std::cout << "resuming at iteration " << hooks.resume_from->iteration << "\n";
    }

    const auto result = run(config, data, hooks);

    for (const auto& f : write_run_outputs(dir, result, data)) files.push_back(f);
    io::save_params(dir / "params/model", result.final_params);
    io::save_params(dir / "params/ema", result.final_ema);
    for (const char* f : {"params/model.bin", "params/model.json", "params/ema.bin", "params/ema.json"}) {
        files.emplace_back(f);
    }

    json cfg = io::config_to_json(config);
    json manifest = manifest_json("train", cfg, &data, a.data, started, result.wall_clock_seconds, dir, files);
    manifest["seed"] = config.seed;
    manifest["argv"] = argv;
    io::write_file(dir / "manifest.json", io::dump_json(manifest));

    std::cout << to_string(config.mode) << ": balanced accuracy " << io::format_number(result.final_eval.balanced_accuracy)
              << ", top-1 " << io::format_number(result.final_eval.top1_accuracy) << " after "
              << config.iterations << " iterations (" << io::format_number(result.wall_clock_seconds)
              << " s)\n";
    return kExitOk;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            seeds.push_back(v);
        } catch (const std::exception&) {
            throw InvalidInput("--seeds expects a comma-separated list of integers, got '" + text + "'");
        }
    }
    if (seeds.empty()) {
        throw InvalidInput("--seeds must list at least one seed");
    }
    return seeds;
}

int cmd_ablate(TrainArgs& a, const std::string& seeds_text) {
    finalize(a);
    const auto seeds = parse_seeds(seeds_text);
    const auto data = load_dataset(a.data);
    const auto dir = output_path(a.out);
    const std::string started = io::utc_timestamp();

    std::ostringstream summary;
    summary << "schema_version,row_type,mode,seed,balanced_accuracy,top1_accuracy,"
               "median_last20_balanced_accuracy\n";
    std::map<Mode, std::array<double, 3>> sums;
    std::vector<std::string> files;
    double seconds = 0.0;
    for (auto seed : seeds) {
        TrainConfig base = a.config;
        base.seed = seed;
        for (const auto& row : ablate(base, data)) {
            const auto& r = row.result;
            const std::string run_dir = "seed_" + std::to_string(seed) + "/" + to_string(row.mode);
            for (const auto& f : write_run_outputs(dir / run_dir, r, data)) files.push_back(run_dir + "/" + f);
            summary << io::kSchemaVersion << ",run," << to_string(row.mode) << ',' << seed << ','
                    << io::format_number(r.final_eval.balanced_accuracy) << ','
                    << io::format_number(r.final_eval.top1_accuracy) << ','
                    << io::format_number(r.median_last20_balanced_accuracy) << '\n';
            auto& s = sums[row.mode];
            s[0] += r.final_eval.balanced_accuracy;
            s[1] += r.final_eval.top1_accuracy;
            s[2] += r.median_last20_balanced_accuracy;
            seconds += r.wall_clock_seconds;
            std::cout << "seed " << seed << ' ' << to_string(row.mode) << ": balanced accuracy "
                      << io::format_number(r.final_eval.balanced_accuracy) << "\n";
        }
    }
    const double n = static_cast<double>(seeds.size());
    for (Mode mode : kAllModes) {
        const auto& s = sums[mode];
        summary << io::kSchemaVersion << ",mean," << to_string(mode) << ",all,"
                << io::format_number(s[0] / n) << ',' << io::format_number(s[1] / n) << ','
                << io::format_number(s[2] / n) << '\n';
    }
    io::write_file(dir / "summary.csv", summary.str());
    files.insert(files.begin(), "summary.csv");

    json cfg = io::config_to_json(a.config);
    cfg.erase("mode");
    cfg.erase("seed");
    json manifest = manifest_json("ablate", cfg, &data, a.data, started, seconds, dir, files);
    manifest["seeds"] = seeds;
    io::write_file(dir / "manifest.json", io::dump_json(manifest));
    std::cout << "wrote " << (dir / "summary.csv").string() << "\n";
    return kExitOk;
}

int cmd_plotdata(const std::vector<std::string>& traces, std::vector<std::string> run_ids,
                 const std::string& out) {
    if (!run_ids.empty() && run_ids.size() != traces.size()) {
        throw InvalidInput("--run-id must be given once per --trace or not at all");
    }
    if (run_ids.empty()) {
        // Default id: the directory holding the trace.
        for (const auto& t : traces) {
            const auto parent = fs::path(t).parent_path().filename().string();
            run_ids.push_back(parent.empty() ? fs::path(t).stem().string() : parent);
        }
        for (std::size_t i = 0; i < run_ids.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (run_ids[i] == run_ids[j]) {
                    throw InvalidInput("traces '" + traces[j] + "' and '" + traces[i] +
                                       "' share a default run id; pass --run-id");
                }
            }
        }
    }
    std::vector<std::pair<std::string, io::CsvTable>> tables;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        tables.emplace_back(run_ids[i], io::read_csv(traces[i]));
    }
    const auto path = output_path(out);
    io::write_file(path, io::tidy_traces(tables));
    std::cout << "wrote " << path.string() << "\n";
    return kExitOk;
}

int cmd_verify(const std::string& run_dir) {
    const auto report = io::verify_manifest(run_dir);
    for (const auto& f : report.missing) std::cout << "MISSING  " << f << "\n";
    for (const auto& f : report.modified) std::cout << "MODIFIED " << f << "\n";
    if (!report.ok()) {
        return kExitVerifyMismatch;
    }
    std::cout << "ok: every file in " << run_dir << "/manifest.json matches its hash\n";
    return kExitOk;
}

} // namespace

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args);
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Twice class-bias correction for imbalanced semi-supervised learning"};
    app.set_version_flag("--version", TCBC_VERSION);
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "write a synthetic long-tailed SSL dataset");
    g->add_option("--k", gen.spec.classes, "number of classes")->capture_default_str();
    g->add_option("--n1", gen.spec.n1, "labeled head-class count")->capture_default_str();
    g->add_option("--m1", gen.spec.m1, "largest unlabeled class count")->capture_default_str();
    g->add_option("--gamma-l", gen.spec.gamma_l, "labeled imbalance ratio")->capture_default_str();
    g->add_option("--gamma-u", gen.spec.gamma_u, "unlabeled imbalance ratio (< 1: reversed)")->capture_default_str();
    g->add_option("--seed", gen.spec.seed)->capture_default_str();
    g->add_option("--dim", gen.options.dim, "feature dimension")->capture_default_str();
    g->add_option("--separation", gen.options.separation, "distance between adjacent class means")
        ->capture_default_str();
    g->add_option("--test-per-class", gen.options.test_per_class)->capture_default_str();
    g->add_option("--out", gen.out, "output directory")->required();
    add_config_file(g);

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train one model and write trace, result, params and manifest");
    add_train_options(t, tr);
    t->add_option("--out", tr.out, "run directory")->required();
    t->add_option("--checkpoint-every", tr.config.checkpoint_every, "0 disables")->capture_default_str();
    t->add_option("--resume", tr.resume, "checkpoint stem to continue from");

    TrainArgs ab;
    std::string seeds = "0,1,2,3,4";
    auto* a = app.add_subcommand("ablate", "run every mode for each seed and write summary.csv");
    add_train_options(a, ab);
    a->add_option("--out", ab.out, "sweep directory")->required();
    a->add_option("--seeds", seeds, "comma-separated training seeds")->capture_default_str();

    std::vector<std::string> traces;
    std::vector<std::string> run_ids;
    std::string plot_out;
    auto* p = app.add_subcommand("plotdata", "merge trace.csv files into a long-format table");
    p->add_option("--trace", traces, "trace.csv (repeatable)")->required();
    p->add_option("--run-id", run_ids, "series name per --trace (default: its directory)");
    p->add_option("--out", plot_out, "output csv")->required();

    std::string verify_dir;
    auto* v = app.add_subcommand("verify", "re-hash the files listed in a run manifest");
    v->add_option("--run", verify_dir, "run directory containing manifest.json")->required();

    add_config_file(t);
    add_config_file(a);

    try {
        const auto expanded = expand_config_files(args, {"generate", "train", "ablate"});
        std::vector<std::string> rest(expanded.begin() + (expanded.empty() ? 0 : 1), expanded.end());
        std::reverse(rest.begin(), rest.end());
        app.parse(rest);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (g->parsed()) return cmd_generate(gen);
        if (t->parsed()) return cmd_train(tr, args);
        if (a->parsed()) return cmd_ablate(ab, seeds);
        if (p->parsed()) return cmd_plotdata(traces, run_ids, plot_out);
        if (v->parsed()) return cmd_verify(verify_dir);
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const io::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed input: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace tcbc::cli
