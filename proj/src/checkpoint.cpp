#include "tcbc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tcbc/io.hpp"

namespace tcbc::io {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in host order and assume little-endian");

namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix) {
    return fs::path(stem.string() + suffix);
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

void append_params(std::vector<NamedArray>& arrays, const std::string& prefix, const ModelParams& p) {
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& layer = p.layers[l];
        const std::string base = prefix + "layer" + std::to_string(l);
        arrays.push_back({base + ".weight", {layer.weight.rows(), layer.weight.cols()}, layer.weight.data()});
        arrays.push_back({base + ".bias", {layer.bias.size()}, layer.bias});
    }
}

json arch_json(const Architecture& a) {
    return {{"input_dim", a.input_dim}, {"hidden", a.hidden}, {"classes", a.classes}};
}

Architecture arch_from_json(const json& j) {
    return {j.at("input_dim").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
            j.at("classes").get<std::size_t>()};
}

ModelParams params_from(const NamedArrayFile& file, const std::string& prefix, const Architecture& arch) {
    auto params = ModelParams::zeros(arch);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        const std::string base = prefix + "layer" + std::to_string(l);
        const auto& w = file.get(base + ".weight");
        const auto& b = file.get(base + ".bias");
        if (w.values.size() != layer.weight.data().size() || b.values.size() != layer.bias.size()) {
            throw FormatError("array " + base + " does not match the recorded architecture");
        }
        layer.weight.data() = w.values;
        layer.bias = b.values;
    }
    return params;
}

std::vector<double> trace_row(const IterationTrace& t) {
    std::vector<double> row{static_cast<double>(t.iteration), t.loss_s, t.loss_u, t.mask_rate,
                            t.l2_ptr_to_true, t.l2_pseudo_to_uniform, t.l2_pseudo_all_to_uniform};
    row.insert(row.end(), t.pseudo_histogram.begin(), t.pseudo_histogram.end());
    row.insert(row.end(), t.pseudo_histogram_all.begin(), t.pseudo_histogram_all.end());
    return row;
}

} // namespace

const NamedArray& NamedArrayFile::get(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return a;
    }
    throw FormatError("array '" + name + "' not found");
}

void write_named_arrays(const fs::path& stem, const std::vector<NamedArray>& arrays, const json& extra) {
    std::string blob;
    json index = json::array();
    std::size_t offset = 0;
    for (const auto& a : arrays) {
        if (element_count(a.shape) != a.values.size()) {
            throw InvalidInput("named array '" + a.name + "' has inconsistent shape");
        }
        const std::size_t bytes = a.values.size() * sizeof(double);
        blob.append(reinterpret_cast<const char*>(a.values.data()), bytes);
        index.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"dtype", "float64"}});
        offset += bytes;
    }
    json manifest{{"schema_version", kSchemaVersion},
                  {"byte_order", "little"},
                  {"blob", with_suffix(stem, ".bin").filename().string()},
                  {"arrays", index},
                  {"meta", extra}};
    write_file(with_suffix(stem, ".bin"), blob);
    write_file(with_suffix(stem, ".json"), dump_json(manifest));
}

NamedArrayFile read_named_arrays(const fs::path& stem) {
    NamedArrayFile file;
    json manifest;
    try {
        manifest = json::parse(read_file(with_suffix(stem, ".json")));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed array manifest: ") + e.what());
    }
    const std::string blob = read_file(with_suffix(stem, ".bin"));
    try {
        for (const auto& entry : manifest.at("arrays")) {
            NamedArray a;
            a.name = entry.at("name").get<std::string>();
            a.shape = entry.at("shape").get<std::vector<std::size_t>>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const std::size_t n = element_count(a.shape);
            if (offset + n * sizeof(double) > blob.size()) {
                throw FormatError("array '" + a.name + "' extends past the end of the blob");
            }
            a.values.resize(n);
            std::memcpy(a.values.data(), blob.data() + offset, n * sizeof(double));
            file.arrays.push_back(std::move(a));
        }
        file.meta = manifest.value("meta", json::object());
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed array manifest: ") + e.what());
    }
    return file;
}

void save_params(const fs::path& stem, const ModelParams& params) {
    std::vector<NamedArray> arrays;
    append_params(arrays, "", params);
    write_named_arrays(stem, arrays, {{"architecture", arch_json(params.arch)}});
}

ModelParams load_params(const fs::path& stem) {
    const auto file = read_named_arrays(stem);
    return params_from(file, "", arch_from_json(file.meta.at("architecture")));
}

void save_checkpoint(const fs::path& stem, const TrainerState& state, const TrainConfig& config) {
    const std::size_t classes = state.params.arch.classes;
    std::vector<NamedArray> arrays;
    append_params(arrays, "params.", state.params);
    append_params(arrays, "ema.", state.ema.shadow);

    NamedArray window{"counter.window", {state.counter.size(), classes}, {}};
    for (const auto& entry : state.counter.window()) {
        window.values.insert(window.values.end(), entry.begin(), entry.end());
    }
    arrays.push_back(std::move(window));
    arrays.push_back({"counter.total", {classes}, state.counter.total()});
    arrays.push_back({"bias.d", {classes}, state.bias.values()});

    NamedArray evals{"evals", {state.evals.size(), 2}, {}};
    for (const auto& e : state.evals) {
        evals.values.push_back(static_cast<double>(e.iteration));
        evals.values.push_back(e.balanced_accuracy);
    }
    arrays.push_back(std::move(evals));

    const std::size_t trace_cols = 7 + 2 * classes;
    NamedArray trace{"trace", {state.trace.size(), trace_cols}, {}};
    for (const auto& t : state.trace) {
        const auto row = trace_row(t);
        trace.values.insert(trace.values.end(), row.begin(), row.end());
    }
    arrays.push_back(std::move(trace));

    json meta{{"architecture", arch_json(state.params.arch)},
              {"config_hash", config_hash(config)},
              {"iteration", state.iteration},
              {"rng", {{"seed", config.seed}, {"next_iteration", state.iteration}}},
              {"counter_capacity", state.counter.capacity()},
              {"counter_pushes_since_rebuild", state.counter.pushes_since_rebuild()},
              {"bias_initialized", state.bias.initialized()},
              {"ema_decay", state.ema.decay},
              {"reads",
               {{"prior_for_adjustment", state.reads.prior_for_adjustment},
                {"bias_for_refinement", state.reads.bias_for_refinement}}}};
    write_named_arrays(stem, arrays, meta);
}

TrainerState load_checkpoint(const fs::path& stem, const TrainConfig& config) {
    const auto file = read_named_arrays(stem);
    const auto& meta = file.meta;
    if (meta.at("config_hash").get<std::string>() != config_hash(config)) {
        throw FormatError("checkpoint " + stem.string() + " was written with a different configuration");
    }
    const auto arch = arch_from_json(meta.at("architecture"));
    const std::size_t classes = arch.classes;

    TrainerState state = make_state(config, arch);
    state.params = params_from(file, "params.", arch);
    state.ema.shadow = params_from(file, "ema.", arch);
    state.iteration = meta.at("iteration").get<std::int64_t>();

    const auto& window = file.get("counter.window");
    std::deque<std::vector<double>> entries;
    for (std::size_t i = 0; i < window.shape.at(0); ++i) {
        entries.emplace_back(window.values.begin() + static_cast<std::ptrdiff_t>(i * classes),
                             window.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * classes));
    }
    state.counter.restore(std::move(entries), file.get("counter.total").values,
                          meta.at("counter_pushes_since_rebuild").get<std::size_t>());
    state.bias.restore(file.get("bias.d").values, meta.at("bias_initialized").get<bool>());
    state.reads.prior_for_adjustment = meta.at("reads").at("prior_for_adjustment").get<std::int64_t>();
    state.reads.bias_for_refinement = meta.at("reads").at("bias_for_refinement").get<std::int64_t>();

    const auto& evals = file.get("evals");
    for (std::size_t i = 0; i < evals.shape.at(0); ++i) {
        state.evals.push_back({static_cast<std::int64_t>(evals.values[2 * i]), evals.values[2 * i + 1]});
    }
    const auto& trace = file.get("trace");
    const std::size_t cols = 7 + 2 * classes;
    for (std::size_t i = 0; i < trace.shape.at(0); ++i) {
        const double* r = trace.values.data() + i * cols;
        IterationTrace t;
        t.iteration = static_cast<std::int64_t>(r[0]);
        t.loss_s = r[1];
        t.loss_u = r[2];
        t.mask_rate = r[3];
        t.l2_ptr_to_true = r[4];
        t.l2_pseudo_to_uniform = r[5];
        t.l2_pseudo_all_to_uniform = r[6];
        t.pseudo_histogram.assign(r + 7, r + 7 + classes);
        t.pseudo_histogram_all.assign(r + 7 + classes, r + 7 + 2 * classes);
        state.trace.push_back(std::move(t));
    }
    return state;
}

} // namespace tcbc::io
