#include "tcbc/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace tcbc::io {

using nlohmann::json;

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    std::snprintf(buf.data(), buf.size(), "%.9g", value);
    return buf.data();
}

double round9(double value) {
    if (!std::isfinite(value)) return value;
    return std::strtod(format_number(value).c_str(), nullptr);
}

std::string sha256_hex(const std::string& bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        hex.push_back(kHex[digest[i] >> 4]);
        hex.push_back(kHex[digest[i] & 0xF]);
    }
    return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot write " + path.string());
    }
    out << contents;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> parts;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep)) parts.push_back(cell);
    if (!line.empty() && line.back() == sep) parts.emplace_back();
    return parts;
}

double parse_double(const std::string& text) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        throw FormatError("not a number: '" + text + "'");
    }
    if (used != text.size()) throw FormatError("not a number: '" + text + "'");
    return value;
}

json rounded(std::span<const double> values) {
    json arr = json::array();
    for (double v : values) arr.push_back(round9(v));
    return arr;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(rounded(m.row(i)));
    return rows;
}

} // namespace

// --- datasets ------------------------------------------------------------------------

json dataset_sidecar(const SyntheticSSLDataset& data) {
    const auto& s = data.spec;
    json j;
    j["schema_version"] = kSchemaVersion;
    j["spec"] = {{"classes", s.classes}, {"n1", s.n1},           {"m1", s.m1},
                 {"gamma_l", round9(s.gamma_l)}, {"gamma_u", round9(s.gamma_u)}, {"seed", s.seed}};
    j["dim"] = data.dim;
    j["separation"] = round9(data.separation);
    j["test_per_class"] = data.test_per_class;
    j["class_means"] = matrix_json(data.class_means);
    j["counts"] = {{"labeled", split_counts(s.n1, s.gamma_l, s.classes)},
                   {"unlabeled", split_counts(s.m1, s.gamma_u, s.classes)},
                   {"test", std::vector<std::int64_t>(s.classes, data.test_per_class)}};
    j["csv"] = kDatasetCsv;
    return j;
}

void write_dataset(const fs::path& dir, const SyntheticSSLDataset& data) {
    std::ostringstream csv;
    csv << "schema_version,split,label";
    for (std::size_t d = 0; d < data.dim; ++d) csv << ",x" << d;
    csv << '\n';
    auto emit = [&](const char* split, const Matrix& xs, std::span<const ClassIndex> ys) {
        for (std::size_t i = 0; i < xs.rows(); ++i) {
            csv << kSchemaVersion << ',' << split << ',' << ys[i];
            for (double v : xs.row(i)) csv << ',' << format_number(v);
            csv << '\n';
        }
    };
    emit("labeled", data.labeled_x, data.labeled_y);
    emit("unlabeled", data.unlabeled_x, data.unlabeled_hidden_y);
    emit("test", data.test_x, data.test_y);
    write_file(dir / kDatasetCsv, csv.str());
    write_file(dir / kDatasetSidecar, dump_json(dataset_sidecar(data)));
}

SyntheticSSLDataset read_dataset(const fs::path& dir) {
    if (!fs::exists(dir / kDatasetSidecar) || !fs::exists(dir / kDatasetCsv)) {
        throw FormatError("no dataset found in " + dir.string() + " (expected " + kDatasetCsv +
                          " and " + kDatasetSidecar + ")");
    }
    json side;
    try {
        side = json::parse(read_file(dir / kDatasetSidecar));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed dataset sidecar: ") + e.what());
    }
    if (side.value("schema_version", -1) != kSchemaVersion) {
        throw FormatError("dataset sidecar has unsupported schema_version");
    }
    SyntheticSSLDataset data;
    try {
        const auto& s = side.at("spec");
        data.spec.classes = s.at("classes").get<std::size_t>();
        data.spec.n1 = s.at("n1").get<std::int64_t>();
        data.spec.m1 = s.at("m1").get<std::int64_t>();
        data.spec.gamma_l = s.at("gamma_l").get<double>();
        data.spec.gamma_u = s.at("gamma_u").get<double>();
        data.spec.seed = s.at("seed").get<std::uint64_t>();
        data.dim = side.at("dim").get<std::size_t>();
        data.separation = side.at("separation").get<double>();
        data.test_per_class = side.at("test_per_class").get<std::int64_t>();
        data.class_means = Matrix(data.spec.classes, data.dim);
        const auto& means = side.at("class_means");
        for (std::size_t k = 0; k < data.spec.classes; ++k) {
            for (std::size_t d = 0; d < data.dim; ++d) {
                data.class_means(k, d) = means.at(k).at(d).get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed dataset sidecar: ") + e.what());
    }

    const auto table = read_csv(dir / kDatasetCsv);
    if (table.header.size() != 3 + data.dim || table.header[0] != "schema_version") {
        throw FormatError("dataset csv header does not match the sidecar");
    }
    data.labeled_x = Matrix(0, data.dim);
    data.unlabeled_x = Matrix(0, data.dim);
    data.test_x = Matrix(0, data.dim);
    std::vector<double> x(data.dim);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size() || row[0] != std::to_string(kSchemaVersion)) {
            throw FormatError("dataset csv row does not match schema");
        }
        const auto label = static_cast<ClassIndex>(parse_double(row[2]));
        if (label < 0 || static_cast<std::size_t>(label) >= data.spec.classes) {
            throw FormatError("dataset csv label out of range");
        }
        for (std::size_t d = 0; d < data.dim; ++d) x[d] = parse_double(row[3 + d]);
        if (row[1] == "labeled") {
            data.labeled_x.append_row(x);
            data.labeled_y.push_back(label);
        } else if (row[1] == "unlabeled") {
            data.unlabeled_x.append_row(x);
            data.unlabeled_hidden_y.push_back(label);
        } else if (row[1] == "test") {
            data.test_x.append_row(x);
            data.test_y.push_back(label);
        } else {
            throw FormatError("dataset csv has unknown split '" + row[1] + "'");
        }
    }
    return data;
}

// --- traces --------------------------------------------------------------------------

std::vector<std::string> trace_header(std::size_t classes) {
    std::vector<std::string> header{"schema_version", "iteration", "loss_s", "loss_u",
                                    "mask_rate", "l2_ptr_to_true", "l2_pseudo_to_uniform",
                                    "l2_pseudo_all_to_uniform"};
    for (std::size_t k = 0; k < classes; ++k) header.push_back("pseudo_hist_" + std::to_string(k));
    for (std::size_t k = 0; k < classes; ++k) header.push_back("pseudo_hist_all_" + std::to_string(k));
    return header;
}

std::string trace_csv(const std::vector<IterationTrace>& trace, std::size_t classes) {
    std::ostringstream os;
    const auto header = trace_header(classes);
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& t : trace) {
        os << kSchemaVersion << ',' << t.iteration << ',' << format_number(t.loss_s) << ','
           << format_number(t.loss_u) << ',' << format_number(t.mask_rate) << ','
           << format_number(t.l2_ptr_to_true) << ',' << format_number(t.l2_pseudo_to_uniform)
           << ',' << format_number(t.l2_pseudo_all_to_uniform);
        for (double h : t.pseudo_histogram) os << ',' << format_number(h);
        for (double h : t.pseudo_histogram_all) os << ',' << format_number(h);
        os << '\n';
    }
    return os.str();
}

CsvTable read_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(path.string() + " is empty");
    }
    table.header = split(line, ',');
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        table.rows.push_back(split(line, ','));
    }
    return table;
}

std::string tidy_traces(const std::vector<std::pair<std::string, CsvTable>>& traces) {
    std::ostringstream os;
    os << "schema_version,run_id,iteration,metric,value\n";
    for (const auto& [run_id, table] : traces) {
        const auto& h = table.header;
        if (h.size() < 3 || h[0] != "schema_version" || h[1] != "iteration") {
            throw FormatError("trace for run '" + run_id + "' does not follow the trace schema");
        }
        if (run_id.find(',') != std::string::npos) {
            throw FormatError("run id must not contain commas: " + run_id);
        }
        for (const auto& row : table.rows) {
            if (row.size() != h.size() || row[0] != std::to_string(kSchemaVersion)) {
                throw FormatError("trace for run '" + run_id + "' has a row that does not match its header");
            }
            for (std::size_t c = 2; c < h.size(); ++c) {
                os << kSchemaVersion << ',' << run_id << ',' << row[1] << ',' << h[c] << ','
                   << row[c] << '\n';
            }
        }
    }
    return os.str();
}

// --- configs and results -------------------------------------------------------------

json config_to_json(const TrainConfig& c) {
    const auto& a = c.augmentation;
    return {
        {"mode", to_string(c.mode)},
        {"tau_c", round9(c.tau_c)},
        {"lambda", round9(c.lambda)},
        {"momentum", round9(c.momentum)},
        {"window", c.window},
        {"learning_rate", round9(c.learning_rate)},
        {"weight_decay", round9(c.weight_decay)},
        {"iterations", c.iterations},
        {"labeled_batch", c.labeled_batch},
        {"unlabeled_batch", c.unlabeled_batch},
        {"ema_decay", round9(c.ema_decay)},
        {"prior_smoothing", round9(c.prior_smoothing)},
        {"bias_source", to_string(c.bias_source)},
        {"mask_on_refined", c.mask_on_refined},
        {"seed", c.seed},
        {"hidden", c.hidden},
        {"augmentation",
         {{"weak_sigma", round9(a.weak_sigma)},
          {"strong_sigma", round9(a.strong_sigma)},
          {"strong_dropout_p", round9(a.strong_dropout_p)},
          {"strong_scale_min", round9(a.strong_scale_min)},
          {"strong_scale_max", round9(a.strong_scale_max)}}},
        {"eval_every", c.eval_every},
        {"checkpoint_every", c.checkpoint_every},
        {"freeze_prior_uniform", c.freeze_prior_uniform},
        {"freeze_bias_zero", c.freeze_bias_zero},
    };
}

std::string config_hash(const TrainConfig& config) {
    auto j = config_to_json(config);
    // Settings that do not alter the trajectory up to a given iteration.
    j.erase("iterations");
    j.erase("checkpoint_every");
    return sha256_hex(j.dump()).substr(0, 16);
}

json result_to_json(const RunResult& r, const SyntheticSSLDataset& data) {
    const auto& e = r.final_eval;
    json cm = json::array();
    for (std::size_t i = 0; i < e.confusion.classes(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < e.confusion.classes(); ++j) row.push_back(e.confusion.at(i, j));
        cm.push_back(row);
    }
    json evals = json::array();
    for (const auto& p : r.evals) evals.push_back({p.iteration, round9(p.balanced_accuracy)});

    json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = config_to_json(r.config);
    j["dataset"] = dataset_sidecar(data)["spec"];
    j["final"] = {
        {"balanced_accuracy", round9(e.balanced_accuracy)},
        {"top1_accuracy", round9(e.top1_accuracy)},
        {"per_class_recall", rounded(e.recall)},
        {"confusion_matrix", cm},
        {"median_last20_balanced_accuracy", round9(r.median_last20_balanced_accuracy)},
        {"estimated_prior", rounded(r.final_ptr.probs)},
        {"bias_estimate", rounded(r.final_bias)},
    };
    j["evaluations"] = evals;
    j["iterations_run"] = r.trace.empty() ? 0 : r.trace.back().iteration + 1;
    return j;
}

std::string dump_json(const json& value) { return value.dump(2) + "\n"; }

// --- manifests -----------------------------------------------------------------------

std::vector<ManifestFile> hash_files(const fs::path& root, const std::vector<std::string>& relative) {
    std::vector<ManifestFile> files;
    for (const auto& rel : relative) {
        const auto path = root / rel;
        files.push_back({rel, sha256_file(path), fs::file_size(path)});
    }
    return files;
}

VerifyReport verify_manifest(const fs::path& root) {
    json manifest;
    try {
        manifest = json::parse(read_file(root / "manifest.json"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    VerifyReport report;
    for (const auto& f : manifest.at("files")) {
        const auto rel = f.at("path").get<std::string>();
        const auto path = root / rel;
        if (!fs::exists(path)) {
            report.missing.push_back(rel);
        } else if (sha256_file(path) != f.at("sha256").get<std::string>()) {
            report.modified.push_back(rel);
        }
    }
    return report;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::array<char, 32> buf{};
    std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf.data();
}

} // namespace tcbc::io
