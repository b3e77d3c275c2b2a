#pragma once

// File formats: dataset CSV + JSON sidecar, per-iteration trace CSV, result.json,
// run manifests with SHA-256 content hashes. All numbers are written with 9 significant
// digits and every CSV carries a schema_version column.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcbc/data_synth.hpp"
#include "tcbc/trainer.hpp"

namespace tcbc::io {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kDatasetCsv = "dataset.csv";
inline constexpr const char* kDatasetSidecar = "dataset.json";

/// Thrown for missing or malformed files; maps to the usage/input exit code.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// "%.9g"
std::string format_number(double value);
/// Rounds to 9 significant digits (the value format_number would print).
double round9(double value);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& contents);

// --- datasets --------------------------------------------------------------------------

void write_dataset(const fs::path& dir, const SyntheticSSLDataset& data);
SyntheticSSLDataset read_dataset(const fs::path& dir);
nlohmann::json dataset_sidecar(const SyntheticSSLDataset& data);

// --- traces ----------------------------------------------------------------------------

std::vector<std::string> trace_header(std::size_t classes);
std::string trace_csv(const std::vector<IterationTrace>& trace, std::size_t classes);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path);

/// Melts traces into (schema_version, run_id, iteration, metric, value) rows.
/// Throws FormatError when a trace does not follow the trace schema.
std::string tidy_traces(const std::vector<std::pair<std::string, CsvTable>>& traces);

// --- configs and results ---------------------------------------------------------------

nlohmann::json config_to_json(const TrainConfig& config);
/// Hash over every setting that changes the training trajectory.
std::string config_hash(const TrainConfig& config);

/// Deterministic summary of a run (no timings), the content of result.json.
nlohmann::json result_to_json(const RunResult& result, const SyntheticSSLDataset& data);

/// Serializes with a trailing newline and stable key order.
std::string dump_json(const nlohmann::json& value);

// --- manifests -------------------------------------------------------------------------

struct ManifestFile {
    std::string path; ///< relative to the run directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

std::vector<ManifestFile> hash_files(const fs::path& root, const std::vector<std::string>& relative);

struct VerifyReport {
    std::vector<std::string> missing;
    std::vector<std::string> modified;
    bool ok() const { return missing.empty() && modified.empty(); }
};

/// Re-hashes every file listed in root/manifest.json.
VerifyReport verify_manifest(const fs::path& root);

std::string utc_timestamp();

} // namespace tcbc::io
