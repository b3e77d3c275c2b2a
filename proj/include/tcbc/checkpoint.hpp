#pragma once

// Named-array persistence: a flat little-endian float64 blob (<stem>.bin) plus a JSON
// manifest (<stem>.json) giving each array's name, shape and offset. Used for model
// parameters and for full trainer checkpoints.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcbc/model.hpp"
#include "tcbc/trainer.hpp"

namespace tcbc::io {

struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

/// Writes <stem>.bin and <stem>.json. `extra` is stored under "meta" in the JSON.
void write_named_arrays(const std::filesystem::path& stem, const std::vector<NamedArray>& arrays,
                        const nlohmann::json& extra = nlohmann::json::object());

struct NamedArrayFile {
    std::vector<NamedArray> arrays;
    nlohmann::json meta;

    const NamedArray& get(const std::string& name) const;
};

NamedArrayFile read_named_arrays(const std::filesystem::path& stem);

void save_params(const std::filesystem::path& stem, const ModelParams& params);
ModelParams load_params(const std::filesystem::path& stem);

/// Everything needed to continue a run bit-for-bit: parameters, EMA shadow, sliding
/// window contents, bias estimate, evaluation history, trace so far, and the iteration
/// counter (the sampling streams are keyed by seed and iteration).
void save_checkpoint(const std::filesystem::path& stem, const TrainerState& state,
                     const TrainConfig& config);

/// Throws FormatError if the checkpoint was written under a different config hash.
TrainerState load_checkpoint(const std::filesystem::path& stem, const TrainConfig& config);

} // namespace tcbc::io
