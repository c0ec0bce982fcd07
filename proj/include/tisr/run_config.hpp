#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tisr/degradation.hpp"
#include "tisr/model.hpp"
#include "tisr/training.hpp"

namespace tisr {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr char kToolkitVersion[] = "0.1.0";

struct DataConfig {
    // Either a pair manifest or a directory of HR images degraded on the fly.
    std::optional<std::filesystem::path> manifest;
    std::optional<std::filesystem::path> hr_dir;
    std::optional<std::filesystem::path> validation_manifest;
    std::optional<std::filesystem::path> validation_hr_dir;
};

// Serializable description of one training run. Relative paths are resolved
// against the directory containing the config file.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DegradationConfig degradation;
    std::optional<DiscriminatorConfig> discriminator;
    DataConfig data;
    std::filesystem::path output_dir = "run";
    std::optional<std::filesystem::path> init_checkpoint;
};

// Rejects unknown keys (naming the dotted key path), wrong types and
// unresolvable paths with ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);

// Pairs for training (or validation when `validation` is set); an empty
// vector when no validation source is configured.
std::vector<PairedSample> load_training_pairs(const RunConfig& cfg, bool validation = false);

// Synthesizes pairs from every image in hr_dir with per-image seed
// cfg.seed ^ index.
std::vector<PairedSample> degrade_directory(const std::filesystem::path& hr_dir, const DegradationConfig& cfg);

}  // namespace tisr
