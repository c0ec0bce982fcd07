#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "tisr/model.hpp"

namespace tisr {

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

// In-memory checkpoint. Tensor names are namespaced: "generator/<param>",
// "discriminator/<param>", "optim/<owner>/<moment>/<param>".
//
// On disk (little-endian):
//   bytes [0, 8)    magic "TISRCKP1"
//   bytes [8, 16)   uint64 manifest length M
//   bytes [16, 16+M) UTF-8 JSON manifest
//   remainder       raw C-order tensor data; each manifest tensor entry
//                   carries {name, dtype, shape, offset, nbytes} with offset
//                   relative to the start of the data section.
struct Checkpoint {
    ModelConfig model_config;
    std::optional<DiscriminatorConfig> discriminator_config;
    int64_t step = 0;
    std::string rng_state;
    nlohmann::json meta = nlohmann::json::object();
    NamedTensors tensors;

    const torch::Tensor* find(const std::string& name) const;
};

inline constexpr char kGeneratorPrefix[] = "generator/";
inline constexpr char kDiscriminatorPrefix[] = "discriminator/";

// Detached copies of every parameter, names prefixed.
NamedTensors export_parameters(const torch::nn::Module& module, const std::string& prefix);

// Copies checkpoint tensors into the module. Every parameter must have
// exactly one entry of identical shape and no stray entries may exist under
// the prefix; otherwise CorruptionError.
void import_parameters(torch::nn::Module& module, const Checkpoint& ckpt, const std::string& prefix);

// Generator-only checkpoint.
Checkpoint make_checkpoint(const BNCSNT& model, int64_t step = 0);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Builds a generator from the checkpoint config and loads its parameters.
BNCSNT restore_generator(const Checkpoint& ckpt);
PatchDiscriminator restore_discriminator(const Checkpoint& ckpt);

}  // namespace tisr
