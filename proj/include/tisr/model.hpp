#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "tisr/blocks.hpp"

namespace tisr {

struct ModelConfig {
    int64_t n_channels = 64;  // N
    int64_t n_blocks = 8;     // K
    int64_t window = 8;
    int64_t heads = 4;
    double mlp_ratio = 4.0;
    int64_t scale = 4;
    uint64_t seed = 0;

    void validate() const;
    SwinConfig swin() const { return {n_channels, window, heads, mlp_ratio}; }

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

// Bilateral super-resolution generator.
//
//   stem 3x3 (1 -> N) feeds both branches.
//   context: 5x5 (N -> 2N) -> split N/N; the first half runs through K
//            swin-based blocks, each handing N channels to the ARM list.
//   spatial: 5x5 (N -> N) -> swin basic layer.
//   ARM over the K+1 splits, FFM over (context, ARM, spatial), then the
//   pixel-shuffle upsampler.
class BNCSNTImpl : public torch::nn::Module {
public:
    explicit BNCSNTImpl(const ModelConfig& cfg);

    // (B, 1, H, W) -> (B, 1, scale*H, scale*W). Input is reflect-padded to a
    // multiple of the window and the output cropped back.
    torch::Tensor forward(const torch::Tensor& lr);

    const ModelConfig& config() const { return cfg_; }

    int64_t arm_input_channels() const { return arm->input_channels(); }
    int64_t ffm_input_channels() const { return ffm->input_channels(); }

    torch::nn::Conv2d stem{nullptr};
    torch::nn::Conv2d context_entry{nullptr};
    torch::nn::ModuleList context_blocks{nullptr};
    torch::nn::Conv2d spatial_entry{nullptr};
    SwinBasicLayer spatial_layer{nullptr};
    AttentionRefinement arm{nullptr};
    FeatureFusion ffm{nullptr};
    Upsampler upsampler{nullptr};

private:
    ModelConfig cfg_;
};
TORCH_MODULE(BNCSNT);

// Builds the generator and initializes it deterministically from cfg.seed.
BNCSNT build_model(const ModelConfig& cfg);

struct DiscriminatorConfig {
    int64_t base_channels = 64;
    uint64_t seed = 0;

    bool operator==(const DiscriminatorConfig&) const = default;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& cfg);
void from_json(const nlohmann::json& j, DiscriminatorConfig& cfg);

// 70x70 patch discriminator: 4x4 convs with strides (2, 2, 2, 1, 1), widths
// base * (1, 2, 4, 8) and a 1-channel raw score map. Leaky ReLU 0.2 between
// layers, no output nonlinearity.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    explicit PatchDiscriminatorImpl(const DiscriminatorConfig& cfg);

    torch::Tensor forward(const torch::Tensor& x);

    const DiscriminatorConfig& config() const { return cfg_; }

    torch::nn::ModuleList layers{nullptr};

private:
    DiscriminatorConfig cfg_;
};
TORCH_MODULE(PatchDiscriminator);

PatchDiscriminator build_discriminator(const DiscriminatorConfig& cfg);

// Score-map side length for a square input of the given size; 0 when the
// input is too small to produce any score.
int64_t discriminator_output_size(int64_t input_size);

int64_t parameter_count(const torch::nn::Module& module);

}  // namespace tisr
