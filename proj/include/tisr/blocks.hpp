#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace tisr {

// Hyperparameters shared by every Swin layer in the network.
struct SwinConfig {
    int64_t channels = 64;
    int64_t window = 8;
    int64_t heads = 4;
    double mlp_ratio = 4.0;

    void validate() const;
};

// (B, C, H, W) -> (B * nW, window^2, C); windows ordered batch-major, then
// row-major over the window grid; tokens row-major inside each window.
torch::Tensor window_partition(const torch::Tensor& x, int64_t window);

// Inverse of window_partition.
torch::Tensor window_reverse(const torch::Tensor& windows, int64_t window, int64_t batch, int64_t height,
                             int64_t width);

// Boolean (nW, T, T) mask, true where two tokens of a shifted window come
// from different regions of the unshifted image and must not attend.
torch::Tensor shifted_window_mask(int64_t height, int64_t width, int64_t window, int64_t shift);

// (window^2, window^2) lookup into the relative position bias table.
torch::Tensor relative_position_index(int64_t window);

// out[b, c, h*r + i, w*r + j] = x[b, c*r*r + i*r + j, h, w]
torch::Tensor pixel_shuffle(const torch::Tensor& x, int64_t r);
torch::Tensor pixel_unshuffle(const torch::Tensor& x, int64_t r);

// Multi-head self-attention inside (optionally cyclically shifted) windows,
// with a learned relative position bias.
class WindowAttentionImpl : public torch::nn::Module {
public:
    explicit WindowAttentionImpl(const SwinConfig& cfg);

    // x: (B, C, H, W) with H, W divisible by the window.
    torch::Tensor forward(const torch::Tensor& x, int64_t shift = 0);

    // Channel-last entry point used by the transformer blocks: (B, H, W, C).
    torch::Tensor forward_channels_last(const torch::Tensor& x, int64_t shift);

    // Softmax weights (B * nW, heads, T, T) for inspection.
    torch::Tensor attention_weights(const torch::Tensor& x, int64_t shift = 0);

    const SwinConfig& config() const { return cfg_; }

    torch::nn::Linear qkv{nullptr};
    torch::nn::Linear proj{nullptr};
    torch::Tensor relative_position_bias_table;

private:
    std::pair<torch::Tensor, torch::Tensor> attend(const torch::Tensor& windows, const torch::Tensor& mask);
    torch::Tensor shift_mask(int64_t height, int64_t width, int64_t shift, const torch::Tensor& like);

    SwinConfig cfg_;
    torch::Tensor position_index_;
};
TORCH_MODULE(WindowAttention);

// Pre-norm transformer block: x + attn(norm(x)), then x + mlp(norm(x)).
class SwinTransformerBlockImpl : public torch::nn::Module {
public:
    SwinTransformerBlockImpl(const SwinConfig& cfg, int64_t shift);

    torch::Tensor forward(const torch::Tensor& x);

    int64_t shift() const { return shift_; }

    torch::nn::LayerNorm norm1{nullptr};
    WindowAttention attn{nullptr};
    torch::nn::LayerNorm norm2{nullptr};
    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};

private:
    int64_t shift_;
};
TORCH_MODULE(SwinTransformerBlock);

// Two transformer blocks: unshifted, then shifted by half a window.
class SwinBasicLayerImpl : public torch::nn::Module {
public:
    explicit SwinBasicLayerImpl(const SwinConfig& cfg);

    torch::Tensor forward(const torch::Tensor& x);

    SwinTransformerBlock block1{nullptr};
    SwinTransformerBlock block2{nullptr};
};
TORCH_MODULE(SwinBasicLayer);

// Channel-splitting block: N -> Swin layer -> concat with input -> 1x1 conv
// to 2N -> split into (next block, ARM).
class SwinBasedBlockImpl : public torch::nn::Module {
public:
    explicit SwinBasedBlockImpl(const SwinConfig& cfg);

    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x);

    SwinBasicLayer layer{nullptr};
    torch::nn::Conv2d fuse{nullptr};

private:
    int64_t channels_;
};
TORCH_MODULE(SwinBasedBlock);

// Attention refinement over the (K+1) split features of the context branch.
class AttentionRefinementImpl : public torch::nn::Module {
public:
    AttentionRefinementImpl(int64_t channels, int64_t splits);

    torch::Tensor forward(const std::vector<torch::Tensor>& splits);

    // Channel attention vector (B, (K+1)N, 1, 1) for a concatenated input.
    torch::Tensor attention(const torch::Tensor& concatenated);

    int64_t input_channels() const;
    int64_t output_channels() const;

    torch::nn::Conv2d attend{nullptr};
    torch::nn::Conv2d reduce{nullptr};

private:
    int64_t channels_;
    int64_t splits_;
};
TORCH_MODULE(AttentionRefinement);

// Fuses context, ARM and spatial features: f = relu(conv1x1(concat)),
// out = f + f * attention(f).
class FeatureFusionImpl : public torch::nn::Module {
public:
    explicit FeatureFusionImpl(int64_t channels);

    torch::Tensor forward(const torch::Tensor& context, const torch::Tensor& refined, const torch::Tensor& spatial);

    torch::Tensor fuse_inputs(const torch::Tensor& context, const torch::Tensor& refined,
                              const torch::Tensor& spatial);
    torch::Tensor attention(const torch::Tensor& fused);
    static torch::Tensor combine(const torch::Tensor& fused, const torch::Tensor& attention);

    int64_t input_channels() const;

    torch::nn::Conv2d fuse{nullptr};
    torch::nn::Conv2d squeeze{nullptr};
    torch::nn::Conv2d excite{nullptr};

private:
    int64_t channels_;
};
TORCH_MODULE(FeatureFusion);

// log2(scale) stages of (3x3 conv N -> 4N, pixel shuffle x2), then a 3x3 conv
// down to one channel.
class UpsamplerImpl : public torch::nn::Module {
public:
    UpsamplerImpl(int64_t channels, int64_t scale);

    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::ModuleList stages{nullptr};
    torch::nn::Conv2d out{nullptr};
};
TORCH_MODULE(Upsampler);

// Deterministic initialization: convolutions get fan-in scaled uniform
// weights/biases, linear layers and position bias tables a normal with std
// 0.02 truncated at two sigma, layer norms (1, 0).
void initialize_parameters(torch::nn::Module& module, uint64_t seed);

// Overwrites every parameter with zero.
void zero_parameters(torch::nn::Module& module);

}  // namespace tisr
