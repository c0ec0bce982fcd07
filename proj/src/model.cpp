#include "tisr/model.hpp"

#include <string>

#include "tisr/errors.hpp"

namespace tisr {

namespace F = torch::nn::functional;

void ModelConfig::validate() const {
    if (n_channels < 1 || n_blocks < 1 || window < 1 || heads < 1 || !(mlp_ratio > 0.0)) {
        throw ConfigError("model hyperparameters must be positive");
    }
    if (n_channels % heads != 0) {
        throw ConfigError("n_channels (" + std::to_string(n_channels) + ") must be divisible by heads (" +
                          std::to_string(heads) + ")");
    }
    if (scale != 2 && scale != 4) throw ConfigError("scale must be 2 or 4");
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
    j = {{"n_channels", cfg.n_channels}, {"n_blocks", cfg.n_blocks}, {"window", cfg.window},
         {"heads", cfg.heads},           {"mlp_ratio", cfg.mlp_ratio}, {"scale", cfg.scale},
         {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
    ModelConfig d;
    cfg.n_channels = j.value("n_channels", d.n_channels);
    cfg.n_blocks = j.value("n_blocks", d.n_blocks);
    cfg.window = j.value("window", d.window);
    cfg.heads = j.value("heads", d.heads);
    cfg.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
    cfg.scale = j.value("scale", d.scale);
    cfg.seed = j.value("seed", d.seed);
}

BNCSNTImpl::BNCSNTImpl(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int64_t n = cfg_.n_channels;
    auto conv = [](int64_t in, int64_t out, int64_t k) {
        return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).padding(k / 2));
    };
    stem = register_module("stem", conv(1, n, 3));
    context_entry = register_module("context_entry", conv(n, 2 * n, 5));
    context_blocks = register_module("context_blocks", torch::nn::ModuleList());
    for (int64_t k = 0; k < cfg_.n_blocks; ++k) context_blocks->push_back(SwinBasedBlock(cfg_.swin()));
    spatial_entry = register_module("spatial_entry", conv(n, n, 5));
    spatial_layer = register_module("spatial_layer", SwinBasicLayer(cfg_.swin()));
    arm = register_module("arm", AttentionRefinement(n, cfg_.n_blocks + 1));
    ffm = register_module("ffm", FeatureFusion(n));
    upsampler = register_module("upsampler", Upsampler(n, cfg_.scale));
}

torch::Tensor BNCSNTImpl::forward(const torch::Tensor& lr) {
    if (lr.dim() != 4 || lr.size(1) != 1) throw ArgumentError("generator expects (B, 1, H, W) input");
    const int64_t h = lr.size(2);
    const int64_t w = lr.size(3);
    const int64_t pad_h = (cfg_.window - h % cfg_.window) % cfg_.window;
    const int64_t pad_w = (cfg_.window - w % cfg_.window) % cfg_.window;

    auto x = lr;
    if (pad_h > 0 || pad_w > 0) {
        // Reflection needs the pad to be smaller than the dimension.
        const bool can_reflect = pad_h < h && pad_w < w;
        F::PadFuncOptions::mode_t mode = torch::kReflect;
        if (!can_reflect) mode = torch::kReplicate;
        x = F::pad(x, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(mode));
    }

    const int64_t n = cfg_.n_channels;
    auto feats = stem(x);

    auto entry = context_entry(feats).split(n, 1);
    std::vector<torch::Tensor> to_arm{entry[1]};
    auto context = entry[0];
    for (const auto& block : *context_blocks) {
        auto [next, side] = block->as<SwinBasedBlockImpl>()->forward(context);
        context = next;
        to_arm.push_back(side);
    }

    auto spatial = spatial_layer(spatial_entry(feats));
    auto fused = ffm(context, arm(to_arm), spatial);
    auto sr = upsampler(fused);

    if (pad_h > 0 || pad_w > 0) {
        sr = sr.narrow(2, 0, h * cfg_.scale).narrow(3, 0, w * cfg_.scale).contiguous();
    }
    return sr;
}

BNCSNT build_model(const ModelConfig& cfg) {
    BNCSNT model(cfg);
    initialize_parameters(*model, cfg.seed);
    return model;
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& cfg) {
    j = {{"base_channels", cfg.base_channels}, {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& cfg) {
    DiscriminatorConfig d;
    cfg.base_channels = j.value("base_channels", d.base_channels);
    cfg.seed = j.value("seed", d.seed);
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    if (cfg_.base_channels < 1) throw ConfigError("discriminator base_channels must be positive");
    const int64_t b = cfg_.base_channels;
    const int64_t widths[] = {1, b, 2 * b, 4 * b, 8 * b, 1};
    const int64_t strides[] = {2, 2, 2, 1, 1};
    layers = register_module("layers", torch::nn::ModuleList());
    for (int i = 0; i < 5; ++i) {
        layers->push_back(
            torch::nn::Conv2d(torch::nn::Conv2dOptions(widths[i], widths[i + 1], 4).stride(strides[i]).padding(1)));
    }
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != 1) throw ArgumentError("discriminator expects (B, 1, H, W) input");
    auto y = x;
    const auto count = layers->size();
    for (std::size_t i = 0; i < count; ++i) {
        y = layers[i]->as<torch::nn::Conv2dImpl>()->forward(y);
        if (i + 1 < count) y = F::leaky_relu(y, F::LeakyReLUFuncOptions().negative_slope(0.2));
    }
    return y;
}

PatchDiscriminator build_discriminator(const DiscriminatorConfig& cfg) {
    PatchDiscriminator d(cfg);
    initialize_parameters(*d, cfg.seed);
    return d;
}

int64_t discriminator_output_size(int64_t input_size) {
    // kernel 4, padding 1: out = floor((in + 2 - 4) / stride) + 1
    int64_t s = input_size;
    for (int64_t stride : {2, 2, 2, 1, 1}) {
        if (s < 2) return 0;  // padded input smaller than the kernel
        s = (s - 2) / stride + 1;
    }
    return s;
}

int64_t parameter_count(const torch::nn::Module& module) {
    int64_t total = 0;
    for (const auto& p : module.parameters()) total += p.numel();
    return total;
}

}  // namespace tisr
