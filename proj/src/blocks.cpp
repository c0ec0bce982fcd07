#include "tisr/blocks.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <ATen/CPUGeneratorImpl.h>

#include "tisr/errors.hpp"

namespace tisr {

namespace F = torch::nn::functional;

namespace {

void check_window_divisible(int64_t height, int64_t width, int64_t window) {
    if (window < 1 || height % window != 0 || width % window != 0) {
        throw ArgumentError("spatial dims " + std::to_string(height) + "x" + std::to_string(width) +
                            " not divisible by window " + std::to_string(window));
    }
}

// (B, H, W, C) -> (B * nW, window^2, C)
torch::Tensor partition_channels_last(const torch::Tensor& x, int64_t window) {
    const int64_t b = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
    return x.reshape({b, h / window, window, w / window, window, c})
        .permute({0, 1, 3, 2, 4, 5})
        .reshape({-1, window * window, c});
}

// (B * nW, window^2, C) -> (B, H, W, C)
torch::Tensor reverse_channels_last(const torch::Tensor& windows, int64_t window, int64_t batch, int64_t height,
                                    int64_t width) {
    const int64_t c = windows.size(2);
    return windows.reshape({batch, height / window, width / window, window, window, c})
        .permute({0, 1, 3, 2, 4, 5})
        .reshape({batch, height, width, c});
}

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).padding(kernel / 2).bias(true));
}

void trunc_normal_(torch::Tensor& t, double std, at::Generator& gen) {
    // Normal truncated at +-2 std by inverse-CDF sampling.
    const double lo = 0.5 * (1.0 + std::erf(-2.0 / std::sqrt(2.0)));
    const double hi = 0.5 * (1.0 + std::erf(2.0 / std::sqrt(2.0)));
    t.uniform_(2.0 * lo - 1.0, 2.0 * hi - 1.0, gen);
    t.erfinv_();
    t.mul_(std * std::sqrt(2.0));
    t.clamp_(-2.0 * std, 2.0 * std);
}

}  // namespace

void SwinConfig::validate() const {
    if (channels < 1 || window < 1 || heads < 1 || !(mlp_ratio > 0.0)) {
        throw ConfigError("swin hyperparameters must be positive");
    }
    if (channels % heads != 0) {
        throw ConfigError("channels (" + std::to_string(channels) + ") not divisible by heads (" +
                          std::to_string(heads) + ")");
    }
}

torch::Tensor window_partition(const torch::Tensor& x, int64_t window) {
    if (x.dim() != 4) throw ArgumentError("window_partition expects (B, C, H, W)");
    check_window_divisible(x.size(2), x.size(3), window);
    return partition_channels_last(x.permute({0, 2, 3, 1}), window);
}

torch::Tensor window_reverse(const torch::Tensor& windows, int64_t window, int64_t batch, int64_t height,
                             int64_t width) {
    check_window_divisible(height, width, window);
    return reverse_channels_last(windows, window, batch, height, width).permute({0, 3, 1, 2}).contiguous();
}

torch::Tensor shifted_window_mask(int64_t height, int64_t width, int64_t window, int64_t shift) {
    check_window_divisible(height, width, window);
    // Region labels of the rolled image: the last `shift` rows/cols wrapped
    // around from the other side and form their own regions.
    auto region = [&](int64_t i, int64_t size) -> int64_t {
        if (i < size - window) return 0;
        if (i < size - shift) return 1;
        return 2;
    };
    const int64_t tokens = window * window;
    const int64_t nh = height / window;
    const int64_t nw = width / window;
    auto mask = torch::zeros({nh * nw, tokens, tokens}, torch::kBool);
    auto acc = mask.accessor<bool, 3>();
    std::vector<int64_t> labels(tokens);
    for (int64_t wy = 0; wy < nh; ++wy) {
        for (int64_t wx = 0; wx < nw; ++wx) {
            for (int64_t t = 0; t < tokens; ++t) {
                const int64_t r = wy * window + t / window;
                const int64_t c = wx * window + t % window;
                labels[t] = region(r, height) * 3 + region(c, width);
            }
            const int64_t widx = wy * nw + wx;
            for (int64_t a = 0; a < tokens; ++a) {
                for (int64_t b = 0; b < tokens; ++b) acc[widx][a][b] = labels[a] != labels[b];
            }
        }
    }
    return mask;
}

torch::Tensor relative_position_index(int64_t window) {
    const int64_t tokens = window * window;
    auto index = torch::empty({tokens, tokens}, torch::kLong);
    auto acc = index.accessor<int64_t, 2>();
    for (int64_t a = 0; a < tokens; ++a) {
        for (int64_t b = 0; b < tokens; ++b) {
            const int64_t dy = a / window - b / window + window - 1;
            const int64_t dx = a % window - b % window + window - 1;
            acc[a][b] = dy * (2 * window - 1) + dx;
        }
    }
    return index;
}

torch::Tensor pixel_shuffle(const torch::Tensor& x, int64_t r) {
    if (x.dim() != 4 || r < 1 || x.size(1) % (r * r) != 0) {
        throw ArgumentError("pixel_shuffle needs (B, C*r^2, H, W) input");
    }
    const int64_t b = x.size(0), c = x.size(1) / (r * r), h = x.size(2), w = x.size(3);
    return x.reshape({b, c, r, r, h, w}).permute({0, 1, 4, 2, 5, 3}).reshape({b, c, h * r, w * r});
}

torch::Tensor pixel_unshuffle(const torch::Tensor& x, int64_t r) {
    if (x.dim() != 4 || r < 1 || x.size(2) % r != 0 || x.size(3) % r != 0) {
        throw ArgumentError("pixel_unshuffle needs spatial dims divisible by r");
    }
    const int64_t b = x.size(0), c = x.size(1), h = x.size(2) / r, w = x.size(3) / r;
    return x.reshape({b, c, h, r, w, r}).permute({0, 1, 3, 5, 2, 4}).reshape({b, c * r * r, h, w});
}

// ---------------------------------------------------------------------------

WindowAttentionImpl::WindowAttentionImpl(const SwinConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    qkv = register_module("qkv", torch::nn::Linear(cfg_.channels, 3 * cfg_.channels));
    proj = register_module("proj", torch::nn::Linear(cfg_.channels, cfg_.channels));
    const int64_t span = 2 * cfg_.window - 1;
    relative_position_bias_table =
        register_parameter("relative_position_bias_table", torch::zeros({span * span, cfg_.heads}));
    position_index_ = relative_position_index(cfg_.window).reshape({-1});
}

torch::Tensor WindowAttentionImpl::shift_mask(int64_t height, int64_t width, int64_t shift,
                                              const torch::Tensor& like) {
    if (shift == 0) return {};
    return shifted_window_mask(height, width, cfg_.window, shift).to(like.device());
}

std::pair<torch::Tensor, torch::Tensor> WindowAttentionImpl::attend(const torch::Tensor& windows,
                                                                    const torch::Tensor& mask) {
    const int64_t bw = windows.size(0);
    const int64_t tokens = windows.size(1);
    const int64_t c = windows.size(2);
    const int64_t heads = cfg_.heads;
    const int64_t head_dim = c / heads;

    auto qkv_out = qkv(windows).reshape({bw, tokens, 3, heads, head_dim}).permute({2, 0, 3, 1, 4});
    auto q = qkv_out[0] * (1.0 / std::sqrt(static_cast<double>(head_dim)));
    auto k = qkv_out[1];
    auto v = qkv_out[2];

    auto logits = torch::matmul(q, k.transpose(-2, -1));
    auto bias = relative_position_bias_table.index_select(0, position_index_)
                    .reshape({tokens, tokens, heads})
                    .permute({2, 0, 1});
    logits = logits + bias.unsqueeze(0);

    if (mask.defined()) {
        const int64_t nw = mask.size(0);
        logits = logits.reshape({bw / nw, nw, heads, tokens, tokens})
                     .masked_fill(mask.reshape({1, nw, 1, tokens, tokens}),
                                  -std::numeric_limits<double>::infinity())
                     .reshape({bw, heads, tokens, tokens});
    }
    auto weights = torch::softmax(logits, -1);
    auto out = torch::matmul(weights, v).transpose(1, 2).reshape({bw, tokens, c});
    return {proj(out), weights};
}

torch::Tensor WindowAttentionImpl::forward_channels_last(const torch::Tensor& x, int64_t shift) {
    const int64_t b = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
    if (c != cfg_.channels) throw ConfigError("window attention channel mismatch");
    check_window_divisible(h, w, cfg_.window);
    if (shift < 0 || shift >= cfg_.window) throw ArgumentError("shift must lie in [0, window)");

    auto shifted = shift > 0 ? torch::roll(x, {-shift, -shift}, {1, 2}) : x;
    auto windows = partition_channels_last(shifted, cfg_.window);
    auto [out, weights] = attend(windows, shift_mask(h, w, shift, x));
    auto merged = reverse_channels_last(out, cfg_.window, b, h, w);
    return shift > 0 ? torch::roll(merged, {shift, shift}, {1, 2}) : merged;
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& x, int64_t shift) {
    if (x.dim() != 4) throw ArgumentError("window attention expects (B, C, H, W)");
    return forward_channels_last(x.permute({0, 2, 3, 1}), shift).permute({0, 3, 1, 2}).contiguous();
}

torch::Tensor WindowAttentionImpl::attention_weights(const torch::Tensor& x, int64_t shift) {
    const int64_t h = x.size(2), w = x.size(3);
    check_window_divisible(h, w, cfg_.window);
    auto cl = x.permute({0, 2, 3, 1});
    auto shifted = shift > 0 ? torch::roll(cl, {-shift, -shift}, {1, 2}) : cl;
    return attend(partition_channels_last(shifted, cfg_.window), shift_mask(h, w, shift, x)).second;
}

// ---------------------------------------------------------------------------

SwinTransformerBlockImpl::SwinTransformerBlockImpl(const SwinConfig& cfg, int64_t shift) : shift_(shift) {
    cfg.validate();
    const auto hidden = static_cast<int64_t>(std::llround(cfg.mlp_ratio * static_cast<double>(cfg.channels)));
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.channels})));
    attn = register_module("attn", WindowAttention(cfg));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.channels})));
    fc1 = register_module("fc1", torch::nn::Linear(cfg.channels, hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, cfg.channels));
}

torch::Tensor SwinTransformerBlockImpl::forward(const torch::Tensor& x) {
    auto t = x.permute({0, 2, 3, 1});
    t = t + attn->forward_channels_last(norm1(t), shift_);
    t = t + fc2(torch::gelu(fc1(norm2(t))));
    return t.permute({0, 3, 1, 2}).contiguous();
}

SwinBasicLayerImpl::SwinBasicLayerImpl(const SwinConfig& cfg) {
    block1 = register_module("block1", SwinTransformerBlock(cfg, 0));
    block2 = register_module("block2", SwinTransformerBlock(cfg, cfg.window / 2));
}

torch::Tensor SwinBasicLayerImpl::forward(const torch::Tensor& x) { return block2(block1(x)); }

SwinBasedBlockImpl::SwinBasedBlockImpl(const SwinConfig& cfg) : channels_(cfg.channels) {
    layer = register_module("layer", SwinBasicLayer(cfg));
    fuse = register_module("fuse", conv(2 * channels_, 2 * channels_, 1));
}

std::pair<torch::Tensor, torch::Tensor> SwinBasedBlockImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4 || x.size(1) != channels_) {
        throw ConfigError("swin-based block expects " + std::to_string(channels_) + " channels");
    }
    auto y = layer(x);
    auto z = fuse(torch::cat({x, y}, 1));
    auto parts = z.split(channels_, 1);
    return {parts[0], parts[1]};
}

// ---------------------------------------------------------------------------

AttentionRefinementImpl::AttentionRefinementImpl(int64_t channels, int64_t splits)
    : channels_(channels), splits_(splits) {
    if (channels < 1 || splits < 1) throw ConfigError("ARM needs positive channels and splits");
    attend = register_module("attend", conv(channels * splits, channels * splits, 1));
    reduce = register_module("reduce", conv(channels * splits, channels, 1));
}

int64_t AttentionRefinementImpl::input_channels() const { return attend->options.in_channels(); }
int64_t AttentionRefinementImpl::output_channels() const { return reduce->options.out_channels(); }

torch::Tensor AttentionRefinementImpl::attention(const torch::Tensor& concatenated) {
    return torch::sigmoid(attend(concatenated.mean({2, 3}, /*keepdim=*/true)));
}

torch::Tensor AttentionRefinementImpl::forward(const std::vector<torch::Tensor>& splits) {
    if (static_cast<int64_t>(splits.size()) != splits_) {
        throw ArgumentError("ARM expects " + std::to_string(splits_) + " split features, got " +
                            std::to_string(splits.size()));
    }
    for (const auto& s : splits) {
        if (s.dim() != 4 || s.size(1) != channels_ || s.sizes() != splits.front().sizes()) {
            throw ArgumentError("ARM split features must share shape (B, N, H, W)");
        }
    }
    auto c = torch::cat(splits, 1);
    return reduce(c * attention(c));
}

FeatureFusionImpl::FeatureFusionImpl(int64_t channels) : channels_(channels) {
    if (channels < 1) throw ConfigError("FFM needs positive channels");
    fuse = register_module("fuse", conv(3 * channels, channels, 1));
    squeeze = register_module("squeeze", conv(channels, channels, 1));
    excite = register_module("excite", conv(channels, channels, 1));
}

int64_t FeatureFusionImpl::input_channels() const { return fuse->options.in_channels(); }

torch::Tensor FeatureFusionImpl::fuse_inputs(const torch::Tensor& context, const torch::Tensor& refined,
                                             const torch::Tensor& spatial) {
    for (const auto* t : {&context, &refined, &spatial}) {
        if (t->dim() != 4 || t->size(1) != channels_ || t->sizes() != context.sizes()) {
            throw ArgumentError("FFM inputs must share shape (B, N, H, W)");
        }
    }
    return torch::relu(fuse(torch::cat({context, refined, spatial}, 1)));
}

torch::Tensor FeatureFusionImpl::attention(const torch::Tensor& fused) {
    return torch::sigmoid(excite(torch::relu(squeeze(fused.mean({2, 3}, /*keepdim=*/true)))));
}

torch::Tensor FeatureFusionImpl::combine(const torch::Tensor& fused, const torch::Tensor& attention) {
    return fused + fused * attention;
}

torch::Tensor FeatureFusionImpl::forward(const torch::Tensor& context, const torch::Tensor& refined,
                                         const torch::Tensor& spatial) {
    auto f = fuse_inputs(context, refined, spatial);
    return combine(f, attention(f));
}

UpsamplerImpl::UpsamplerImpl(int64_t channels, int64_t scale) {
    if (scale != 2 && scale != 4) throw ConfigError("upsampling scale must be 2 or 4");
    stages = register_module("stages", torch::nn::ModuleList());
    for (int64_t s = scale; s > 1; s /= 2) stages->push_back(conv(channels, 4 * channels, 3));
    out = register_module("out", conv(channels, 1, 3));
}

torch::Tensor UpsamplerImpl::forward(const torch::Tensor& x) {
    auto y = x;
    for (const auto& stage : *stages) y = tisr::pixel_shuffle(stage->as<torch::nn::Conv2dImpl>()->forward(y), 2);
    return out(y);
}

// ---------------------------------------------------------------------------

void initialize_parameters(torch::nn::Module& module, uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto init_module = [&](torch::nn::Module& m) {
        if (auto* c = m.as<torch::nn::Conv2dImpl>()) {
            const auto& ks = c->options.kernel_size();
            const double fan_in =
                static_cast<double>(c->options.in_channels() / c->options.groups()) * (*ks)[0] * (*ks)[1];
            const double bound = 1.0 / std::sqrt(fan_in);
            c->weight.uniform_(-bound, bound, gen);
            if (c->bias.defined()) c->bias.uniform_(-bound, bound, gen);
        } else if (auto* l = m.as<torch::nn::LinearImpl>()) {
            trunc_normal_(l->weight, 0.02, gen);
            if (l->bias.defined()) l->bias.zero_();
        } else if (auto* n = m.as<torch::nn::LayerNormImpl>()) {
            n->weight.fill_(1.0);
            n->bias.zero_();
        } else if (auto* a = m.as<WindowAttentionImpl>()) {
            trunc_normal_(a->relative_position_bias_table, 0.02, gen);
        }
    };
    init_module(module);
    for (const auto& child : module.modules(/*include_self=*/false)) init_module(*child);
}

void zero_parameters(torch::nn::Module& module) {
    torch::NoGradGuard no_grad;
    for (auto& p : module.parameters()) p.zero_();
}

}  // namespace tisr
