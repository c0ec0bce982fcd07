#include "tisr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tisr/errors.hpp"

namespace tisr {

namespace F = torch::nn::functional;

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) throw ArgumentError(std::string(what) + ": shape mismatch");
}

void check_same_shape(const Image& a, const Image& b, const char* what) {
    if (a.height != b.height || a.width != b.width) throw ArgumentError(std::string(what) + ": shape mismatch");
}

torch::Tensor gaussian_window(const SsimParams& p, const torch::TensorOptions& opts) {
    const int n = p.window_size;
    auto g = torch::empty({n}, opts.dtype(torch::kFloat64));
    const double center = (n - 1) / 2.0;
    for (int i = 0; i < n; ++i) {
        const double d = i - center;
        g[i] = std::exp(-(d * d) / (2.0 * p.gaussian_sigma * p.gaussian_sigma));
    }
    g = g / g.sum();
    return torch::outer(g, g).to(opts.dtype());
}

}  // namespace

void SsimParams::validate() const {
    if (window_size < 3 || window_size % 2 == 0) throw ArgumentError("SSIM window must be odd and >= 3");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw ArgumentError("SSIM k1, k2 must be positive");
    if (!(gaussian_sigma > 0.0) || !(dynamic_range > 0.0)) {
        throw ArgumentError("SSIM sigma and dynamic range must be positive");
    }
}

torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    check_same_shape(pred, target, "l1_loss");
    return (pred - target).abs().mean();
}

torch::Tensor ssim(const torch::Tensor& pred, const torch::Tensor& target, const SsimParams& p) {
    p.validate();
    check_same_shape(pred, target, "ssim");
    if (pred.dim() != 4) throw ArgumentError("ssim expects (B, C, H, W)");
    if (pred.size(2) < p.window_size || pred.size(3) < p.window_size) {
        throw ArgumentError("image smaller than the SSIM window");
    }
    const int64_t channels = pred.size(1);
    auto window = gaussian_window(p, pred.options())
                      .reshape({1, 1, p.window_size, p.window_size})
                      .expand({channels, 1, p.window_size, p.window_size})
                      .contiguous();
    auto filt = [&](const torch::Tensor& t) {
        return F::conv2d(t, window, F::Conv2dFuncOptions().groups(channels));
    };

    const double c1 = std::pow(p.k1 * p.dynamic_range, 2);
    const double c2 = std::pow(p.k2 * p.dynamic_range, 2);

    auto mu_x = filt(pred);
    auto mu_y = filt(target);
    auto mu_xx = mu_x * mu_x;
    auto mu_yy = mu_y * mu_y;
    auto mu_xy = mu_x * mu_y;
    auto var_x = filt(pred * pred) - mu_xx;
    auto var_y = filt(target * target) - mu_yy;
    auto cov = filt(pred * target) - mu_xy;

    auto map = ((2.0 * mu_xy + c1) * (2.0 * cov + c2)) / ((mu_xx + mu_yy + c1) * (var_x + var_y + c2));
    return map.mean();
}

torch::Tensor ssim_loss(const torch::Tensor& pred, const torch::Tensor& target, const SsimParams& p) {
    return 1.0 - ssim(pred, target, p);
}

torch::Tensor lsgan_d_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
    return 0.5 * (d_real - 1.0).pow(2).mean() + 0.5 * d_fake.pow(2).mean();
}

torch::Tensor lsgan_g_loss(const torch::Tensor& d_fake) { return 0.5 * (d_fake - 1.0).pow(2).mean(); }

double psnr(const Image& pred, const Image& target, double peak) {
    check_same_shape(pred, target, "psnr");
    if (!(peak > 0.0)) throw ArgumentError("psnr peak must be positive");
    double sse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred.pixels[i]) - static_cast<double>(target.pixels[i]);
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(pred.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Image& pred, const Image& target, const SsimParams& p) {
    check_same_shape(pred, target, "ssim");
    torch::NoGradGuard no_grad;
    return ssim(image_to_tensor(pred, torch::kFloat64), image_to_tensor(target, torch::kFloat64), p).item<double>();
}

ImageMetrics evaluate_pair(const Image& pred, const Image& target, const MetricOptions& opts) {
    check_same_shape(pred, target, "evaluate_pair");
    if (opts.shave < 0 || 2 * opts.shave >= std::min(pred.height, pred.width)) {
        throw ArgumentError("shave leaves no pixels");
    }
    Image p = pred;
    clip_unit(p);
    if (opts.quantize) {
        for (float& v : p.pixels) v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
    }
    Image t = target;
    if (opts.shave > 0) {
        const int h = p.height - 2 * opts.shave;
        const int w = p.width - 2 * opts.shave;
        p = p.crop(opts.shave, opts.shave, h, w);
        t = t.crop(opts.shave, opts.shave, h, w);
    }
    return {psnr(p, t, 1.0), ssim(p, t)};
}

torch::Tensor image_to_tensor(const Image& img, torch::Dtype dtype) {
    auto t = torch::from_blob(const_cast<float*>(img.pixels.data()), {1, 1, img.height, img.width}, torch::kFloat32);
    return t.to(dtype).clone();
}

Image tensor_to_image(const torch::Tensor& t) {
    if (t.dim() != 4 || t.size(0) != 1 || t.size(1) != 1) throw ArgumentError("expected a (1, 1, H, W) tensor");
    auto c = t.detach().to(torch::kFloat32).contiguous();
    Image img(static_cast<int>(c.size(2)), static_cast<int>(c.size(3)));
    std::copy(c.data_ptr<float>(), c.data_ptr<float>() + c.numel(), img.pixels.begin());
    return img;
}

}  // namespace tisr
