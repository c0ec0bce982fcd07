#pragma once

#include <torch/torch.h>

#include "tisr/image.hpp"

namespace tisr {

struct SsimParams {
    int window_size = 11;
    double gaussian_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const;
};

// Mean absolute error over all elements.
torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& target);

// Mean SSIM over the valid (unpadded) window positions of (B, C, H, W)
// tensors, computed per channel with a normalized Gaussian window.
torch::Tensor ssim(const torch::Tensor& pred, const torch::Tensor& target, const SsimParams& p = {});

torch::Tensor ssim_loss(const torch::Tensor& pred, const torch::Tensor& target, const SsimParams& p = {});

// Least-squares GAN objectives with targets real = 1, fake = 0, generator = 1.
torch::Tensor lsgan_d_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);
torch::Tensor lsgan_g_loss(const torch::Tensor& d_fake);

// Returned when the two images are identical.
inline constexpr double kPsnrCap = 100.0;

double psnr(const Image& pred, const Image& target, double peak = 1.0);
double ssim(const Image& pred, const Image& target, const SsimParams& p = {});

struct MetricOptions {
    int shave = 0;          // border pixels dropped from every side
    bool quantize = false;  // round predictions to 8-bit levels first
};

struct ImageMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

// Metric-mode evaluation: the prediction is clipped to [0,1] (and optionally
// quantized) before PSNR/SSIM.
ImageMetrics evaluate_pair(const Image& pred, const Image& target, const MetricOptions& opts = {});

// (1, 1, H, W) tensor copy of an image and back.
torch::Tensor image_to_tensor(const Image& img, torch::Dtype dtype = torch::kFloat32);
Image tensor_to_image(const torch::Tensor& t);

}  // namespace tisr
