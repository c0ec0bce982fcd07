#pragma once

#include <cstdint>

#include "tisr/image.hpp"

namespace tisr {

// Synthetic LR generation: bicubic downsampling followed by additive white
// Gaussian noise. noise_sigma is expressed on the 0-255 scale.
struct DegradationConfig {
    int scale = 4;
    double noise_sigma = 10.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Keys cubic convolution kernel.
double keys_cubic(double x, double a = -0.5);

// Separable Keys (a = -0.5) resampling with pixel-center alignment. When
// shrinking an axis the kernel is stretched by the scale factor so it acts as
// an anti-aliasing filter. Source indices are clamped at the borders and the
// result is clipped to [0,1].
Image bicubic_resample(const Image& img, int out_h, int out_w);

// Unclipped variant of bicubic_resample; used where linearity matters.
Image bicubic_resample_unclipped(const Image& img, int out_h, int out_w);

// Bicubic point sample at (x, y) with x along columns, y along rows and pixel
// centers on integer coordinates. Out-of-range taps clamp to the edge.
double sample_bicubic(const Image& img, double x, double y);

// Adds N(0, (sigma_255/255)^2) per pixel and clips to [0,1].
Image add_awgn(const Image& img, double sigma_255, Rng& rng);

// Crops hr to the largest region divisible by cfg.scale (anchored top-left),
// downsamples it and then adds noise.
PairedSample make_lr(const Image& hr, const DegradationConfig& cfg, Rng& rng);

}  // namespace tisr
