#include "tisr/degradation.hpp"

#include <algorithm>
#include <cmath>

#include "tisr/errors.hpp"

namespace tisr {

namespace {

struct Taps {
    int first = 0;               // source index of weights[0] before clamping
    std::vector<double> weights;
};

// One row of the resampling matrix per output index along an axis.
std::vector<Taps> axis_taps(int in_size, int out_size) {
    const double scale = static_cast<double>(in_size) / out_size;
    const double stretch = std::max(1.0, scale);
    const double support = 2.0 * stretch;

    std::vector<Taps> table(out_size);
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        const int lo = static_cast<int>(std::floor(center - support)) + 1;
        const int hi = static_cast<int>(std::ceil(center + support)) - 1;
        Taps& t = table[o];
        t.first = lo;
        double total = 0.0;
        for (int i = lo; i <= hi; ++i) {
            const double w = keys_cubic((center - i) / stretch);
            t.weights.push_back(w);
            total += w;
        }
        for (double& w : t.weights) w /= total;
    }
    return table;
}

}  // namespace

void DegradationConfig::validate() const {
    if (scale != 2 && scale != 4) throw ConfigError("degradation scale must be 2 or 4");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
}

double keys_cubic(double x, double a) {
    const double t = std::abs(x);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

Image bicubic_resample_unclipped(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ArgumentError("resample target must be at least 1x1");
    if (img.empty()) throw ArgumentError("cannot resample an empty image");

    const auto col_taps = axis_taps(img.width, out_w);
    const auto row_taps = axis_taps(img.height, out_h);

    // Horizontal pass into a height x out_w buffer, then vertical.
    std::vector<double> tmp(static_cast<std::size_t>(img.height) * out_w);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < out_w; ++c) {
            const Taps& t = col_taps[c];
            double acc = 0.0;
            for (std::size_t k = 0; k < t.weights.size(); ++k) {
                const int src = std::clamp(t.first + static_cast<int>(k), 0, img.width - 1);
                acc += t.weights[k] * img.at(r, src);
            }
            tmp[static_cast<std::size_t>(r) * out_w + c] = acc;
        }
    }

    Image out(out_h, out_w);
    out.source_id = img.source_id;
    for (int r = 0; r < out_h; ++r) {
        const Taps& t = row_taps[r];
        for (int c = 0; c < out_w; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < t.weights.size(); ++k) {
                const int src = std::clamp(t.first + static_cast<int>(k), 0, img.height - 1);
                acc += t.weights[k] * tmp[static_cast<std::size_t>(src) * out_w + c];
            }
            out.at(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

Image bicubic_resample(const Image& img, int out_h, int out_w) {
    Image out = bicubic_resample_unclipped(img, out_h, out_w);
    clip_unit(out);
    return out;
}

double sample_bicubic(const Image& img, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    double wx[4];
    double wy[4];
    for (int k = 0; k < 4; ++k) {
        wx[k] = keys_cubic(x - (x0 - 1 + k));
        wy[k] = keys_cubic(y - (y0 - 1 + k));
    }
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) {
        if (wy[j] == 0.0) continue;
        const int row = std::clamp(y0 - 1 + j, 0, img.height - 1);
        double row_acc = 0.0;
        for (int i = 0; i < 4; ++i) {
            if (wx[i] == 0.0) continue;
            const int col = std::clamp(x0 - 1 + i, 0, img.width - 1);
            row_acc += wx[i] * img.at(row, col);
        }
        acc += wy[j] * row_acc;
    }
    return acc;
}

Image add_awgn(const Image& img, double sigma_255, Rng& rng) {
    if (!(sigma_255 >= 0.0)) throw ArgumentError("noise sigma must be non-negative");
    Image out = img;
    if (sigma_255 == 0.0) return out;
    std::normal_distribution<double> noise(0.0, sigma_255 / 255.0);
    for (float& v : out.pixels) {
        v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
    }
    return out;
}

PairedSample make_lr(const Image& hr, const DegradationConfig& cfg, Rng& rng) {
    cfg.validate();
    if (hr.height < cfg.scale || hr.width < cfg.scale) {
        throw ArgumentError("hr image smaller than the scale factor");
    }
    const int lr_h = hr.height / cfg.scale;
    const int lr_w = hr.width / cfg.scale;

    PairedSample out;
    out.scale = cfg.scale;
    out.registered = false;
    out.hr = (lr_h * cfg.scale == hr.height && lr_w * cfg.scale == hr.width)
                 ? hr
                 : hr.crop(0, 0, lr_h * cfg.scale, lr_w * cfg.scale);
    out.lr = add_awgn(bicubic_resample(out.hr, lr_h, lr_w), cfg.noise_sigma, rng);
    return out;
}

}  // namespace tisr
