#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <ATen/CPUGeneratorImpl.h>

#include <torch/torch.h>

#include "tisr/image.hpp"

namespace tisr::testing {

// Band-limited synthetic "thermal" scene: a few low-frequency sinusoids and a
// soft blob, kept inside [0.1, 0.9].
inline Image smooth_image(int h, int w, uint64_t seed, double max_freq = 3.0) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    struct Wave {
        double fy, fx, phase, amp;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 4; ++i) {
        waves.push_back({u(rng) * max_freq, u(rng) * max_freq, u(rng) * 6.283185307179586, 0.08 + 0.06 * u(rng)});
    }
    const double cy = u(rng) * h, cx = u(rng) * w, r = 0.2 * std::min(h, w) + 1.0;
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double v = 0.5;
            for (const auto& wv : waves) {
                v += wv.amp * std::sin(6.283185307179586 * (wv.fy * y / h + wv.fx * x / w) + wv.phase);
            }
            const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (r * r);
            v += 0.1 * std::exp(-d2);
            img.at(y, x) = static_cast<float>(std::clamp(v, 0.1, 0.9));
        }
    }
    return img;
}

inline Image random_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(h, w);
    for (auto& v : img.pixels) v = u(rng);
    return img;
}

// Piecewise-constant blocks with sharp edges: plenty of corners for keypoints.
inline Image textured_image(int h, int w, uint64_t seed, int cell = 12) {
    Rng rng(seed);
    std::uniform_real_distribution<float> u(0.05f, 0.95f);
    const int gh = h / cell + 2, gw = w / cell + 2;
    std::vector<float> grid(static_cast<std::size_t>(gh) * gw);
    for (auto& g : grid) g = u(rng);
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) img.at(y, x) = grid[static_cast<std::size_t>(y / cell) * gw + x / cell];
    }
    return img;
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a.pixels[i]) - b.pixels[i]));
    return m;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a.pixels[i]) - b.pixels[i]);
    return s / static_cast<double>(a.size());
}

// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("tisr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

// Central finite-difference check of d loss / d t for every tensor in
// `wrt`. At most `max_entries` coordinates per tensor are probed (evenly
// spread). The error of a tensor is norm-wise over its probed coordinates,
// ||analytic - numeric|| / max(||analytic||, ||numeric||, floor): single
// entries that are structurally zero (key biases under softmax, say) only
// carry finite-difference roundoff of order eps * |loss| / h.
struct GradCheckResult {
    double worst_rel = 0.0;
    std::string worst_where;
    int64_t probed = 0;
};

inline GradCheckResult grad_check(const std::function<torch::Tensor()>& loss_fn, const std::vector<torch::Tensor>& wrt,
                                  const std::vector<std::string>& names, double h = 1e-5, int64_t max_entries = 24,
                                  double floor = 1e-9) {
    auto loss = loss_fn();
    auto grads = torch::autograd::grad({loss}, wrt, {}, false, false, true);

    GradCheckResult res;
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        auto flat = wrt[i].view({-1});
        auto g = grads[i].defined() ? grads[i].reshape({-1}) : torch::zeros_like(flat);
        const int64_t n = flat.numel();
        const int64_t stride = std::max<int64_t>(1, n / max_entries);
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (int64_t k = 0; k < n; k += stride) {
            const double orig = flat[k].item<double>();
            flat[k].fill_(orig + h);
            const double plus = loss_fn().item<double>();
            flat[k].fill_(orig - h);
            const double minus = loss_fn().item<double>();
            flat[k].fill_(orig);
            const double numeric = (plus - minus) / (2.0 * h);
            const double analytic = g[k].item<double>();
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
            ++res.probed;
        }
        const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
        if (rel > res.worst_rel) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), " |a-n|=%.3e |a|=%.3e |n|=%.3e", std::sqrt(diff2), std::sqrt(a2),
                          std::sqrt(n2));
            res.worst_rel = rel;
            res.worst_where = names[i] + buf;
        }
    }
    return res;
}

// Named parameters of a module plus optional extra leaves.
inline void collect_parameters(torch::nn::Module& m, std::vector<torch::Tensor>& wrt, std::vector<std::string>& names) {
    for (const auto& p : m.named_parameters()) {
        wrt.push_back(p.value());
        names.push_back(p.key());
    }
}

}  // namespace tisr::testing

namespace tisr::testing {

// Overwrites every parameter with uniform(-amp, amp) noise from a seeded
// generator, so oracles are not fooled by zero biases or tiny init.
inline void randomize_parameters(torch::nn::Module& m, uint64_t seed, double amp = 0.5) {
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    for (auto& p : m.parameters()) p.uniform_(-amp, amp, gen);
}

inline torch::Tensor seeded_uniform(at::IntArrayRef shape, uint64_t seed, double lo = -1.0, double hi = 1.0,
                                    torch::Dtype dtype = torch::kFloat64) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    return torch::empty(shape, torch::TensorOptions().dtype(dtype)).uniform_(lo, hi, gen);
}

inline bool parameters_equal(torch::nn::Module& a, torch::nn::Module& b) {
    auto pa = a.named_parameters();
    auto pb = b.named_parameters();
    if (pa.size() != pb.size()) return false;
    for (const auto& p : pa) {
        const auto* q = pb.find(p.key());
        if (q == nullptr || !torch::equal(p.value(), *q)) return false;
    }
    return true;
}

// Runs the CLI with stdout/stderr captured to `log`; returns the exit status.
inline int run_cli(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string("\"") + TISR_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace tisr::testing
