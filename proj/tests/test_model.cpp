#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "tisr/checkpoint.hpp"
#include "tisr/errors.hpp"
#include "tisr/model.hpp"

using namespace tisr;
using namespace tisr::testing;

namespace {

ModelConfig tiny(int64_t scale = 2) {
    ModelConfig c;
    c.n_channels = 8;
    c.n_blocks = 2;
    c.window = 4;
    c.heads = 2;
    c.scale = scale;
    c.seed = 1;
    return c;
}

torch::Tensor lr_input(int64_t b, int64_t h, int64_t w, uint64_t seed) {
    return seeded_uniform({b, 1, h, w}, seed, 0.0, 1.0, torch::kFloat32);
}

// Counted layer by layer from the architecture description.
int64_t expected_parameters(int64_t n, int64_t k, int64_t win, int64_t heads, int64_t scale) {
    auto conv = [](int64_t in, int64_t out, int64_t ks) { return in * out * ks * ks + out; };
    const int64_t table = (2 * win - 1) * (2 * win - 1) * heads;
    const int64_t block = 2 * n + (3 * n * n + 3 * n) + (n * n + n) + table + 2 * n + (4 * n * n + 4 * n) +
                          (4 * n * n + n);
    const int64_t layer = 2 * block;
    int64_t total = conv(1, n, 3) + conv(n, 2 * n, 5);
    total += k * (layer + conv(2 * n, 2 * n, 1));
    total += conv(n, n, 5) + layer;
    const int64_t splits = (k + 1) * n;
    total += conv(splits, splits, 1) + conv(splits, n, 1);
    total += conv(3 * n, n, 1) + 2 * conv(n, n, 1);
    for (int64_t s = scale; s > 1; s /= 2) total += conv(n, 4 * n, 3);
    total += conv(n, 1, 3);
    return total;
}

}  // namespace

TEST(Generator, OutputShapes) {
    for (int64_t scale : {2, 4}) {
        auto m = build_model(tiny(scale));
        torch::NoGradGuard g;
        EXPECT_EQ(m->forward(lr_input(2, 16, 12, 2)).sizes(), (std::vector<int64_t>{2, 1, 16 * scale, 12 * scale}));
    }
    auto m = build_model(tiny(2));
    torch::NoGradGuard g;
    // 50 is not a multiple of the window: padded internally, cropped after.
    EXPECT_EQ(m->forward(lr_input(1, 50, 50, 3)).sizes(), (std::vector<int64_t>{1, 1, 100, 100}));
    // Smaller than the reflect padding allows.
    EXPECT_EQ(m->forward(lr_input(1, 2, 3, 4)).sizes(), (std::vector<int64_t>{1, 1, 4, 6}));
    EXPECT_THROW(m->forward(torch::zeros({1, 3, 8, 8})), ArgumentError);
}

TEST(Generator, ZeroParametersGiveZero) {
    auto m = build_model(tiny(4));
    zero_parameters(*m);
    torch::NoGradGuard g;
    EXPECT_EQ(m->forward(lr_input(1, 8, 8, 5)).abs().max().item<double>(), 0.0);
}

TEST(Generator, ParameterCountClosedForm) {
    for (int64_t scale : {2, 4}) {
        auto m = build_model(tiny(scale));
        EXPECT_EQ(parameter_count(*m), expected_parameters(8, 2, 4, 2, scale)) << "scale " << scale;
    }
    ModelConfig big;
    big.n_channels = 16;
    big.n_blocks = 3;
    big.window = 8;
    big.heads = 4;
    EXPECT_EQ(parameter_count(*build_model(big)), expected_parameters(16, 3, 8, 4, 4));
}

TEST(Generator, SubmoduleWidths) {
    ModelConfig c;
    c.n_channels = 8;
    c.n_blocks = 8;
    c.window = 8;
    auto m = build_model(c);
    EXPECT_EQ(m->arm_input_channels(), 72);
    EXPECT_EQ(m->ffm_input_channels(), 24);
    EXPECT_EQ(m->context_blocks->size(), 8u);
}

TEST(Generator, SeedDeterminism) {
    auto a = build_model(tiny());
    auto b = build_model(tiny());
    auto c_cfg = tiny();
    c_cfg.seed = 2;
    auto c = build_model(c_cfg);
    EXPECT_TRUE(parameters_equal(*a, *b));
    EXPECT_FALSE(parameters_equal(*a, *c));
    torch::NoGradGuard g;
    auto x = lr_input(1, 8, 8, 6);
    EXPECT_TRUE(torch::equal(a->forward(x), b->forward(x)));
}

TEST(Generator, BatchElementsIndependent) {
    auto m = build_model(tiny());
    torch::NoGradGuard g;
    auto x = lr_input(3, 12, 12, 7);
    auto batched = m->forward(x);
    for (int64_t i = 0; i < 3; ++i) {
        auto single = m->forward(x.slice(0, i, i + 1));
        EXPECT_LT((batched.slice(0, i, i + 1) - single).abs().max().item<double>(), 1e-5);
    }
}

TEST(Generator, ConfigValidation) {
    auto c = tiny();
    c.heads = 3;
    EXPECT_THROW(build_model(c), ConfigError);
    c = tiny();
    c.scale = 3;
    EXPECT_THROW(build_model(c), ConfigError);
    c = tiny();
    c.n_blocks = 0;
    EXPECT_THROW(build_model(c), ConfigError);
}

TEST(Discriminator, ScoreMapSize) {
    DiscriminatorConfig dc;
    dc.base_channels = 4;
    auto d = build_discriminator(dc);
    EXPECT_EQ(discriminator_output_size(128), 14);
    EXPECT_EQ(discriminator_output_size(64), 6);
    EXPECT_EQ(discriminator_output_size(32), 2);
    EXPECT_EQ(discriminator_output_size(24), 1);
    EXPECT_EQ(discriminator_output_size(23), 0);
    EXPECT_EQ(discriminator_output_size(1), 0);
    torch::NoGradGuard g;
    EXPECT_EQ(d->forward(torch::zeros({2, 1, 128, 128})).sizes(), (std::vector<int64_t>{2, 1, 14, 14}));
    zero_parameters(*d);
    EXPECT_EQ(d->forward(lr_input(1, 64, 64, 8)).abs().max().item<double>(), 0.0);
    EXPECT_THROW(d->forward(torch::zeros({1, 3, 64, 64})), ArgumentError);
    dc.base_channels = 0;
    EXPECT_THROW(build_discriminator(dc), ConfigError);
}

TEST(Discriminator, LayerWidths) {
    DiscriminatorConfig dc;
    dc.base_channels = 4;
    auto d = build_discriminator(dc);
    // Widths 4, 8, 16, 32 then 1, all 4x4 kernels with bias.
    const int64_t widths[] = {1, 4, 8, 16, 32, 1};
    int64_t expected = 0;
    for (int i = 0; i < 5; ++i) expected += widths[i] * widths[i + 1] * 16 + widths[i + 1];
    EXPECT_EQ(parameter_count(*d), expected);
}

TEST(Checkpoint, RoundTripBitIdentical) {
    TempDir dir("model");
    auto m = build_model(tiny(4));
    randomize_parameters(*m, 9);
    auto ckpt = make_checkpoint(m, 42);
    ckpt.rng_state = "opaque-state";
    ckpt.meta["note"] = "x";
    DiscriminatorConfig dc;
    dc.base_channels = 2;
    auto d = build_discriminator(dc);
    ckpt.discriminator_config = dc;
    for (auto& t : export_parameters(*d, kDiscriminatorPrefix)) ckpt.tensors.push_back(t);
    ckpt.tensors.push_back({"optim/generator/exp_avg/stem.weight", torch::randn({3, 3}, torch::kFloat64)});

    const auto path = dir / "a.ckpt";
    save_checkpoint(ckpt, path);
    const auto back = load_checkpoint(path);
    EXPECT_EQ(back.step, 42);
    EXPECT_EQ(back.model_config, ckpt.model_config);
    EXPECT_EQ(back.discriminator_config, ckpt.discriminator_config);
    EXPECT_EQ(back.rng_state, "opaque-state");
    EXPECT_EQ(back.meta["note"], "x");
    ASSERT_EQ(back.tensors.size(), ckpt.tensors.size());
    for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
        EXPECT_EQ(back.tensors[i].first, ckpt.tensors[i].first);
        EXPECT_EQ(back.tensors[i].second.dtype(), ckpt.tensors[i].second.dtype());
        EXPECT_TRUE(torch::equal(back.tensors[i].second, ckpt.tensors[i].second)) << ckpt.tensors[i].first;
    }

    auto restored = restore_generator(back);
    EXPECT_TRUE(parameters_equal(*restored, *m));
    torch::NoGradGuard g;
    auto x = lr_input(1, 8, 8, 10);
    EXPECT_TRUE(torch::equal(restored->forward(x), m->forward(x)));
    EXPECT_TRUE(parameters_equal(*restore_discriminator(back), *d));
}

TEST(Checkpoint, MismatchedModelRejected) {
    auto ckpt = make_checkpoint(build_model(tiny(2)));
    auto other_cfg = tiny(2);
    other_cfg.n_channels = 16;
    auto other = build_model(other_cfg);
    EXPECT_THROW(import_parameters(*other, ckpt, kGeneratorPrefix), CorruptionError);

    auto missing = ckpt;
    missing.tensors.pop_back();
    auto m = build_model(tiny(2));
    EXPECT_THROW(import_parameters(*m, missing, kGeneratorPrefix), CorruptionError);

    auto stray = ckpt;
    stray.tensors.push_back({"generator/extra", torch::zeros({1})});
    EXPECT_THROW(import_parameters(*m, stray, kGeneratorPrefix), CorruptionError);
    EXPECT_THROW(restore_discriminator(ckpt), CorruptionError);
}

TEST(Checkpoint, CorruptFilesRejected) {
    TempDir dir("model");
    const auto good = dir / "good.ckpt";
    save_checkpoint(make_checkpoint(build_model(tiny())), good);
    const std::string bytes = read_file(good);

    auto write = [&](const std::string& name, const std::string& content) {
        const auto p = dir / name;
        std::ofstream(p, std::ios::binary) << content;
        return p;
    };
    EXPECT_THROW(load_checkpoint(write("magic.ckpt", "NOTACKPT" + bytes.substr(8))), CorruptionError);
    EXPECT_THROW(load_checkpoint(write("trunc.ckpt", bytes.substr(0, bytes.size() - 100))), CorruptionError);
    EXPECT_THROW(load_checkpoint(write("short.ckpt", bytes.substr(0, 20))), CorruptionError);
    EXPECT_THROW(load_checkpoint(write("empty.ckpt", "")), CorruptionError);
    std::string garbled = bytes;
    garbled[17] = '#';
    EXPECT_THROW(load_checkpoint(write("json.ckpt", garbled)), CorruptionError);
    EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), IoError);
}
