#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "tisr/checkpoint.hpp"
#include "tisr/degradation.hpp"
#include "tisr/evaluation.hpp"
#include "tisr/image.hpp"
#include "tisr/training.hpp"

using namespace tisr;
using namespace tisr::testing;
namespace fs = std::filesystem;

namespace {

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

void write_hr_corpus(const fs::path& dir, int n, int size = 64) {
    fs::create_directories(dir);
    for (int i = 0; i < n; ++i) save_image(smooth_image(size, size, 100 + i), dir / ("im" + std::to_string(i) + ".png"));
}

// Scene with corners for keypoints on a smooth background.
Image scene(int h, int w, uint64_t seed) {
    Image tex = textured_image(h, w, seed, 10);
    const Image smooth = smooth_image(h, w, seed + 1);
    for (std::size_t i = 0; i < tex.size(); ++i) tex.pixels[i] = 0.6f * tex.pixels[i] + 0.4f * smooth.pixels[i];
    return tex;
}

// Degraded corpus plus a small x4 run config pointing at it.
fs::path prepare_run(const TempDir& dir, int steps) {
    write_hr_corpus(dir / "hr", 3);
    EXPECT_EQ(run_cli("degrade --scale 4 --sigma 5 --seed 1 --in " + q(dir / "hr") + " --out " + q(dir / "data"),
                      dir / "degrade.log"),
              0);
    const nlohmann::json cfg = {
        {"model", {{"n_channels", 8}, {"n_blocks", 1}, {"window", 4}, {"heads", 2}, {"scale", 4}}},
        {"train",
         {{"track", "track1_x4"}, {"steps", steps}, {"batch_size", 2}, {"patch", 8}, {"validate_every", 0}}},
        {"data", {{"manifest", "data/manifest.json"}}},
        {"output_dir", "run"}};
    std::ofstream(dir / "run.json") << cfg.dump(2);
    return dir / "run.json";
}

}  // namespace

TEST(Cli, VersionAndUsage) {
    TempDir dir("cli_version");
    EXPECT_EQ(run_cli("--version", dir / "v.log"), 0);
    EXPECT_NE(read_file(dir / "v.log").find("tisr 0.1.0"), std::string::npos);
    EXPECT_NE(run_cli("degrade --in x", dir / "u.log"), 0);
    EXPECT_NE(run_cli("degrade --scale 3 --in a --out b", dir / "s.log"), 0);
}

TEST(Cli, DegradeWritesPairsAndManifest) {
    TempDir dir("cli_degrade");
    write_hr_corpus(dir / "hr", 3, 66);
    const std::string args = "degrade --scale 4 --sigma 0 --seed 3 --in " + q(dir / "hr") + " --out ";
    ASSERT_EQ(run_cli(args + q(dir / "a"), dir / "a.log"), 0) << read_file(dir / "a.log");
    const auto entries = read_manifest(dir / "a" / "manifest.json");
    ASSERT_EQ(entries.size(), 3u);
    for (const auto& e : entries) {
        EXPECT_EQ(e.scale, 4);
        EXPECT_FALSE(e.registered);
    }
    const Image lr = load_image(dir / "a" / "lr" / "im0.png");
    const Image hr = load_image(dir / "a" / "hr" / "im0.png");
    EXPECT_EQ(lr.height, 16);
    EXPECT_EQ(hr.height, 64);
    // Zero noise: pure bicubic of the (cropped) source, up to 8-bit rounding.
    const Image src = load_image(dir / "hr" / "im0.png").crop(0, 0, 64, 64);
    EXPECT_LE(max_abs_diff(lr, bicubic_resample(src, 16, 16)), 0.5 / 255.0 + 1e-6);

    ASSERT_EQ(run_cli(args + q(dir / "b"), dir / "b.log"), 0);
    for (const auto& e : entries) EXPECT_EQ(read_file(dir / "a" / e.lr), read_file(dir / "b" / e.lr)) << e.lr;
}

TEST(Cli, DegradeNoiseDependsOnSeed) {
    TempDir dir("cli_noise");
    write_hr_corpus(dir / "hr", 1);
    const std::string base = "degrade --scale 2 --sigma 10 --in " + q(dir / "hr") + " --out ";
    ASSERT_EQ(run_cli(base + q(dir / "a") + " --seed 1", dir / "a.log"), 0);
    ASSERT_EQ(run_cli(base + q(dir / "b") + " --seed 2", dir / "b.log"), 0);
    EXPECT_NE(read_file(dir / "a" / "lr" / "im0.png"), read_file(dir / "b" / "lr" / "im0.png"));
    TempDir empty("cli_empty");
    EXPECT_NE(run_cli("degrade --in " + q(empty.path()) + " --out " + q(dir / "c"), dir / "c.log"), 0);
}

TEST(Cli, RegisterSyntheticCorpus) {
    TempDir dir("cli_register");
    fs::create_directories(dir / "axis");
    fs::create_directories(dir / "flir");
    for (int i = 0; i < 2; ++i) {
        const Image flir = scene(320, 320, 200 + i);
        const Image half = bicubic_resample(flir, 160, 160);
        save_image(half.crop(0, 10 + i, 160, 140), dir / "axis" / ("f" + std::to_string(i) + ".png"));
        save_image(flir, dir / "flir" / ("f" + std::to_string(i) + ".png"));
    }
    // No flir counterpart: silently not a pair.
    save_image(scene(64, 64, 9), dir / "axis" / "lonely.png");

    const std::string args = "register --axis " + q(dir / "axis") + " --flir " + q(dir / "flir") + " --out " +
                             q(dir / "out") + " --threshold 2.5 --iters 700 --seed 4";
    ASSERT_EQ(run_cli(args, dir / "r.log"), 0) << read_file(dir / "r.log");
    const auto manifest = read_json(dir / "out" / "manifest.json");
    ASSERT_EQ(manifest.size(), 2u);
    for (const auto& e : manifest) {
        EXPECT_EQ(e["scale"], 2);
        EXPECT_EQ(e["registered"], true);
        EXPECT_EQ(e["registration"]["threshold_px"], 2.5);
        EXPECT_EQ(e["registration"]["max_iters"], 700);
        const Image lr = load_image(dir / "out" / e["lr"].get<std::string>());
        const Image hr = load_image(dir / "out" / e["hr"].get<std::string>());
        EXPECT_EQ(hr.height, 2 * lr.height);
        EXPECT_EQ(hr.width, 2 * lr.width);
    }
    const auto pairs = load_manifest_pairs(dir / "out" / "manifest.json");
    EXPECT_TRUE(pairs[0].registered);
    const auto h = read_json(dir / "out" / "homographies.json");
    ASSERT_TRUE(h.contains("f0"));
    // axis x -> flir 2 (x + 10) + 0.5: h[0][0] ~ 2, h[0][2] ~ 20.5
    EXPECT_NEAR(h["f0"][0].get<double>(), 2.0, 0.02);
    EXPECT_NEAR(h["f0"][2].get<double>(), 20.5, 1.0);
    EXPECT_TRUE(read_json(dir / "out" / "failures.json").empty());
}

TEST(Cli, RegisterWithoutPairsFails) {
    TempDir dir("cli_register_empty");
    fs::create_directories(dir / "axis");
    fs::create_directories(dir / "flir");
    EXPECT_NE(run_cli("register --axis " + q(dir / "axis") + " --flir " + q(dir / "flir") + " --out " + q(dir / "o"),
                      dir / "r.log"),
              0);
    EXPECT_NE(read_file(dir / "r.log").find("no pairs found"), std::string::npos);
}

TEST(Cli, TrainResumeInferEvaluate) {
    TempDir dir("cli_train");
    const auto cfg = prepare_run(dir, 20);
    ASSERT_EQ(run_cli("train --config " + q(cfg), dir / "t.log"), 0) << read_file(dir / "t.log");
    const auto last = dir / "run" / "last.ckpt";
    ASSERT_TRUE(fs::exists(last));
    EXPECT_EQ(load_checkpoint(last).step, 20);
    EXPECT_EQ(count_lines(read_file(dir / "run" / "train_log.ndjson")), 20);
    EXPECT_TRUE(fs::exists(dir / "run" / "run_config.json"));

    fs::copy_file(last, dir / "first.ckpt");
    ASSERT_EQ(run_cli("train --config " + q(cfg) + " --resume " + q(dir / "first.ckpt") + " --steps 30", dir / "r.log"),
              0)
        << read_file(dir / "r.log");
    EXPECT_NE(read_file(dir / "r.log").find("resumed at step 20"), std::string::npos);
    EXPECT_EQ(load_checkpoint(last).step, 30);
    EXPECT_EQ(count_lines(read_file(dir / "run" / "train_log.ndjson")), 30);

    // Single model: 16x16 -> 64x64, matching library inference up to 8-bit rounding.
    ASSERT_EQ(run_cli("infer --ckpt " + q(last) + " --in " + q(dir / "data" / "lr") + " --out " + q(dir / "sr1"),
                      dir / "i1.log"),
              0)
        << read_file(dir / "i1.log");
    const Image lr0 = load_image(dir / "data" / "lr" / "im0.png");
    const auto a = restore_generator(load_checkpoint(dir / "first.ckpt"));
    const auto b = restore_generator(load_checkpoint(last));
    const Image sr1 = load_image(dir / "sr1" / "im0.png");
    EXPECT_EQ(sr1.height, 64);
    EXPECT_LE(max_abs_diff(sr1, infer({b}, lr0)), 0.5 / 255.0 + 1e-5);

    ASSERT_EQ(run_cli("infer --ckpt " + q(dir / "first.ckpt") + " " + q(last) + " --in " + q(dir / "data" / "lr") +
                          " --out " + q(dir / "sr2"),
                      dir / "i2.log"),
              0)
        << read_file(dir / "i2.log");
    EXPECT_LE(max_abs_diff(load_image(dir / "sr2" / "im0.png"), infer({a, b}, lr0)), 0.5 / 255.0 + 1e-5);
    EXPECT_NE(run_cli("infer --ckpt " + q(dir / "nope.ckpt") + " --in " + q(dir / "data" / "lr") + " --out " +
                          q(dir / "sr3"),
                      dir / "i3.log"),
              0);

    ASSERT_EQ(run_cli("evaluate --sr " + q(dir / "sr1") + " --gt " + q(dir / "data" / "hr") + " --json " +
                          q(dir / "report.json"),
                      dir / "e.log"),
              0)
        << read_file(dir / "e.log");
    const auto report = read_json(dir / "report.json");
    EXPECT_EQ(report["count"], 3);
    EXPECT_TRUE(report["skipped"].empty());
    const auto lib = evaluate(dir / "sr1", dir / "data" / "hr");
    EXPECT_NEAR(report["mean_psnr"].get<double>(), lib.mean_psnr, 1e-9);
    EXPECT_NEAR(report["mean_ssim"].get<double>(), lib.mean_ssim, 1e-9);
}

TEST(Cli, TrainRejectsUnknownConfigKey) {
    TempDir dir("cli_badcfg");
    const auto cfg = prepare_run(dir, 5);
    auto doc = read_json(cfg);
    doc["train"]["warmup"] = 3;
    std::ofstream(cfg) << doc.dump();
    EXPECT_NE(run_cli("train --config " + q(cfg), dir / "t.log"), 0);
    EXPECT_NE(read_file(dir / "t.log").find("train.warmup"), std::string::npos) << read_file(dir / "t.log");
    EXPECT_FALSE(fs::exists(dir / "run" / "last.ckpt"));
}

TEST(Cli, EvaluateReportsAndWarns) {
    TempDir dir("cli_eval");
    fs::create_directories(dir / "gt");
    fs::create_directories(dir / "sr");
    for (int i = 0; i < 2; ++i) {
        const Image img = smooth_image(32, 32, 300 + i);
        save_image(img, dir / "gt" / ("x" + std::to_string(i) + ".png"));
        save_image(img, dir / "sr" / ("x" + std::to_string(i) + ".png"));
    }
    ASSERT_EQ(run_cli("evaluate --sr " + q(dir / "sr") + " --gt " + q(dir / "gt"), dir / "a.log"), 0);
    const std::string table = read_file(dir / "a.log");
    EXPECT_NE(table.find("100.00"), std::string::npos) << table;
    EXPECT_NE(table.find("1.0000"), std::string::npos) << table;
    EXPECT_EQ(table.find("warning"), std::string::npos);

    save_image(Image(32, 32, 0.5f), dir / "sr" / "stray.png");
    save_image(Image(32, 32, 0.5f), dir / "gt" / "orphan.png");
    ASSERT_EQ(run_cli("evaluate --sr " + q(dir / "sr") + " --gt " + q(dir / "gt") + " --shave 4 --quantize --json " +
                          q(dir / "r.json"),
                      dir / "b.log"),
              0);
    const std::string log = read_file(dir / "b.log");
    EXPECT_NE(log.find("warning: stray skipped (missing_gt)"), std::string::npos) << log;
    EXPECT_NE(log.find("warning: orphan skipped (missing_sr)"), std::string::npos) << log;
    const auto r = read_json(dir / "r.json");
    EXPECT_EQ(r["count"], 2);
    EXPECT_EQ(r["options"]["shave"], 4);
    EXPECT_EQ(r["options"]["quantize"], true);
    // Inputs already sit on the 8-bit grid, so quantizing changes nothing.
    EXPECT_EQ(r["mean_psnr"], 100.0);

    TempDir empty("cli_eval_empty");
    EXPECT_NE(run_cli("evaluate --sr " + q(empty.path()) + " --gt " + q(dir / "gt"), dir / "c.log"), 0);
}
