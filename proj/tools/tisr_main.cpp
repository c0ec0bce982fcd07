// tisr: thermal super-resolution toolkit command line.
//
//   tisr degrade  --scale 4 --sigma 10 --seed 1 --in hr/ --out data/
//   tisr register --axis axis/ --flir flir/ --out pairs/ --threshold 3 --iters 2000 --seed 1
//   tisr train    --config run.json [--resume ckpt] [--steps N] [--seed N] [--out DIR]
//   tisr infer    --ckpt a.ckpt [--ckpt b.ckpt] --in lr/ --out sr/
//   tisr evaluate --sr sr/ --gt gt/ [--shave P] [--quantize] [--json report.json]

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tisr/checkpoint.hpp"
#include "tisr/degradation.hpp"
#include "tisr/errors.hpp"
#include "tisr/evaluation.hpp"
#include "tisr/image.hpp"
#include "tisr/model.hpp"
#include "tisr/registration.hpp"
#include "tisr/run_config.hpp"
#include "tisr/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw tisr::IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

struct DegradeArgs {
    int scale = 4;
    double sigma = 10.0;
    uint64_t seed = 0;
    int bitdepth = 8;
    fs::path in;
    fs::path out;
};

int cmd_degrade(const DegradeArgs& a) {
    tisr::DegradationConfig cfg{a.scale, a.sigma, a.seed};
    cfg.validate();
    const auto files = tisr::list_images(a.in);
    if (files.empty()) {
        std::cerr << "degrade: no images found in " << a.in << '\n';
        return 1;
    }
    fs::create_directories(a.out / "lr");
    fs::create_directories(a.out / "hr");
    std::vector<tisr::ManifestEntry> entries;
    for (std::size_t i = 0; i < files.size(); ++i) {
        tisr::Rng rng(a.seed ^ static_cast<uint64_t>(i));
        const auto pair = tisr::make_lr(tisr::load_image(files[i]), cfg, rng);
        const std::string name = files[i].stem().string() + ".png";
        tisr::save_image(pair.lr, a.out / "lr" / name, a.bitdepth);
        tisr::save_image(pair.hr, a.out / "hr" / name, a.bitdepth);
        entries.push_back({"lr/" + name, "hr/" + name, a.scale, false});
        std::cerr << "degrade: " << name << " " << pair.hr.width << "x" << pair.hr.height << " -> "
                  << pair.lr.width << "x" << pair.lr.height << '\n';
    }
    tisr::write_manifest(a.out / "manifest.json", entries);
    return 0;
}

struct RegisterArgs {
    fs::path axis;
    fs::path flir;
    fs::path out;
    double threshold = 3.0;
    int iters = 2000;
    uint64_t seed = 0;
    int bitdepth = 8;
};

int cmd_register(const RegisterArgs& a) {
    std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> jobs;
    for (const auto& axis_path : tisr::list_images(a.axis)) {
        for (const auto& flir_path : tisr::list_images(a.flir)) {
            if (flir_path.stem() == axis_path.stem()) jobs.push_back({axis_path.stem().string(), {axis_path, flir_path}});
        }
    }
    if (jobs.empty()) {
        std::cerr << "register: no pairs found\n";
        return 1;
    }
    fs::create_directories(a.out / "lr");
    fs::create_directories(a.out / "hr");

    json manifest = json::array();
    json homographies = json::object();
    json failures = json::array();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& [name, paths] = jobs[i];
        tisr::RegistrationConfig cfg{a.threshold, a.iters, a.seed ^ static_cast<uint64_t>(i)};
        try {
            const auto reg = tisr::register_pair(tisr::load_image(paths.first), tisr::load_image(paths.second), cfg);
            const std::string file = name + ".png";
            tisr::save_image(reg.pair.lr, a.out / "lr" / file, a.bitdepth);
            tisr::save_image(reg.pair.hr, a.out / "hr" / file, a.bitdepth);
            std::vector<double> h;
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) h.push_back(reg.homography(r, c));
            }
            homographies[name] = h;
            manifest.push_back({{"lr", "lr/" + file},
                                {"hr", "hr/" + file},
                                {"scale", 2},
                                {"registered", true},
                                {"registration",
                                 {{"threshold_px", a.threshold},
                                  {"max_iters", a.iters},
                                  {"seed", cfg.seed},
                                  {"matches", reg.match_count},
                                  {"inliers", reg.inlier_count}}}});
            std::cerr << "register: " << name << " inliers " << reg.inlier_count << "/" << reg.match_count << '\n';
        } catch (const tisr::Error& e) {
            failures.push_back({{"name", name}, {"error", e.what()}});
            std::cerr << "register: " << name << " failed: " << e.what() << '\n';
        }
    }
    write_json(a.out / "manifest.json", manifest);
    write_json(a.out / "homographies.json", homographies);
    write_json(a.out / "failures.json", failures);
    return manifest.empty() ? 1 : 0;
}

struct TrainArgs {
    fs::path config;
    std::optional<fs::path> resume;
    std::optional<int64_t> steps;
    std::optional<uint64_t> seed;
    std::optional<fs::path> out;
};

int cmd_train(const TrainArgs& a) {
    tisr::RunConfig cfg = tisr::load_run_config(a.config);
    if (a.steps) cfg.train.steps = *a.steps;
    if (a.seed) {
        cfg.model.seed = *a.seed;
        cfg.train.seed = *a.seed;
        cfg.degradation.seed = *a.seed;
        if (cfg.discriminator) cfg.discriminator->seed = *a.seed + 1;
    }
    if (a.out) cfg.output_dir = *a.out;
    cfg.train.validate();

    auto data = tisr::load_training_pairs(cfg);
    auto validation = tisr::load_training_pairs(cfg, /*validation=*/true);
    fs::create_directories(cfg.output_dir);
    write_json(cfg.output_dir / "run_config.json", tisr::to_json(cfg));

    std::optional<tisr::Trainer> trainer;
    if (a.resume) {
        trainer.emplace(tisr::Trainer::resume(tisr::load_checkpoint(*a.resume), data, cfg.train, validation));
        std::cerr << "train: resumed at step " << trainer->step() << '\n';
    } else {
        tisr::BNCSNT generator = tisr::build_model(cfg.model);
        if (cfg.init_checkpoint) {
            // Shape checks in import_parameters catch architecture mismatches.
            tisr::import_parameters(*generator, tisr::load_checkpoint(*cfg.init_checkpoint), tisr::kGeneratorPrefix);
        }
        tisr::PatchDiscriminator disc(nullptr);
        if (cfg.discriminator && cfg.train.track == tisr::Track::track2_stage2) {
            disc = tisr::build_discriminator(*cfg.discriminator);
        }
        trainer.emplace(generator, disc, data, cfg.train, validation);
    }

    std::ofstream log(cfg.output_dir / "train_log.ndjson", a.resume ? std::ios::app : std::ios::trunc);
    trainer->set_log(&log);
    trainer->run();
    tisr::save_checkpoint(trainer->checkpoint(), cfg.output_dir / "last.ckpt");
    if (trainer->best()) tisr::save_checkpoint(*trainer->best(), cfg.output_dir / "best.ckpt");
    if (!trainer->history().empty()) {
        std::cerr << "train: step " << trainer->step() << " loss " << trainer->history().back().total << '\n';
    }
    return 0;
}

struct InferArgs {
    std::vector<fs::path> ckpts;
    fs::path in;
    fs::path out;
    int bitdepth = 8;
};

int cmd_infer(const InferArgs& a) {
    std::vector<tisr::BNCSNT> models;
    for (const auto& p : a.ckpts) models.push_back(tisr::restore_generator(tisr::load_checkpoint(p)));
    const auto files = tisr::list_images(a.in);
    if (files.empty()) {
        std::cerr << "infer: no images found in " << a.in << '\n';
        return 1;
    }
    fs::create_directories(a.out);
    for (const auto& f : files) {
        const tisr::Image sr = tisr::infer(models, tisr::load_image(f));
        tisr::save_image(sr, a.out / (f.stem().string() + ".png"), a.bitdepth);
        std::cerr << "infer: " << f.filename().string() << " -> " << sr.width << "x" << sr.height << '\n';
    }
    return 0;
}

struct EvaluateArgs {
    fs::path sr;
    fs::path gt;
    int shave = 0;
    bool quantize = false;
    std::optional<fs::path> json_out;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const auto report = tisr::evaluate(a.sr, a.gt, {a.shave, a.quantize});
    for (const auto& issue : report.issues) {
        std::cerr << "warning: " << issue.name << " skipped (" << issue.reason << ")\n";
    }
    std::cout << report.to_table();
    if (a.json_out) write_json(*a.json_out, report.to_json());
    return report.rows.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Thermal image super-resolution toolkit"};
    app.set_version_flag("--version", std::string("tisr ") + tisr::kToolkitVersion + " (config schema " +
                                          std::to_string(tisr::kConfigSchemaVersion) + ")");
    app.require_subcommand(1);

    DegradeArgs degrade;
    auto* c_degrade = app.add_subcommand("degrade", "Synthesize LR inputs (bicubic + AWGN)");
    c_degrade->add_option("--scale", degrade.scale)->check(CLI::IsMember({2, 4}));
    c_degrade->add_option("--sigma", degrade.sigma, "noise std on the 0-255 scale")->check(CLI::NonNegativeNumber);
    c_degrade->add_option("--seed", degrade.seed);
    c_degrade->add_option("--bitdepth", degrade.bitdepth)->check(CLI::IsMember({8, 16}));
    c_degrade->add_option("--in", degrade.in)->required();
    c_degrade->add_option("--out", degrade.out)->required();

    RegisterArgs reg;
    auto* c_register = app.add_subcommand("register", "Register axis frames onto flir frames");
    c_register->add_option("--axis", reg.axis)->required();
    c_register->add_option("--flir", reg.flir)->required();
    c_register->add_option("--out", reg.out)->required();
    c_register->add_option("--threshold", reg.threshold)->check(CLI::PositiveNumber);
    c_register->add_option("--iters", reg.iters)->check(CLI::PositiveNumber);
    c_register->add_option("--seed", reg.seed);
    c_register->add_option("--bitdepth", reg.bitdepth)->check(CLI::IsMember({8, 16}));

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train a model from a JSON run config");
    c_train->add_option("--config", train.config)->required()->check(CLI::ExistingFile);
    c_train->add_option("--resume", train.resume)->check(CLI::ExistingFile);
    c_train->add_option("--steps", train.steps)->check(CLI::PositiveNumber);
    c_train->add_option("--seed", train.seed);
    c_train->add_option("--out", train.out);

    InferArgs infer;
    auto* c_infer = app.add_subcommand("infer", "Super-resolve a directory (averaging up to two models)");
    c_infer->add_option("--ckpt", infer.ckpts)->required()->expected(1, 2);
    c_infer->add_option("--in", infer.in)->required();
    c_infer->add_option("--out", infer.out)->required();
    c_infer->add_option("--bitdepth", infer.bitdepth)->check(CLI::IsMember({8, 16}));

    EvaluateArgs eval;
    auto* c_eval = app.add_subcommand("evaluate", "PSNR/SSIM of SR outputs against ground truth");
    c_eval->add_option("--sr", eval.sr)->required();
    c_eval->add_option("--gt", eval.gt)->required();
    c_eval->add_option("--shave", eval.shave)->check(CLI::NonNegativeNumber);
    c_eval->add_flag("--quantize", eval.quantize);
    c_eval->add_option("--json", eval.json_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_degrade) return cmd_degrade(degrade);
        if (*c_register) return cmd_register(reg);
        if (*c_train) return cmd_train(train);
        if (*c_infer) return cmd_infer(infer);
        if (*c_eval) return cmd_evaluate(eval);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
