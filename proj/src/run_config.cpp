#include "tisr/run_config.hpp"

#include <fstream>
#include <map>
#include <set>

#include "tisr/errors.hpp"

namespace tisr {

namespace fs = std::filesystem;

namespace {

using KeySet = std::set<std::string>;

const std::map<std::string, KeySet>& schema() {
    static const std::map<std::string, KeySet> s = {
        {"", {"model", "train", "degradation", "discriminator", "data", "output_dir", "init_checkpoint"}},
        {"model", {"n_channels", "n_blocks", "window", "heads", "mlp_ratio", "scale", "seed"}},
        {"train",
         {"track", "loss_weights", "learning_rate", "betas", "batch_size", "steps", "lr_schedule", "seed", "patch",
          "augment", "validate_every"}},
        {"train.loss_weights", {"l1", "gan", "ssim"}},
        {"train.lr_schedule", {"kind", "milestones"}},
        {"degradation", {"scale", "noise_sigma", "seed"}},
        {"discriminator", {"base_channels", "seed"}},
        {"data", {"manifest", "hr_dir", "validation_manifest", "validation_hr_dir"}},
    };
    return s;
}

void check_keys(const nlohmann::json& node, const std::string& path) {
    const auto& s = schema();
    auto allowed = s.find(path);
    if (allowed == s.end()) return;
    if (!node.is_object()) {
        throw ConfigError("config key '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
    }
    for (const auto& [key, value] : node.items()) {
        const std::string child = path.empty() ? key : path + "." + key;
        if (!allowed->second.count(key)) throw ConfigError("unknown config key '" + child + "'");
        check_keys(value, child);
    }
}

fs::path resolve(const nlohmann::json& v, const fs::path& base, const std::string& key, bool must_exist) {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a path string");
    fs::path p = v.get<std::string>();
    if (p.is_relative()) p = base / p;
    if (must_exist && !fs::exists(p)) throw ConfigError("config key '" + key + "' path not found: " + p.string());
    return p;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc, const fs::path& base_dir) {
    check_keys(doc, "");
    RunConfig cfg;
    try {
        if (doc.contains("model")) cfg.model = doc.at("model").get<ModelConfig>();
        if (doc.contains("train")) cfg.train = doc.at("train").get<TrainConfig>();
        if (doc.contains("degradation")) {
            const auto& d = doc.at("degradation");
            cfg.degradation.scale = d.value("scale", static_cast<int>(cfg.model.scale));
            cfg.degradation.noise_sigma = d.value("noise_sigma", cfg.degradation.noise_sigma);
            cfg.degradation.seed = d.value("seed", cfg.degradation.seed);
        } else {
            cfg.degradation.scale = static_cast<int>(cfg.model.scale);
        }
        if (doc.contains("discriminator")) cfg.discriminator = doc.at("discriminator").get<DiscriminatorConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }

    if (doc.contains("data")) {
        const auto& d = doc.at("data");
        if (d.contains("manifest")) cfg.data.manifest = resolve(d.at("manifest"), base_dir, "data.manifest", true);
        if (d.contains("hr_dir")) cfg.data.hr_dir = resolve(d.at("hr_dir"), base_dir, "data.hr_dir", true);
        if (d.contains("validation_manifest")) {
            cfg.data.validation_manifest =
                resolve(d.at("validation_manifest"), base_dir, "data.validation_manifest", true);
        }
        if (d.contains("validation_hr_dir")) {
            cfg.data.validation_hr_dir = resolve(d.at("validation_hr_dir"), base_dir, "data.validation_hr_dir", true);
        }
    }
    if (doc.contains("output_dir")) cfg.output_dir = resolve(doc.at("output_dir"), base_dir, "output_dir", false);
    else cfg.output_dir = base_dir / cfg.output_dir;
    if (doc.contains("init_checkpoint")) {
        cfg.init_checkpoint = resolve(doc.at("init_checkpoint"), base_dir, "init_checkpoint", true);
    }

    cfg.model.validate();
    cfg.train.validate();
    cfg.degradation.validate();
    if (!cfg.data.manifest && !cfg.data.hr_dir) throw ConfigError("config needs data.manifest or data.hr_dir");
    if (cfg.train.track == Track::track2_stage2 && !cfg.discriminator) {
        throw ConfigError("track2_stage2 requires a 'discriminator' section");
    }
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_run_config(doc, fs::absolute(path).parent_path());
}

nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["model"] = cfg.model;
    j["train"] = cfg.train;
    j["degradation"] = {{"scale", cfg.degradation.scale},
                        {"noise_sigma", cfg.degradation.noise_sigma},
                        {"seed", cfg.degradation.seed}};
    if (cfg.discriminator) j["discriminator"] = *cfg.discriminator;
    nlohmann::json data = nlohmann::json::object();
    if (cfg.data.manifest) data["manifest"] = cfg.data.manifest->string();
    if (cfg.data.hr_dir) data["hr_dir"] = cfg.data.hr_dir->string();
    if (cfg.data.validation_manifest) data["validation_manifest"] = cfg.data.validation_manifest->string();
    if (cfg.data.validation_hr_dir) data["validation_hr_dir"] = cfg.data.validation_hr_dir->string();
    j["data"] = data;
    j["output_dir"] = cfg.output_dir.string();
    if (cfg.init_checkpoint) j["init_checkpoint"] = cfg.init_checkpoint->string();
    return j;
}

std::vector<PairedSample> degrade_directory(const fs::path& hr_dir, const DegradationConfig& cfg) {
    std::vector<PairedSample> pairs;
    const auto files = list_images(hr_dir);
    for (std::size_t i = 0; i < files.size(); ++i) {
        Rng rng(cfg.seed ^ static_cast<uint64_t>(i));
        pairs.push_back(make_lr(load_image(files[i]), cfg, rng));
    }
    return pairs;
}

std::vector<PairedSample> load_training_pairs(const RunConfig& cfg, bool validation) {
    const auto& manifest = validation ? cfg.data.validation_manifest : cfg.data.manifest;
    const auto& hr_dir = validation ? cfg.data.validation_hr_dir : cfg.data.hr_dir;
    if (manifest) return load_manifest_pairs(*manifest);
    if (hr_dir) return degrade_directory(*hr_dir, cfg.degradation);
    return {};
}

}  // namespace tisr
