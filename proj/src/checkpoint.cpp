#include "tisr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "tisr/errors.hpp"

namespace tisr {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes a little-endian host");

constexpr char kMagic[8] = {'T', 'I', 'S', 'R', 'C', 'K', 'P', '1'};

std::string dtype_name(torch::Dtype d) {
    switch (d) {
        case torch::kFloat32: return "float32";
        case torch::kFloat64: return "float64";
        case torch::kInt64: return "int64";
        default: throw ArgumentError("unsupported checkpoint dtype");
    }
}

torch::Dtype dtype_from_name(const std::string& s) {
    if (s == "float32") return torch::kFloat32;
    if (s == "float64") return torch::kFloat64;
    if (s == "int64") return torch::kInt64;
    throw CorruptionError("unknown dtype '" + s + "' in checkpoint");
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

NamedTensors export_parameters(const torch::nn::Module& module, const std::string& prefix) {
    NamedTensors out;
    for (const auto& item : module.named_parameters()) {
        out.emplace_back(prefix + item.key(), item.value().detach().clone());
    }
    return out;
}

void import_parameters(torch::nn::Module& module, const Checkpoint& ckpt, const std::string& prefix) {
    torch::NoGradGuard no_grad;
    std::set<std::string> expected;
    for (auto& item : module.named_parameters()) {
        const std::string name = prefix + item.key();
        expected.insert(name);
        const torch::Tensor* src = ckpt.find(name);
        if (src == nullptr) throw CorruptionError("checkpoint lacks parameter " + name);
        if (src->sizes() != item.value().sizes()) {
            throw CorruptionError("shape mismatch for " + name + ": checkpoint " + c10::str(src->sizes()) +
                                  " vs model " + c10::str(item.value().sizes()));
        }
        item.value().copy_(*src);
    }
    for (const auto& [name, t] : ckpt.tensors) {
        if (starts_with(name, prefix) && !expected.count(name)) {
            throw CorruptionError("checkpoint has unexpected parameter " + name);
        }
    }
}

Checkpoint make_checkpoint(const BNCSNT& model, int64_t step) {
    Checkpoint ckpt;
    ckpt.model_config = model->config();
    ckpt.step = step;
    ckpt.tensors = export_parameters(*model, kGeneratorPrefix);
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::json manifest;
    manifest["format"] = "tisr-checkpoint";
    manifest["version"] = 1;
    manifest["model_config"] = ckpt.model_config;
    manifest["discriminator_config"] =
        ckpt.discriminator_config ? nlohmann::json(*ckpt.discriminator_config) : nlohmann::json(nullptr);
    manifest["step"] = ckpt.step;
    manifest["rng_state"] = ckpt.rng_state;
    manifest["meta"] = ckpt.meta;

    std::vector<torch::Tensor> blobs;
    nlohmann::json entries = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, tensor] : ckpt.tensors) {
        auto t = tensor.detach().cpu().contiguous();
        const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * t.element_size();
        entries.push_back({{"name", name},
                           {"dtype", dtype_name(t.scalar_type())},
                           {"shape", t.sizes().vec()},
                           {"offset", offset},
                           {"nbytes", nbytes}});
        offset += nbytes;
        blobs.push_back(std::move(t));
    }
    manifest["tensors"] = entries;

    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    const uint64_t len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : blobs) {
        out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CorruptionError("not a tisr checkpoint: " + path.string());
    }
    uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof(len));
    if (len > bytes.size() - 16) throw CorruptionError("truncated checkpoint manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("unparseable checkpoint manifest: ") + e.what());
    }
    const std::size_t data_start = 16 + len;
    const std::size_t data_size = bytes.size() - data_start;

    Checkpoint ckpt;
    try {
        if (manifest.at("format") != "tisr-checkpoint") throw CorruptionError("wrong checkpoint format tag");
        ckpt.model_config = manifest.at("model_config").get<ModelConfig>();
        if (!manifest.at("discriminator_config").is_null()) {
            ckpt.discriminator_config = manifest.at("discriminator_config").get<DiscriminatorConfig>();
        }
        ckpt.step = manifest.at("step").get<int64_t>();
        ckpt.rng_state = manifest.at("rng_state").get<std::string>();
        ckpt.meta = manifest.value("meta", nlohmann::json::object());

        for (const auto& e : manifest.at("tensors")) {
            const auto dtype = dtype_from_name(e.at("dtype").get<std::string>());
            const auto shape = e.at("shape").get<std::vector<int64_t>>();
            const auto offset = e.at("offset").get<uint64_t>();
            const auto nbytes = e.at("nbytes").get<uint64_t>();
            auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
            if (static_cast<uint64_t>(t.numel()) * t.element_size() != nbytes || offset > data_size ||
                nbytes > data_size - offset) {
                throw CorruptionError("tensor " + e.at("name").get<std::string>() + " exceeds checkpoint data");
            }
            std::memcpy(t.data_ptr(), bytes.data() + data_start + offset, nbytes);
            ckpt.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptionError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    return ckpt;
}

BNCSNT restore_generator(const Checkpoint& ckpt) {
    BNCSNT model(nullptr);
    try {
        model = BNCSNT(ckpt.model_config);
    } catch (const ConfigError& e) {
        throw CorruptionError(std::string("invalid model config in checkpoint: ") + e.what());
    }
    // Stored dtype decides the model precision.
    if (const auto* first = ckpt.find(std::string(kGeneratorPrefix) + "stem.weight")) {
        model->to(first->scalar_type());
    }
    import_parameters(*model, ckpt, kGeneratorPrefix);
    return model;
}

PatchDiscriminator restore_discriminator(const Checkpoint& ckpt) {
    if (!ckpt.discriminator_config) throw CorruptionError("checkpoint has no discriminator");
    PatchDiscriminator d(*ckpt.discriminator_config);
    import_parameters(*d, ckpt, kDiscriminatorPrefix);
    return d;
}

}  // namespace tisr
