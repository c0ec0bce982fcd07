#include "tisr/training.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "tisr/errors.hpp"

namespace tisr {

namespace {

const char* const kGenOptPrefix = "optim/generator/";
const char* const kDiscOptPrefix = "optim/discriminator/";

torch::Dtype parameter_dtype(const torch::nn::Module& m) {
    const auto params = m.parameters();
    return params.empty() ? torch::kFloat32 : params.front().scalar_type();
}

NamedTensors live_parameters(const torch::nn::Module& m) {
    NamedTensors out;
    for (const auto& item : m.named_parameters()) out.emplace_back(item.key(), item.value());
    return out;
}

}  // namespace

std::string to_string(Track t) {
    switch (t) {
        case Track::track1_x4: return "track1_x4";
        case Track::track2_stage1: return "track2_stage1";
        case Track::track2_stage2: return "track2_stage2";
    }
    return "unknown";
}

Track track_from_string(const std::string& s) {
    if (s == "track1_x4") return Track::track1_x4;
    if (s == "track2_stage1") return Track::track2_stage1;
    if (s == "track2_stage2") return Track::track2_stage2;
    throw ConfigError("unknown track '" + s + "'");
}

double LrSchedule::rate(double base, int64_t step, int64_t total_steps) const {
    if (kind == Kind::constant) return base;
    std::vector<int64_t> marks = milestones;
    if (marks.empty()) {
        for (double frac : {0.5, 0.75, 0.9}) {
            marks.push_back(static_cast<int64_t>(std::llround(frac * static_cast<double>(total_steps))));
        }
    }
    double r = base;
    for (int64_t m : marks) {
        if (step >= m) r *= 0.5;
    }
    return r;
}

void TrainConfig::validate() const {
    if (weights.l1 < 0.0 || weights.gan < 0.0 || weights.ssim < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (track == Track::track2_stage2 && weights.l1 == 0.0 && weights.gan == 0.0 && weights.ssim == 0.0) {
        throw ConfigError("stage-2 training needs at least one positive loss weight");
    }
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (steps < 1) throw ConfigError("steps must be positive");
    if (patch < 1) throw ConfigError("patch must be positive");
    if (validate_every < 0) throw ConfigError("validate_every must be non-negative");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
    nlohmann::json schedule = {{"kind", cfg.schedule.kind == LrSchedule::Kind::constant ? "constant" : "halve_at"}};
    if (!cfg.schedule.milestones.empty()) schedule["milestones"] = cfg.schedule.milestones;
    j = {{"track", to_string(cfg.track)},
         {"loss_weights", {{"l1", cfg.weights.l1}, {"gan", cfg.weights.gan}, {"ssim", cfg.weights.ssim}}},
         {"learning_rate", cfg.learning_rate},
         {"betas", {cfg.beta1, cfg.beta2}},
         {"batch_size", cfg.batch_size},
         {"steps", cfg.steps},
         {"lr_schedule", schedule},
         {"seed", cfg.seed},
         {"patch", cfg.patch},
         {"augment", cfg.augment},
         {"validate_every", cfg.validate_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    TrainConfig d;
    cfg = d;
    if (j.contains("track")) cfg.track = track_from_string(j.at("track").get<std::string>());
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        cfg.weights.l1 = w.value("l1", d.weights.l1);
        cfg.weights.gan = w.value("gan", d.weights.gan);
        cfg.weights.ssim = w.value("ssim", d.weights.ssim);
    }
    cfg.learning_rate = j.value("learning_rate", d.learning_rate);
    if (j.contains("betas")) {
        const auto betas = j.at("betas").get<std::vector<double>>();
        if (betas.size() != 2) throw ConfigError("betas must have two entries");
        cfg.beta1 = betas[0];
        cfg.beta2 = betas[1];
    }
    cfg.batch_size = j.value("batch_size", d.batch_size);
    cfg.steps = j.value("steps", d.steps);
    if (j.contains("lr_schedule")) {
        const auto& s = j.at("lr_schedule");
        const auto kind = s.value("kind", std::string("halve_at"));
        if (kind == "constant") {
            cfg.schedule.kind = LrSchedule::Kind::constant;
        } else if (kind == "halve_at") {
            cfg.schedule.kind = LrSchedule::Kind::halve_at;
        } else {
            throw ConfigError("unknown lr_schedule kind '" + kind + "'");
        }
        cfg.schedule.milestones = s.value("milestones", std::vector<int64_t>{});
    }
    cfg.seed = j.value("seed", d.seed);
    cfg.patch = j.value("patch", d.patch);
    cfg.augment = j.value("augment", d.augment);
    cfg.validate_every = j.value("validate_every", d.validate_every);
}

// ---------------------------------------------------------------------------

Adam::Adam(NamedTensors params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, p] : params_) {
        exp_avg_.push_back(torch::zeros_like(p));
        exp_avg_sq_.push_back(torch::zeros_like(p));
    }
}

void Adam::zero_grad() {
    for (auto& [name, p] : params_) {
        if (p.grad().defined()) p.mutable_grad().reset();
    }
}

void Adam::step(double lr) {
    torch::NoGradGuard no_grad;
    ++steps_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].second;
        if (!p.grad().defined()) continue;
        const auto& g = p.grad();
        exp_avg_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
        exp_avg_sq_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
        auto denom = (exp_avg_sq_[i] / bc2).sqrt_().add_(eps_);
        p.addcdiv_(exp_avg_[i], denom, -lr / bc1);
    }
}

NamedTensors Adam::export_state(const std::string& prefix) const {
    NamedTensors out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.emplace_back(prefix + "exp_avg/" + params_[i].first, exp_avg_[i].clone());
        out.emplace_back(prefix + "exp_avg_sq/" + params_[i].first, exp_avg_sq_[i].clone());
    }
    return out;
}

void Adam::import_state(const Checkpoint& ckpt, const std::string& prefix, int64_t steps) {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto* m = ckpt.find(prefix + "exp_avg/" + params_[i].first);
        const auto* v = ckpt.find(prefix + "exp_avg_sq/" + params_[i].first);
        if (m == nullptr || v == nullptr) throw CorruptionError("checkpoint lacks optimizer state for " + params_[i].first);
        if (m->sizes() != exp_avg_[i].sizes() || v->sizes() != exp_avg_sq_[i].sizes()) {
            throw CorruptionError("optimizer state shape mismatch for " + params_[i].first);
        }
        exp_avg_[i].copy_(*m);
        exp_avg_sq_[i].copy_(*v);
    }
    steps_ = steps;
}

// ---------------------------------------------------------------------------

nlohmann::json StepRecord::to_json() const {
    nlohmann::json j = {{"step", step}, {"loss", total}, {"l1", l1}, {"lr", lr}, {"elapsed", elapsed}};
    if (gan_g) j["gan_g"] = *gan_g;
    if (ssim_loss) j["ssim_loss"] = *ssim_loss;
    if (d_loss) j["d_loss"] = *d_loss;
    return j;
}

Trainer::Trainer(BNCSNT generator, PatchDiscriminator discriminator, std::vector<PairedSample> data,
                 TrainConfig cfg, std::vector<PairedSample> validation)
    : generator_(std::move(generator)),
      discriminator_(std::move(discriminator)),
      data_(std::move(data)),
      validation_(std::move(validation)),
      cfg_(std::move(cfg)),
      g_opt_(live_parameters(*generator_), cfg_.beta1, cfg_.beta2, cfg_.adam_eps),
      rng_(cfg_.seed),
      started_(std::chrono::steady_clock::now()) {
    cfg_.validate();
    const auto& mcfg = generator_->config();
    if (data_.empty()) throw ConfigError("training data is empty");
    if (cfg_.patch % mcfg.window != 0) {
        throw ConfigError("patch " + std::to_string(cfg_.patch) + " must be a multiple of the window " +
                          std::to_string(mcfg.window));
    }
    for (const auto& pair : data_) {
        if (pair.scale != mcfg.scale) {
            throw ConfigError("pair scale " + std::to_string(pair.scale) + " differs from model scale " +
                              std::to_string(mcfg.scale));
        }
    }
    if (cfg_.track == Track::track2_stage2 && !discriminator_) {
        throw ConfigError("stage-2 training requires a discriminator");
    }
    if (discriminator_) {
        const int64_t hr_patch = cfg_.patch * mcfg.scale;
        if (discriminator_output_size(hr_patch) < 1) {
            throw ConfigError("hr patch " + std::to_string(hr_patch) + " is too small for the discriminator");
        }
        d_opt_.emplace(live_parameters(*discriminator_), cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    }
}

Trainer Trainer::resume(const Checkpoint& ckpt, std::vector<PairedSample> data, TrainConfig cfg,
                        std::vector<PairedSample> validation) {
    BNCSNT generator = restore_generator(ckpt);
    PatchDiscriminator discriminator(nullptr);
    if (ckpt.discriminator_config) discriminator = restore_discriminator(ckpt);

    Trainer t(generator, discriminator, std::move(data), std::move(cfg), std::move(validation));
    const auto steps = ckpt.meta.value("optimizer_steps", nlohmann::json::object());
    t.g_opt_.import_state(ckpt, kGenOptPrefix, steps.value("generator", ckpt.step));
    if (t.d_opt_) t.d_opt_->import_state(ckpt, kDiscOptPrefix, steps.value("discriminator", ckpt.step));

    std::istringstream rng_in(ckpt.rng_state);
    rng_in >> t.rng_;
    if (!rng_in) throw CorruptionError("unreadable rng state in checkpoint");
    t.step_ = ckpt.step;
    t.best_psnr_ = ckpt.meta.value("best_psnr", -1.0);
    return t;
}

std::pair<torch::Tensor, torch::Tensor> Trainer::draw_batch() {
    const auto dtype = parameter_dtype(*generator_);
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<torch::Tensor> lrs;
    std::vector<torch::Tensor> hrs;
    for (int b = 0; b < cfg_.batch_size; ++b) {
        PairedSample crop = random_crop_pair(data_[pick(rng_)], cfg_.patch, rng_);
        if (cfg_.augment) crop = augment_pair(crop, rng_);
        lrs.push_back(image_to_tensor(crop.lr, dtype));
        hrs.push_back(image_to_tensor(crop.hr, dtype));
    }
    return {torch::cat(lrs, 0), torch::cat(hrs, 0)};
}

void Trainer::step_once() {
    auto [lr, hr] = draw_batch();
    const double rate = cfg_.schedule.rate(cfg_.learning_rate, step_, cfg_.steps);

    generator_->train();
    auto sr = generator_->forward(lr);

    StepRecord rec;
    rec.step = step_ + 1;
    rec.lr = rate;

    if (discriminator_) {
        auto d_loss = lsgan_d_loss(discriminator_->forward(hr), discriminator_->forward(sr.detach()));
        d_opt_->zero_grad();
        d_loss.backward();
        d_opt_->step(rate);
        rec.d_loss = d_loss.item<double>();
    }

    auto l1 = tisr::l1_loss(sr, hr);
    rec.l1 = l1.item<double>();
    torch::Tensor loss;
    if (cfg_.track != Track::track2_stage2) {
        loss = l1;
    } else {
        // A zero weight drops its term entirely rather than scaling it.
        const auto& w = cfg_.weights;
        auto accumulate = [&loss](const torch::Tensor& term) { loss = loss.defined() ? loss + term : term; };
        if (w.l1 > 0.0) accumulate(w.l1 * l1);
        if (w.gan > 0.0) {
            auto g = lsgan_g_loss(discriminator_->forward(sr));
            rec.gan_g = g.item<double>();
            accumulate(w.gan * g);
        }
        if (w.ssim > 0.0) {
            auto s = tisr::ssim_loss(sr, hr);
            rec.ssim_loss = s.item<double>();
            accumulate(w.ssim * s);
        }
    }

    g_opt_.zero_grad();
    loss.backward();
    g_opt_.step(rate);

    ++step_;
    rec.total = loss.item<double>();
    rec.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    history_.push_back(rec);
    if (log_ != nullptr) *log_ << rec.to_json().dump() << '\n';

    if (cfg_.validate_every > 0 && !validation_.empty() && step_ % cfg_.validate_every == 0) {
        const ValidationRecord v = validate();
        if (v.psnr > best_psnr_) {
            best_psnr_ = v.psnr;
            best_ = checkpoint();
        }
    }
}

void Trainer::run(int64_t until) {
    const int64_t target = std::min(until, cfg_.steps);
    while (step_ < target) step_once();
}

ValidationRecord Trainer::validate() {
    ValidationRecord rec;
    rec.step = step_;
    if (validation_.empty()) return rec;
    for (const auto& pair : validation_) {
        const Image sr = infer({generator_}, pair.lr);
        const ImageMetrics m = evaluate_pair(sr, pair.hr);
        rec.psnr += m.psnr;
        rec.ssim += m.ssim;
    }
    rec.psnr /= static_cast<double>(validation_.size());
    rec.ssim /= static_cast<double>(validation_.size());
    validations_.push_back(rec);
    if (log_ != nullptr) {
        *log_ << nlohmann::json{{"step", rec.step}, {"val_psnr", rec.psnr}, {"val_ssim", rec.ssim}}.dump() << '\n';
    }
    return rec;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ckpt;
    ckpt.model_config = generator_->config();
    ckpt.step = step_;
    std::ostringstream rng_out;
    rng_out << rng_;
    ckpt.rng_state = rng_out.str();
    ckpt.tensors = export_parameters(*generator_, kGeneratorPrefix);
    auto g_state = g_opt_.export_state(kGenOptPrefix);
    ckpt.tensors.insert(ckpt.tensors.end(), g_state.begin(), g_state.end());
    nlohmann::json opt_steps = {{"generator", g_opt_.steps()}};
    if (discriminator_) {
        ckpt.discriminator_config = discriminator_->config();
        auto d_params = export_parameters(*discriminator_, kDiscriminatorPrefix);
        ckpt.tensors.insert(ckpt.tensors.end(), d_params.begin(), d_params.end());
        auto d_state = d_opt_->export_state(kDiscOptPrefix);
        ckpt.tensors.insert(ckpt.tensors.end(), d_state.begin(), d_state.end());
        opt_steps["discriminator"] = d_opt_->steps();
    }
    ckpt.meta = {{"optimizer_steps", opt_steps}, {"train_config", cfg_}, {"best_psnr", best_psnr_}};
    return ckpt;
}

// ---------------------------------------------------------------------------

namespace {

TrainResult run_training(Trainer& trainer, std::ostream* log) {
    trainer.set_log(log);
    trainer.run();
    return {trainer.checkpoint(), trainer.best(), trainer.history(), trainer.validations()};
}

void require_pairs(const std::vector<PairedSample>& data, bool registered, const char* what) {
    for (const auto& p : data) {
        if (p.registered != registered) {
            throw ConfigError(std::string(what) + (registered ? " expects registered pairs" : " expects synthetic pairs"));
        }
    }
}

}  // namespace

TrainResult train_track1(BNCSNT model, std::vector<PairedSample> data, const TrainConfig& cfg, TrainOptions opts) {
    if (cfg.track != Track::track1_x4) throw ConfigError("train_track1 needs track1_x4");
    if (model->config().scale != 4) throw ConfigError("track-1 model must have scale 4");
    require_pairs(data, false, "track-1");
    Trainer t(model, nullptr, std::move(data), cfg, std::move(opts.validation));
    return run_training(t, opts.log);
}

TrainResult train_track2_stage1(BNCSNT model, std::vector<PairedSample> data, const TrainConfig& cfg,
                                TrainOptions opts) {
    if (cfg.track != Track::track2_stage1) throw ConfigError("train_track2_stage1 needs track2_stage1");
    if (model->config().scale != 2) throw ConfigError("track-2 model must have scale 2");
    require_pairs(data, false, "track-2 stage-1");
    Trainer t(model, nullptr, std::move(data), cfg, std::move(opts.validation));
    return run_training(t, opts.log);
}

TrainResult train_track2_stage2(BNCSNT model, PatchDiscriminator discriminator, std::vector<PairedSample> data,
                                const TrainConfig& cfg, TrainOptions opts) {
    if (cfg.track != Track::track2_stage2) throw ConfigError("train_track2_stage2 needs track2_stage2");
    if (!discriminator) throw ConfigError("stage-2 training requires a discriminator");
    if (model->config().scale != 2) throw ConfigError("track-2 model must have scale 2");
    require_pairs(data, true, "track-2 stage-2");
    Trainer t(model, discriminator, std::move(data), cfg, std::move(opts.validation));
    return run_training(t, opts.log);
}

torch::Tensor forward_image(const BNCSNT& model, const Image& lr) {
    torch::NoGradGuard no_grad;
    BNCSNT m = model;
    return m->forward(image_to_tensor(lr, parameter_dtype(*m)));
}

Image infer(const std::vector<BNCSNT>& models, const Image& lr) {
    if (models.empty()) throw ArgumentError("infer needs at least one model");
    const int64_t scale = models.front()->config().scale;
    for (const auto& m : models) {
        if (m->config().scale != scale) throw ArgumentError("ensemble models must share the same scale");
    }
    torch::NoGradGuard no_grad;
    torch::Tensor sum;
    for (const auto& m : models) {
        auto y = forward_image(m, lr).to(torch::kFloat64);
        sum = sum.defined() ? sum + y : y;
    }
    auto mean = (sum / static_cast<double>(models.size())).clamp(0.0, 1.0);
    return tensor_to_image(mean);
}

}  // namespace tisr
