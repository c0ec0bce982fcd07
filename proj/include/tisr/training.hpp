#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "tisr/checkpoint.hpp"
#include "tisr/image.hpp"
#include "tisr/losses.hpp"
#include "tisr/model.hpp"

namespace tisr {

enum class Track { track1_x4, track2_stage1, track2_stage2 };

std::string to_string(Track t);
Track track_from_string(const std::string& s);

struct LossWeights {
    double l1 = 1.0;
    double gan = 0.005;
    double ssim = 0.1;
};

struct LrSchedule {
    enum class Kind { constant, halve_at };
    Kind kind = Kind::halve_at;
    // Steps at which the rate halves; empty means 50%, 75% and 90% of the run.
    std::vector<int64_t> milestones;

    double rate(double base, int64_t step, int64_t total_steps) const;
};

struct TrainConfig {
    Track track = Track::track1_x4;
    LossWeights weights;
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 4;
    int64_t steps = 1000;
    LrSchedule schedule;
    uint64_t seed = 0;
    int patch = 64;
    bool augment = true;
    int64_t validate_every = 1000;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

// Adaptive moment estimation over a fixed, named parameter list.
class Adam {
public:
    Adam(NamedTensors params, double beta1, double beta2, double eps);

    void zero_grad();
    void step(double lr);

    int64_t steps() const { return steps_; }

    // Moments as "<prefix>exp_avg/<name>" and "<prefix>exp_avg_sq/<name>".
    NamedTensors export_state(const std::string& prefix) const;
    void import_state(const Checkpoint& ckpt, const std::string& prefix, int64_t steps);

private:
    NamedTensors params_;
    std::vector<torch::Tensor> exp_avg_;
    std::vector<torch::Tensor> exp_avg_sq_;
    double beta1_;
    double beta2_;
    double eps_;
    int64_t steps_ = 0;
};

struct StepRecord {
    int64_t step = 0;
    double total = 0.0;
    double l1 = 0.0;
    std::optional<double> gan_g;
    std::optional<double> ssim_loss;
    std::optional<double> d_loss;
    double lr = 0.0;
    double elapsed = 0.0;

    nlohmann::json to_json() const;
};

struct ValidationRecord {
    int64_t step = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

// Single training loop shared by all tracks. One step draws a batch of
// random crops (augmented when enabled), runs the generator and then, when a
// discriminator is attached, performs one discriminator update on detached
// outputs followed by one generator update.
class Trainer {
public:
    Trainer(BNCSNT generator, PatchDiscriminator discriminator, std::vector<PairedSample> data, TrainConfig cfg,
            std::vector<PairedSample> validation = {});

    // Continues from a checkpoint produced by checkpoint().
    static Trainer resume(const Checkpoint& ckpt, std::vector<PairedSample> data, TrainConfig cfg,
                          std::vector<PairedSample> validation = {});

    void step_once();
    // Runs until the step counter reaches min(until, cfg.steps).
    void run(int64_t until);
    void run() { run(cfg_.steps); }

    ValidationRecord validate();

    Checkpoint checkpoint() const;
    const std::optional<Checkpoint>& best() const { return best_; }

    int64_t step() const { return step_; }
    const TrainConfig& config() const { return cfg_; }
    BNCSNT generator() const { return generator_; }
    PatchDiscriminator discriminator() const { return discriminator_; }
    const std::vector<StepRecord>& history() const { return history_; }
    const std::vector<ValidationRecord>& validations() const { return validations_; }

    // Newline-delimited JSON training log; not owned.
    void set_log(std::ostream* log) { log_ = log; }

private:
    std::pair<torch::Tensor, torch::Tensor> draw_batch();

    BNCSNT generator_;
    PatchDiscriminator discriminator_;
    std::vector<PairedSample> data_;
    std::vector<PairedSample> validation_;
    TrainConfig cfg_;
    Adam g_opt_;
    std::optional<Adam> d_opt_;
    Rng rng_;
    int64_t step_ = 0;
    double best_psnr_ = -1.0;
    std::optional<Checkpoint> best_;
    std::vector<StepRecord> history_;
    std::vector<ValidationRecord> validations_;
    std::ostream* log_ = nullptr;
    std::chrono::steady_clock::time_point started_;
};

struct TrainOptions {
    std::vector<PairedSample> validation;
    std::ostream* log = nullptr;
};

struct TrainResult {
    Checkpoint last;
    std::optional<Checkpoint> best;
    std::vector<StepRecord> history;
    std::vector<ValidationRecord> validations;
};

// x4 on synthetic pairs, L1 only.
TrainResult train_track1(BNCSNT model, std::vector<PairedSample> data, const TrainConfig& cfg,
                         TrainOptions opts = {});

// x2 on synthetic self-pairs, L1 only.
TrainResult train_track2_stage1(BNCSNT model, std::vector<PairedSample> data, const TrainConfig& cfg,
                                TrainOptions opts = {});

// x2 on registered cross-camera pairs with L1 + LSGAN + SSIM objectives.
TrainResult train_track2_stage2(BNCSNT model, PatchDiscriminator discriminator, std::vector<PairedSample> data,
                                const TrainConfig& cfg, TrainOptions opts = {});

// Mean of the models' outputs, clipped to [0,1].
Image infer(const std::vector<BNCSNT>& models, const Image& lr);

// Un-clipped generator output for one image.
torch::Tensor forward_image(const BNCSNT& model, const Image& lr);

}  // namespace tisr
