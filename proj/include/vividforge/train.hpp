#pragma once

#include "vividforge/archive.hpp"
#include "vividforge/flow_net.hpp"
#include "vividforge/latent.hpp"
#include "vividforge/latent_codec.hpp"
#include "vividforge/media.hpp"
#include "vividforge/random.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vividforge {

struct LossConfig {
    double p = 0.5;              // probability of the face-focused branch
    double lambda_percep = 0.1;  // weight of the gradient-structure term in stage 2

    void validate() const;
};

struct TrainConfig {
    int stage = 1;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch = 4;
    int steps = 2000;
    std::uint64_t seed = 0;
    int checkpoint_every = 0; // 0 disables intermediate checkpoints
    std::vector<std::string> clips; // roster; empty means every cached clip
    FlowConfig flow;

    void validate() const;
};

struct LossValue {
    double value = 0.0;
    std::vector<double> grad; // d value / d prediction
};

/// b = 0: mean squared error over all elements.
/// b = 1: sum((M (pred - target))^2) / max(sum(M), 1).
LossValue masked_loss(std::span<const double> target, std::span<const double> pred,
                      std::span<const double> mask, int b);

/// Bernoulli(p) draw.
int sample_b(Rng& rng, double p);

/// Mean squared difference of horizontal and vertical first differences,
/// averaged between full resolution and a 2x2 average-pooled copy. Gradient
/// is with respect to `pred`.
LossValue percep_proxy(const Video& pred, const Video& target);

/// Pixel mask broadcast over the three colour channels, Video layout.
std::vector<double> expand_mask(const MaskStack& masks);

struct ClipPair {
    std::string id;
    Video low;
    Video high;
    MaskStack masks; // facial masks of the high-quality clip
};

/// Archive with "zl/<id>", "zh/<id>", "Ml/<id>", "Mp/<id>" per clip.
TensorArchive cache_latents(const std::vector<ClipPair>& clips, const PatchBasis& basis);

struct CachedClip {
    std::string id;
    LatentGrid z_low;
    LatentGrid z_high;
    LatentMask latent_mask;
    MaskStack pixel_mask;
};

/// Clips in id order. A non-empty roster selects (and requires) those ids.
std::vector<CachedClip> load_cache(const TensorArchive& archive, const std::vector<std::string>& roster = {});

/// Adaptive moment estimation. Parameters and moments are rounded to f32
/// after every step so checkpoints restore them bit-exactly.
class Adam {
public:
    Adam() = default;
    Adam(std::size_t n, double lr, double beta1, double beta2, double eps);

    void step(std::span<double> params, std::span<const double> grad);

    std::vector<double>& m() { return m_; }
    std::vector<double>& v() { return v_; }
    const std::vector<double>& m() const { return m_; }
    const std::vector<double>& v() const { return v_; }
    long steps_taken() const { return t_; }
    void set_steps_taken(long t) { t_ = t; }

private:
    double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    std::vector<double> m_, v_;
};

struct Checkpoint {
    VelocityNet net;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    long step = 0;
    int stage = 1;

    /// "net/*", "opt/m/*", "opt/v/*", "meta/step", "meta/stage".
    TensorArchive to_archive() const;
    static Checkpoint from_archive(const TensorArchive& archive);
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> losses; // one batch-mean loss per step
};

using CheckpointSink = std::function<void(const Checkpoint&)>;

/// Latent-space stage: z_hat = z_l + v(z_l, t*), loss masked_loss(z_h, z_hat, M_l, b).
/// Starts from `init` when given, otherwise from a fresh net seeded by cfg.seed.
TrainResult train_stage1(const TrainConfig& cfg, const LossConfig& loss_cfg, const std::vector<CachedClip>& cache,
                         const std::optional<Checkpoint>& init = std::nullopt, const CheckpointSink& sink = {});

/// Pixel-space stage through the decoder:
/// masked_loss(x_h, decode(z_hat), M_p, b) + lambda * percep_proxy(decode(z_hat), x_h).
/// `high` maps clip id to its high-quality clip.
TrainResult train_stage2(const TrainConfig& cfg, const LossConfig& loss_cfg, const std::vector<CachedClip>& cache,
                         const std::map<std::string, Video>& high, const Checkpoint& stage1,
                         const PatchBasis& basis, const CheckpointSink& sink = {});

/// Per-clip stage-2 objective and its gradient w.r.t. the net parameters.
struct PixelStepResult {
    double loss = 0.0;
    std::vector<double> param_grad;
};
PixelStepResult pixel_loss_and_grad(const VelocityNet& net, const CachedClip& clip, const Video& high, int b,
                                    const LossConfig& loss_cfg, const FlowConfig& flow, const PatchBasis& basis,
                                    bool want_grad = true);

/// Expected stage-2 objective over the Bernoulli switch,
/// p * L_masked + (1-p) * L_global + lambda * L_percep, averaged over clips.
double expected_pixel_objective(const VelocityNet& net, const std::vector<CachedClip>& cache,
                                const std::map<std::string, Video>& high, const LossConfig& loss_cfg,
                                const FlowConfig& flow, const PatchBasis& basis);

/// Same expectation for the latent objective.
double expected_latent_objective(const VelocityNet& net, const std::vector<CachedClip>& cache,
                                 const LossConfig& loss_cfg, const FlowConfig& flow);

} // namespace vividforge
