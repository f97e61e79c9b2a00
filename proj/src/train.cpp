#include "vividforge/train.hpp"

#include "vividforge/errors.hpp"
#include "vividforge/mask_align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <spdlog/spdlog.h>

namespace vividforge {

namespace {

std::vector<std::uint32_t> latent_dims(const LatentGrid& z) {
    return {static_cast<std::uint32_t>(z.channels), static_cast<std::uint32_t>(z.frames),
            static_cast<std::uint32_t>(z.height), static_cast<std::uint32_t>(z.width)};
}

LatentGrid latent_from_entry(const TensorEntry& e) {
    if (e.dims.size() != 4 || e.dims[0] != kLatentChannels)
        throw FormatError("cache entry " + e.name + " is not a 16-channel latent");
    LatentGrid z(static_cast<int>(e.dims[0]), static_cast<int>(e.dims[1]), static_cast<int>(e.dims[2]),
                 static_cast<int>(e.dims[3]));
    std::copy(e.data.begin(), e.data.end(), z.data.begin());
    return z;
}

// Gradient-structure loss of a single scale on a difference image. Adds
// `weight * dL/dimg` into `grad`.
double gradient_structure(const std::vector<double>& img, int F, int H, int W, double weight,
                          std::vector<double>& grad) {
    const std::size_t nx = static_cast<std::size_t>(F) * H * (W - 1) * 3;
    const std::size_t ny = static_cast<std::size_t>(F) * (H - 1) * W * 3;
    const double n = static_cast<double>(nx + ny);
    auto idx = [&](int f, int y, int x, int c) { return ((static_cast<std::size_t>(f) * H + y) * W + x) * 3 + c; };
    double sum = 0.0;
    for (int f = 0; f < F; ++f)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double v = img[idx(f, y, x, c)];
                    if (x + 1 < W) {
                        const double g = img[idx(f, y, x + 1, c)] - v;
                        sum += g * g;
                        const double d = weight * 2.0 * g / n;
                        grad[idx(f, y, x + 1, c)] += d;
                        grad[idx(f, y, x, c)] -= d;
                    }
                    if (y + 1 < H) {
                        const double g = img[idx(f, y + 1, x, c)] - v;
                        sum += g * g;
                        const double d = weight * 2.0 * g / n;
                        grad[idx(f, y + 1, x, c)] += d;
                        grad[idx(f, y, x, c)] -= d;
                    }
                }
    return sum / n;
}

void fisher_yates(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(v[i - 1], v[std::min(j, i - 1)]);
    }
}

// Draws batches by walking shuffled epochs of the roster.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        pos_ = n; // force a shuffle on first use
    }
    std::vector<std::size_t> next(int batch) {
        std::vector<std::size_t> out;
        for (int i = 0; i < batch; ++i) {
            if (pos_ == order_.size()) {
                fisher_yates(order_, rng_);
                pos_ = 0;
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    std::vector<std::size_t> order_;
    Rng rng_;
    std::size_t pos_ = 0;
};

// Stream ids for the per-purpose RNGs.
constexpr std::uint64_t kStreamData = 1;
constexpr std::uint64_t kStreamSwitch = 2;
constexpr std::uint64_t kStreamInit = 3;

void check_finite(double loss, long step) {
    if (!std::isfinite(loss))
        throw DivergenceError("loss became non-finite at step " + std::to_string(step));
}

Checkpoint start_from(const TrainConfig& cfg, const std::optional<Checkpoint>& init) {
    Checkpoint ck;
    if (init) {
        ck = *init;
    } else {
        ck.net = VelocityNet::initialized(mix_seed(cfg.seed, kStreamInit));
    }
    ck.stage = cfg.stage;
    return ck;
}

template <class StepFn>
TrainResult run_loop(const TrainConfig& cfg, const LossConfig& loss_cfg, std::size_t n_clips, Checkpoint ck,
                     bool resume_optimizer, const CheckpointSink& sink, StepFn&& per_clip) {
    const std::size_t n_params = VelocityNet::parameter_count();
    Adam opt(n_params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    long step0 = 0;
    if (resume_optimizer && ck.adam_m.size() == n_params) {
        opt.m() = ck.adam_m;
        opt.v() = ck.adam_v;
        opt.set_steps_taken(ck.step);
        step0 = ck.step;
    }

    BatchSampler sampler(n_clips, mix_seed(cfg.seed, kStreamData));
    Rng switch_rng(mix_seed(cfg.seed, kStreamSwitch));

    TrainResult result;
    result.losses.reserve(cfg.steps);
    std::vector<double> grad(n_params);
    for (int s = 0; s < cfg.steps; ++s) {
        const auto batch = sampler.next(cfg.batch);
        const int b = sample_b(switch_rng, loss_cfg.p);
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (std::size_t idx : batch) loss += per_clip(idx, b, ck.net, grad);
        const double inv = 1.0 / static_cast<double>(batch.size());
        loss *= inv;
        for (double& g : grad) g *= inv;
        const long step = step0 + s + 1;
        check_finite(loss, step);
        opt.step(ck.net.params(), grad);
        result.losses.push_back(loss);
        spdlog::debug("stage {} step {} b={} loss {:.6g}", cfg.stage, step, b, loss);

        ck.step = step;
        if (sink && cfg.checkpoint_every > 0 && (s + 1) % cfg.checkpoint_every == 0 && s + 1 < cfg.steps) {
            ck.adam_m = opt.m();
            ck.adam_v = opt.v();
            sink(ck);
        }
    }
    ck.adam_m = opt.m();
    ck.adam_v = opt.v();
    if (sink) sink(ck);
    result.checkpoint = std::move(ck);
    return result;
}

} // namespace

void LossConfig::validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p must lie in [0,1]");
    if (!(lambda_percep >= 0.0)) throw ValidationError("lambda must be non-negative");
}

void TrainConfig::validate() const {
    if (stage != 1 && stage != 2) throw ValidationError("stage must be 1 or 2");
    if (!(lr > 0.0)) throw ValidationError("lr must be positive");
    if (batch < 1) throw ValidationError("batch must be at least 1");
    if (steps < 0) throw ValidationError("steps must be non-negative");
    flow.validate();
}

LossValue masked_loss(std::span<const double> target, std::span<const double> pred, std::span<const double> mask,
                      int b) {
    if (target.size() != pred.size() || (b == 1 && mask.size() != pred.size()))
        throw ShapeError("masked_loss: operand sizes differ");
    LossValue out;
    out.grad.resize(pred.size());
    double sum = 0.0;
    if (b == 0) {
        const double n = static_cast<double>(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - target[i];
            sum += d * d;
            out.grad[i] = 2.0 * d / n;
        }
        out.value = sum / n;
        return out;
    }
    double area = 0.0;
    for (double m : mask) area += m;
    const double norm = std::max(area, 1.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = mask[i] * (pred[i] - target[i]);
        sum += d * d;
        out.grad[i] = 2.0 * mask[i] * d / norm;
    }
    out.value = sum / norm;
    return out;
}

int sample_b(Rng& rng, double p) { return uniform01(rng) < p ? 1 : 0; }

LossValue percep_proxy(const Video& pred, const Video& target) {
    if (!pred.same_shape(target)) throw ShapeError("percep_proxy: clip shapes differ");
    const int F = pred.frames, H = pred.height, W = pred.width;
    if (H < 4 || W < 4) throw ValidationError("percep_proxy: frames must be at least 4x4");

    std::vector<double> diff(pred.data.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = pred.data[i] - target.data[i];

    LossValue out;
    out.grad.assign(diff.size(), 0.0);
    const double full = gradient_structure(diff, F, H, W, 0.5, out.grad);

    const int h2 = H / 2, w2 = W / 2;
    std::vector<double> pooled(static_cast<std::size_t>(F) * h2 * w2 * 3, 0.0);
    auto pidx = [&](int f, int y, int x, int c) { return ((static_cast<std::size_t>(f) * h2 + y) * w2 + x) * 3 + c; };
    for (int f = 0; f < F; ++f)
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x)
                for (int c = 0; c < 3; ++c)
                    pooled[pidx(f, y, x, c)] =
                        0.25 * (diff[pred.index(f, 2 * y, 2 * x, c)] + diff[pred.index(f, 2 * y, 2 * x + 1, c)] +
                                diff[pred.index(f, 2 * y + 1, 2 * x, c)] + diff[pred.index(f, 2 * y + 1, 2 * x + 1, c)]);
    std::vector<double> pooled_grad(pooled.size(), 0.0);
    const double half = gradient_structure(pooled, F, h2, w2, 0.5, pooled_grad);
    for (int f = 0; f < F; ++f)
        for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double g = 0.25 * pooled_grad[pidx(f, y, x, c)];
                    out.grad[pred.index(f, 2 * y, 2 * x, c)] += g;
                    out.grad[pred.index(f, 2 * y, 2 * x + 1, c)] += g;
                    out.grad[pred.index(f, 2 * y + 1, 2 * x, c)] += g;
                    out.grad[pred.index(f, 2 * y + 1, 2 * x + 1, c)] += g;
                }
    out.value = 0.5 * (full + half);
    return out;
}

std::vector<double> expand_mask(const MaskStack& masks) {
    std::vector<double> out(masks.data.size() * 3);
    for (std::size_t i = 0; i < masks.data.size(); ++i)
        out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = masks.data[i];
    return out;
}

TensorArchive cache_latents(const std::vector<ClipPair>& clips, const PatchBasis& basis) {
    TensorArchive a;
    std::set<std::string> seen;
    for (const auto& c : clips) {
        if (c.id.empty() || !seen.insert(c.id).second)
            throw ValidationError("cache_latents: clip ids must be unique and non-empty");
        if (!c.low.same_shape(c.high))
            throw ValidationError("cache_latents: clip " + c.id + " has no matching low/high pair");
        if (c.masks.frames != c.high.frames || c.masks.height != c.high.height || c.masks.width != c.high.width)
            throw ValidationError("cache_latents: masks of clip " + c.id + " do not match the clip");
        const LatentGrid zl = encode(c.low, basis);
        const LatentGrid zh = encode(c.high, basis);
        const LatentMask ml = latent_mask(c.masks);
        a.add("zl/" + c.id, latent_dims(zl), zl.data);
        a.add("zh/" + c.id, latent_dims(zh), zh.data);
        a.add("Ml/" + c.id, latent_dims(ml), ml.data);
        a.add("Mp/" + c.id,
              {static_cast<std::uint32_t>(c.masks.frames), static_cast<std::uint32_t>(c.masks.height),
               static_cast<std::uint32_t>(c.masks.width)},
              std::vector<float>(c.masks.data.begin(), c.masks.data.end()));
    }
    return a;
}

std::vector<CachedClip> load_cache(const TensorArchive& archive, const std::vector<std::string>& roster) {
    std::vector<std::string> ids;
    if (roster.empty()) {
        for (const auto& name : archive.names_with_prefix("zl/")) ids.push_back(name.substr(3));
    } else {
        ids = roster;
    }
    std::sort(ids.begin(), ids.end());
    std::vector<CachedClip> out;
    for (const auto& id : ids) {
        for (const char* key : {"zl/", "zh/", "Ml/", "Mp/"})
            if (!archive.contains(key + id)) throw ValidationError("cache is missing " + std::string(key) + id);
        CachedClip c;
        c.id = id;
        c.z_low = latent_from_entry(archive.get("zl/" + id));
        c.z_high = latent_from_entry(archive.get("zh/" + id));
        c.latent_mask = latent_from_entry(archive.get("Ml/" + id));
        require_same_shape(c.z_low, c.z_high, "cache");
        require_same_shape(c.z_low, c.latent_mask, "cache");
        const auto& mp = archive.get("Mp/" + id);
        if (mp.dims.size() != 3) throw FormatError("cache entry Mp/" + id + " must be 3-D");
        c.pixel_mask = MaskStack(static_cast<int>(mp.dims[0]), static_cast<int>(mp.dims[1]),
                                 static_cast<int>(mp.dims[2]));
        for (std::size_t i = 0; i < mp.data.size(); ++i) c.pixel_mask.data[i] = mp.data[i] > 0.5f ? 1 : 0;
        out.push_back(std::move(c));
    }
    return out;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("Adam: size mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = static_cast<float>(beta1_ * m_[i] + (1.0 - beta1_) * grad[i]);
        v_[i] = static_cast<float>(beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i]);
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        params[i] = static_cast<float>(params[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
}

TensorArchive Checkpoint::to_archive() const {
    TensorArchive a;
    net.save_to(a, "net/");
    if (adam_m.size() == VelocityNet::parameter_count()) {
        for (const auto& t : VelocityNet::layout()) {
            a.add("opt/m/" + t.name, t.dims,
                  std::vector<double>(adam_m.begin() + t.offset, adam_m.begin() + t.offset + t.size));
            a.add("opt/v/" + t.name, t.dims,
                  std::vector<double>(adam_v.begin() + t.offset, adam_v.begin() + t.offset + t.size));
        }
    }
    a.add("meta/step", {1}, std::vector<double>{static_cast<double>(step)});
    a.add("meta/stage", {1}, std::vector<double>{static_cast<double>(stage)});
    return a;
}

Checkpoint Checkpoint::from_archive(const TensorArchive& a) {
    Checkpoint ck;
    ck.net = VelocityNet::load_from(a, "net/");
    const auto& layout = VelocityNet::layout();
    if (a.contains("opt/m/" + layout.front().name)) {
        ck.adam_m.assign(VelocityNet::parameter_count(), 0.0);
        ck.adam_v.assign(VelocityNet::parameter_count(), 0.0);
        for (const auto& t : layout) {
            const auto& m = a.get("opt/m/" + t.name);
            const auto& v = a.get("opt/v/" + t.name);
            if (m.data.size() != t.size || v.data.size() != t.size)
                throw FormatError("optimizer state for " + t.name + " has wrong size");
            std::copy(m.data.begin(), m.data.end(), ck.adam_m.begin() + t.offset);
            std::copy(v.data.begin(), v.data.end(), ck.adam_v.begin() + t.offset);
        }
    }
    ck.step = a.contains("meta/step") ? static_cast<long>(a.get("meta/step").data.at(0)) : 0;
    ck.stage = a.contains("meta/stage") ? static_cast<int>(a.get("meta/stage").data.at(0)) : 1;
    return ck;
}

TrainResult train_stage1(const TrainConfig& cfg, const LossConfig& loss_cfg, const std::vector<CachedClip>& cache,
                         const std::optional<Checkpoint>& init, const CheckpointSink& sink) {
    cfg.validate();
    loss_cfg.validate();
    if (cfg.stage != 1) throw ValidationError("train_stage1 requires stage = 1");
    if (cache.empty()) throw ValidationError("training cache is empty");

    const bool resume = init && init->stage == 1;
    return run_loop(cfg, loss_cfg, cache.size(), start_from(cfg, init), resume, sink,
                    [&](std::size_t idx, int b, const VelocityNet& net, std::vector<double>& grad) {
                        const auto& c = cache[idx];
                        const LatentGrid z_hat = one_step_restore(net, c.z_low, cfg.flow);
                        const auto loss = masked_loss(c.z_high.data, z_hat.data, c.latent_mask.data, b);
                        LatentGrid upstream = z_hat;
                        upstream.data = loss.grad;
                        const auto g = backward(net, c.z_low, cfg.flow.t_star_discrete, upstream);
                        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g.params[i];
                        return loss.value;
                    });
}

PixelStepResult pixel_loss_and_grad(const VelocityNet& net, const CachedClip& clip, const Video& high, int b,
                                    const LossConfig& loss_cfg, const FlowConfig& flow, const PatchBasis& basis,
                                    bool want_grad) {
    const LatentGrid z_hat = one_step_restore(net, clip.z_low, flow);
    const Video raw = decode_unclamped(z_hat, basis);
    if (!raw.same_shape(high)) throw ShapeError("stage 2: decoded clip does not match the high-quality clip");
    Video pred = raw;
    for (double& v : pred.data) v = std::clamp(v, 0.0, 1.0);

    const auto mask = expand_mask(clip.pixel_mask);
    auto rec = masked_loss(high.data, pred.data, mask, b);
    PixelStepResult out;
    out.loss = rec.value;
    LossValue perc;
    if (loss_cfg.lambda_percep > 0.0) {
        perc = percep_proxy(pred, high);
        out.loss += loss_cfg.lambda_percep * perc.value;
    }
    if (!want_grad) return out;

    Video upstream = pred;
    upstream.data = std::move(rec.grad);
    if (loss_cfg.lambda_percep > 0.0)
        for (std::size_t i = 0; i < upstream.data.size(); ++i)
            upstream.data[i] += loss_cfg.lambda_percep * perc.grad[i];
    const LatentGrid dz = decode_grad(upstream, raw, basis);
    out.param_grad = backward(net, clip.z_low, flow.t_star_discrete, dz).params;
    return out;
}

TrainResult train_stage2(const TrainConfig& cfg, const LossConfig& loss_cfg, const std::vector<CachedClip>& cache,
                         const std::map<std::string, Video>& high, const Checkpoint& stage1,
                         const PatchBasis& basis, const CheckpointSink& sink) {
    cfg.validate();
    loss_cfg.validate();
    if (cfg.stage != 2) throw ValidationError("train_stage2 requires stage = 2");
    if (cache.empty()) throw ValidationError("training cache is empty");
    for (const auto& c : cache)
        if (!high.contains(c.id)) throw ValidationError("stage 2: no high-quality clip for " + c.id);

    // A stage-2 checkpoint resumes its optimizer; a stage-1 one starts fresh moments.
    const bool resume = stage1.stage == 2;
    return run_loop(cfg, loss_cfg, cache.size(), start_from(cfg, stage1), resume, sink,
                    [&](std::size_t idx, int b, const VelocityNet& net, std::vector<double>& grad) {
                        const auto& c = cache[idx];
                        const auto r = pixel_loss_and_grad(net, c, high.at(c.id), b, loss_cfg, cfg.flow, basis);
                        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.param_grad[i];
                        return r.loss;
                    });
}

double expected_pixel_objective(const VelocityNet& net, const std::vector<CachedClip>& cache,
                                const std::map<std::string, Video>& high, const LossConfig& loss_cfg,
                                const FlowConfig& flow, const PatchBasis& basis) {
    double total = 0.0;
    for (const auto& c : cache) {
        const Video& hq = high.at(c.id);
        const Video pred = decode(one_step_restore(net, c.z_low, flow), basis);
        const auto mask = expand_mask(c.pixel_mask);
        const double masked = masked_loss(hq.data, pred.data, mask, 1).value;
        const double global = masked_loss(hq.data, pred.data, mask, 0).value;
        const double percep = loss_cfg.lambda_percep > 0.0 ? percep_proxy(pred, hq).value : 0.0;
        total += loss_cfg.p * masked + (1.0 - loss_cfg.p) * global + loss_cfg.lambda_percep * percep;
    }
    return total / static_cast<double>(cache.size());
}

double expected_latent_objective(const VelocityNet& net, const std::vector<CachedClip>& cache,
                                 const LossConfig& loss_cfg, const FlowConfig& flow) {
    double total = 0.0;
    for (const auto& c : cache) {
        const LatentGrid z_hat = one_step_restore(net, c.z_low, flow);
        const double masked = masked_loss(c.z_high.data, z_hat.data, c.latent_mask.data, 1).value;
        const double global = masked_loss(c.z_high.data, z_hat.data, c.latent_mask.data, 0).value;
        total += loss_cfg.p * masked + (1.0 - loss_cfg.p) * global;
    }
    return total / static_cast<double>(cache.size());
}

} // namespace vividforge
