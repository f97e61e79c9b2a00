#pragma once

#include "vividforge/latent.hpp"

#include <array>
#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vividforge {

class TensorArchive;

struct FlowConfig {
    int t_star_discrete = 400;
    int num_discrete_steps = 1000;

    double t_star() const { return static_cast<double>(t_star_discrete) / num_discrete_steps; }
    void validate() const;
};

/// z_t = (1 - t) z_l + t z_h.
LatentGrid trajectory_point(const LatentGrid& z_low, const LatentGrid& z_high, double t);

/// Straight-path velocity z_h - z_l.
LatentGrid velocity_target(const LatentGrid& z_low, const LatentGrid& z_high);

inline constexpr int kEmbedDim = 16;
inline constexpr int kHiddenChannels = 32;
inline constexpr int kNumBlocks = 2;

/// Sinusoidal embedding on the discrete 0..999 scale:
/// e[2k] = sin(t w_k), e[2k+1] = cos(t w_k), w_k = 10000^(-k/8).
std::array<double, kEmbedDim> timestep_embedding(int t_discrete);

/// Named slice of the flat parameter vector.
struct ParamTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Tiny velocity predictor. Parameters live in one flat vector so the
/// optimizer and gradient checks can treat them uniformly.
///
///   h = z + (W_emb e(t) + b_emb)                     broadcast over T', H', W'
///   per block: depthwise 3x3 spatial -> depthwise width-3 temporal
///              -> pointwise 16->32 -> tanh -> pointwise 32->16, h += result
///   out = W_head h + b_head
///
/// Convolutions zero-pad. Text conditioning is the empty prompt and has no
/// pathway. The head is zero at initialization, so an untrained net predicts
/// zero velocity.
class VelocityNet {
public:
    /// Head zero, everything else uniform in +-sqrt(1/fan_in). Values are
    /// rounded to f32 so checkpoints reproduce them exactly.
    static VelocityNet initialized(std::uint64_t seed);
    static VelocityNet zeros();

    static const std::vector<ParamTensor>& layout();
    static std::size_t parameter_count();

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }

    std::span<double> tensor(const std::string& name);
    std::span<const double> tensor(const std::string& name) const;

    /// Writes "<prefix><tensor name>" entries.
    void save_to(TensorArchive& archive, const std::string& prefix = "net/") const;
    static VelocityNet load_from(const TensorArchive& archive, const std::string& prefix = "net/");

    bool operator==(const VelocityNet&) const = default;

private:
    std::vector<double> params_;
};

struct FlowCounters {
    std::atomic<std::uint64_t> forward_calls{0};
};
FlowCounters& flow_counters();

LatentGrid forward(const VelocityNet& net, const LatentGrid& z, int t_discrete);

struct NetGradients {
    std::vector<double> params; // same layout as VelocityNet::params()
    LatentGrid input;
};

/// Exact gradients of <upstream, forward(net, z, t)>.
NetGradients backward(const VelocityNet& net, const LatentGrid& z, int t_discrete, const LatentGrid& upstream);

/// z_hat = z_l + forward(net, z_l, t*).
LatentGrid one_step_restore(const VelocityNet& net, const LatentGrid& z_low, const FlowConfig& cfg = {});

} // namespace vividforge
