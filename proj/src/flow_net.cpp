#include "vividforge/flow_net.hpp"

#include "vividforge/archive.hpp"
#include "vividforge/errors.hpp"
#include "vividforge/random.hpp"

#include <algorithm>
#include <cmath>

namespace vividforge {

namespace {

constexpr int C = kLatentChannels;
constexpr int K = kHiddenChannels;

std::vector<ParamTensor> build_layout() {
    std::vector<ParamTensor> l;
    std::size_t off = 0;
    auto add = [&](std::string name, std::vector<std::uint32_t> dims) {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        l.push_back({std::move(name), std::move(dims), off, n});
        off += n;
    };
    add("emb.weight", {C, kEmbedDim});
    add("emb.bias", {C});
    for (int b = 0; b < kNumBlocks; ++b) {
        const std::string p = "block" + std::to_string(b + 1) + ".";
        add(p + "dw_spatial.weight", {C, 3, 3});
        add(p + "dw_spatial.bias", {C});
        add(p + "dw_temporal.weight", {C, 3});
        add(p + "dw_temporal.bias", {C});
        add(p + "pw1.weight", {K, C});
        add(p + "pw1.bias", {K});
        add(p + "pw2.weight", {C, K});
        add(p + "pw2.bias", {C});
    }
    add("head.weight", {C, C});
    add("head.bias", {C});
    return l;
}

// Offsets into the flat vector, resolved once.
struct BlockOffsets {
    std::size_t ws, bs, wt, bt, w1, b1, w2, b2;
};
struct Offsets {
    std::size_t wemb, bemb, whead, bhead;
    BlockOffsets block[kNumBlocks];
};

const Offsets& offsets() {
    static const Offsets o = [] {
        const auto& l = VelocityNet::layout();
        auto at = [&](const std::string& n) {
            for (const auto& t : l)
                if (t.name == n) return t.offset;
            throw ValidationError("unknown tensor " + n);
        };
        Offsets r{};
        r.wemb = at("emb.weight");
        r.bemb = at("emb.bias");
        r.whead = at("head.weight");
        r.bhead = at("head.bias");
        for (int b = 0; b < kNumBlocks; ++b) {
            const std::string p = "block" + std::to_string(b + 1) + ".";
            r.block[b] = {at(p + "dw_spatial.weight"), at(p + "dw_spatial.bias"),
                          at(p + "dw_temporal.weight"), at(p + "dw_temporal.bias"),
                          at(p + "pw1.weight"), at(p + "pw1.bias"),
                          at(p + "pw2.weight"), at(p + "pw2.bias")};
        }
        return r;
    }();
    return o;
}

int fan_in(const ParamTensor& t) {
    // weights: product of all dims but the first; biases share their weight's fan-in
    static const std::vector<std::pair<std::string, int>> table = {
        {"emb.", kEmbedDim}, {"dw_spatial.", 9}, {"dw_temporal.", 3}, {"pw1.", C}, {"pw2.", K}, {"head.", C}};
    for (const auto& [key, fan] : table)
        if (t.name.find(key) != std::string::npos) return fan;
    return 1;
}

// Activations kept for the backward pass.
struct BlockCache {
    std::vector<double> h_in, a, s, g;
};
struct ForwardCache {
    std::array<double, kEmbedDim> e{};
    std::vector<BlockCache> blocks;
    std::vector<double> h_out;
};

struct Geometry {
    int T, H, W;
    std::size_t N;
};

void check_input(const LatentGrid& z) {
    if (z.channels != C || z.frames < 1 || z.height < 1 || z.width < 1 ||
        z.data.size() != static_cast<std::size_t>(C) * z.channel_stride())
        throw ShapeError("velocity net input must be 16 x T' x H' x W'");
}

void spatial_conv(const double* in, double* out, const double* w, double bias, const Geometry& g) {
    for (int t = 0; t < g.T; ++t)
        for (int y = 0; y < g.H; ++y)
            for (int x = 0; x < g.W; ++x) {
                double s = bias;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= g.H) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= g.W) continue;
                        s += w[(dy + 1) * 3 + dx + 1] * in[(static_cast<std::size_t>(t) * g.H + yy) * g.W + xx];
                    }
                }
                out[(static_cast<std::size_t>(t) * g.H + y) * g.W + x] = s;
            }
}

void temporal_conv(const double* in, double* out, const double* w, double bias, const Geometry& g) {
    const std::size_t plane = static_cast<std::size_t>(g.H) * g.W;
    for (int t = 0; t < g.T; ++t)
        for (std::size_t q = 0; q < plane; ++q) {
            double s = bias;
            for (int dt = -1; dt <= 1; ++dt) {
                const int tt = t + dt;
                if (tt < 0 || tt >= g.T) continue;
                s += w[dt + 1] * in[tt * plane + q];
            }
            out[t * plane + q] = s;
        }
}

// out[o][p] = b[o] + sum_i w[o][i] in[i][p]
void pointwise(const double* in, double* out, const double* w, const double* b, int n_in, int n_out,
               std::size_t N) {
    for (int o = 0; o < n_out; ++o) {
        double* dst = out + o * N;
        std::fill(dst, dst + N, b[o]);
        for (int i = 0; i < n_in; ++i) {
            const double wi = w[o * n_in + i];
            const double* src = in + i * N;
            for (std::size_t p = 0; p < N; ++p) dst[p] += wi * src[p];
        }
    }
}

LatentGrid run_forward(const VelocityNet& net, const LatentGrid& z, int t_discrete, ForwardCache* cache) {
    check_input(z);
    const auto& o = offsets();
    const auto P = net.params();
    const Geometry g{z.frames, z.height, z.width, z.channel_stride()};
    const std::size_t N = g.N;

    const auto e = timestep_embedding(t_discrete);
    std::vector<double> h(z.data);
    for (int c = 0; c < C; ++c) {
        double emb = P[o.bemb + c];
        for (int k = 0; k < kEmbedDim; ++k) emb += P[o.wemb + c * kEmbedDim + k] * e[k];
        for (std::size_t p = 0; p < N; ++p) h[c * N + p] += emb;
    }

    std::vector<double> a(C * N), s(C * N), u(K * N), r(C * N);
    if (cache) {
        cache->e = e;
        cache->blocks.resize(kNumBlocks);
    }
    for (int b = 0; b < kNumBlocks; ++b) {
        const auto& bo = o.block[b];
        for (int c = 0; c < C; ++c) {
            spatial_conv(&h[c * N], &a[c * N], &P[bo.ws + c * 9], P[bo.bs + c], g);
            temporal_conv(&a[c * N], &s[c * N], &P[bo.wt + c * 3], P[bo.bt + c], g);
        }
        pointwise(s.data(), u.data(), &P[bo.w1], &P[bo.b1], C, K, N);
        for (double& v : u) v = std::tanh(v);
        pointwise(u.data(), r.data(), &P[bo.w2], &P[bo.b2], K, C, N);
        if (cache) cache->blocks[b] = {h, a, s, u};
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += r[i];
    }

    LatentGrid out(C, z.frames, z.height, z.width);
    pointwise(h.data(), out.data.data(), &P[o.whead], &P[o.bhead], C, C, N);
    if (cache) cache->h_out = std::move(h);
    return out;
}

} // namespace

void FlowConfig::validate() const {
    if (num_discrete_steps <= 0 || t_star_discrete <= 0 || t_star_discrete >= num_discrete_steps)
        throw ValidationError("t* must lie strictly inside the discrete timestep range");
}

LatentGrid trajectory_point(const LatentGrid& z_low, const LatentGrid& z_high, double t) {
    require_same_shape(z_low, z_high, "trajectory_point");
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("trajectory_point: t outside [0,1]");
    LatentGrid out = z_low;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (1.0 - t) * z_low.data[i] + t * z_high.data[i];
    return out;
}

LatentGrid velocity_target(const LatentGrid& z_low, const LatentGrid& z_high) {
    require_same_shape(z_low, z_high, "velocity_target");
    LatentGrid out = z_high;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= z_low.data[i];
    return out;
}

std::array<double, kEmbedDim> timestep_embedding(int t_discrete) {
    if (t_discrete < 0 || t_discrete >= 1000) throw ValidationError("timestep must be in [0, 1000)");
    std::array<double, kEmbedDim> e{};
    for (int k = 0; k < kEmbedDim / 2; ++k) {
        const double w = std::pow(10000.0, -static_cast<double>(k) / 8.0);
        e[2 * k] = std::sin(t_discrete * w);
        e[2 * k + 1] = std::cos(t_discrete * w);
    }
    return e;
}

const std::vector<ParamTensor>& VelocityNet::layout() {
    static const std::vector<ParamTensor> l = build_layout();
    return l;
}

std::size_t VelocityNet::parameter_count() {
    const auto& l = layout();
    return l.back().offset + l.back().size;
}

VelocityNet VelocityNet::zeros() {
    VelocityNet n;
    n.params_.assign(parameter_count(), 0.0);
    return n;
}

VelocityNet VelocityNet::initialized(std::uint64_t seed) {
    VelocityNet n = zeros();
    Rng rng(mix_seed(seed, 0x1417));
    for (const auto& t : layout()) {
        if (t.name.starts_with("head.")) continue;
        const double bound = std::sqrt(1.0 / fan_in(t));
        for (std::size_t i = 0; i < t.size; ++i)
            n.params_[t.offset + i] = static_cast<float>(uniform(rng, -bound, bound));
    }
    return n;
}

std::span<double> VelocityNet::tensor(const std::string& name) {
    for (const auto& t : layout())
        if (t.name == name) return {params_.data() + t.offset, t.size};
    throw ValidationError("unknown parameter tensor " + name);
}

std::span<const double> VelocityNet::tensor(const std::string& name) const {
    return const_cast<VelocityNet*>(this)->tensor(name);
}

void VelocityNet::save_to(TensorArchive& archive, const std::string& prefix) const {
    for (const auto& t : layout())
        archive.add(prefix + t.name, t.dims,
                    std::vector<double>(params_.begin() + t.offset, params_.begin() + t.offset + t.size));
}

VelocityNet VelocityNet::load_from(const TensorArchive& archive, const std::string& prefix) {
    VelocityNet n = zeros();
    for (const auto& t : layout()) {
        const auto& e = archive.get(prefix + t.name);
        if (e.dims != t.dims) throw FormatError("checkpoint tensor " + t.name + " has wrong shape");
        std::copy(e.data.begin(), e.data.end(), n.params_.begin() + t.offset);
    }
    return n;
}

FlowCounters& flow_counters() {
    static FlowCounters counters;
    return counters;
}

LatentGrid forward(const VelocityNet& net, const LatentGrid& z, int t_discrete) {
    flow_counters().forward_calls.fetch_add(1, std::memory_order_relaxed);
    return run_forward(net, z, t_discrete, nullptr);
}

NetGradients backward(const VelocityNet& net, const LatentGrid& z, int t_discrete, const LatentGrid& upstream) {
    check_input(z);
    if (!upstream.same_shape(z)) throw ShapeError("backward: upstream gradient shape mismatch");
    ForwardCache cache;
    run_forward(net, z, t_discrete, &cache);

    const auto& o = offsets();
    const auto P = net.params();
    const Geometry g{z.frames, z.height, z.width, z.channel_stride()};
    const std::size_t N = g.N;
    const std::size_t plane = static_cast<std::size_t>(g.H) * g.W;

    NetGradients grads;
    grads.params.assign(P.size(), 0.0);
    auto& dP = grads.params;
    const auto& G = upstream.data;

    // head
    std::vector<double> dh(C * N, 0.0);
    for (int c = 0; c < C; ++c) {
        const double* gc = &G[c * N];
        double bsum = 0.0;
        for (std::size_t p = 0; p < N; ++p) bsum += gc[p];
        dP[o.bhead + c] += bsum;
        for (int k = 0; k < C; ++k) {
            const double* hk = &cache.h_out[k * N];
            const double w = P[o.whead + c * C + k];
            double* dhk = &dh[k * N];
            double acc = 0.0;
            for (std::size_t p = 0; p < N; ++p) {
                acc += gc[p] * hk[p];
                dhk[p] += w * gc[p];
            }
            dP[o.whead + c * C + k] += acc;
        }
    }

    std::vector<double> du(K * N), ds(C * N), da(C * N);
    for (int b = kNumBlocks - 1; b >= 0; --b) {
        const auto& bo = o.block[b];
        const auto& bc = cache.blocks[b];
        // residual: dh flows to h_in unchanged, plus the branch contribution below.
        // pw2
        std::fill(du.begin(), du.end(), 0.0);
        for (int c = 0; c < C; ++c) {
            const double* dr = &dh[c * N];
            double bsum = 0.0;
            for (std::size_t p = 0; p < N; ++p) bsum += dr[p];
            dP[bo.b2 + c] += bsum;
            for (int k = 0; k < K; ++k) {
                const double* gk = &bc.g[k * N];
                const double w = P[bo.w2 + c * K + k];
                double* dgk = &du[k * N];
                double acc = 0.0;
                for (std::size_t p = 0; p < N; ++p) {
                    acc += dr[p] * gk[p];
                    dgk[p] += w * dr[p];
                }
                dP[bo.w2 + c * K + k] += acc;
            }
        }
        // tanh
        for (std::size_t i = 0; i < du.size(); ++i) du[i] *= 1.0 - bc.g[i] * bc.g[i];
        // pw1
        std::fill(ds.begin(), ds.end(), 0.0);
        for (int k = 0; k < K; ++k) {
            const double* duk = &du[k * N];
            double bsum = 0.0;
            for (std::size_t p = 0; p < N; ++p) bsum += duk[p];
            dP[bo.b1 + k] += bsum;
            for (int c = 0; c < C; ++c) {
                const double* sc = &bc.s[c * N];
                const double w = P[bo.w1 + k * C + c];
                double* dsc = &ds[c * N];
                double acc = 0.0;
                for (std::size_t p = 0; p < N; ++p) {
                    acc += duk[p] * sc[p];
                    dsc[p] += w * duk[p];
                }
                dP[bo.w1 + k * C + c] += acc;
            }
        }
        for (int c = 0; c < C; ++c) {
            // temporal depthwise
            const double* dsc = &ds[c * N];
            const double* ac = &bc.a[c * N];
            double* dac = &da[c * N];
            std::fill(dac, dac + N, 0.0);
            double bsum = 0.0;
            for (std::size_t p = 0; p < N; ++p) bsum += dsc[p];
            dP[bo.bt + c] += bsum;
            for (int dt = -1; dt <= 1; ++dt) {
                const double w = P[bo.wt + c * 3 + dt + 1];
                double acc = 0.0;
                for (int t = 0; t < g.T; ++t) {
                    const int tt = t + dt;
                    if (tt < 0 || tt >= g.T) continue;
                    for (std::size_t q = 0; q < plane; ++q) {
                        acc += dsc[t * plane + q] * ac[tt * plane + q];
                        dac[tt * plane + q] += w * dsc[t * plane + q];
                    }
                }
                dP[bo.wt + c * 3 + dt + 1] += acc;
            }
            // spatial depthwise
            const double* hc = &bc.h_in[c * N];
            double* dhc = &dh[c * N];
            bsum = 0.0;
            for (std::size_t p = 0; p < N; ++p) bsum += dac[p];
            dP[bo.bs + c] += bsum;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double w = P[bo.ws + c * 9 + (dy + 1) * 3 + dx + 1];
                    double acc = 0.0;
                    for (int t = 0; t < g.T; ++t)
                        for (int y = 0; y < g.H; ++y) {
                            const int yy = y + dy;
                            if (yy < 0 || yy >= g.H) continue;
                            for (int x = 0; x < g.W; ++x) {
                                const int xx = x + dx;
                                if (xx < 0 || xx >= g.W) continue;
                                const std::size_t out_i = (static_cast<std::size_t>(t) * g.H + y) * g.W + x;
                                const std::size_t in_i = (static_cast<std::size_t>(t) * g.H + yy) * g.W + xx;
                                acc += dac[out_i] * hc[in_i];
                                dhc[in_i] += w * dac[out_i];
                            }
                        }
                    dP[bo.ws + c * 9 + (dy + 1) * 3 + dx + 1] += acc;
                }
        }
    }

    // embedding
    for (int c = 0; c < C; ++c) {
        double demb = 0.0;
        for (std::size_t p = 0; p < N; ++p) demb += dh[c * N + p];
        dP[o.bemb + c] += demb;
        for (int k = 0; k < kEmbedDim; ++k) dP[o.wemb + c * kEmbedDim + k] += demb * cache.e[k];
    }

    grads.input = LatentGrid(C, z.frames, z.height, z.width);
    grads.input.data = std::move(dh);
    return grads;
}

LatentGrid one_step_restore(const VelocityNet& net, const LatentGrid& z_low, const FlowConfig& cfg) {
    cfg.validate();
    LatentGrid out = forward(net, z_low, cfg.t_star_discrete);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += z_low.data[i];
    return out;
}

} // namespace vividforge
