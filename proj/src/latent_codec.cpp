#include "vividforge/latent_codec.hpp"

#include "vividforge/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace vividforge {

namespace {

// Orthonormal DCT-II basis function of length n at frequency k, sample i.
double dct_atom(int n, int k, int i) {
    const double a = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    return a * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
}

// Lowest `rows` separable DCT vectors over a box with the given extents,
// ordered by (sum of frequency indices, then lexicographic).
template <std::size_t D>
std::vector<double> truncated_dct(const std::array<int, D>& extent, int rows) {
    std::vector<std::array<int, D>> freqs;
    std::array<int, D> f{};
    for (;;) {
        freqs.push_back(f);
        std::size_t d = D;
        while (d > 0) {
            --d;
            if (++f[d] < extent[d]) break;
            f[d] = 0;
            if (d == 0) goto done;
        }
    }
done:
    std::stable_sort(freqs.begin(), freqs.end(), [](const auto& a, const auto& b) {
        int sa = 0, sb = 0;
        for (std::size_t i = 0; i < D; ++i) sa += a[i], sb += b[i];
        if (sa != sb) return sa < sb;
        return a < b;
    });

    std::size_t len = 1;
    for (int e : extent) len *= static_cast<std::size_t>(e);
    std::vector<double> basis(static_cast<std::size_t>(rows) * len);
    for (int r = 0; r < rows; ++r) {
        std::array<int, D> pos{};
        for (std::size_t idx = 0; idx < len; ++idx) {
            double v = 1.0;
            for (std::size_t d = 0; d < D; ++d) v *= dct_atom(extent[d], freqs[r][d], pos[d]);
            basis[r * len + idx] = v;
            for (std::size_t d = D; d-- > 0;) {
                if (++pos[d] < extent[d]) break;
                pos[d] = 0;
            }
        }
    }
    return basis;
}

void check_latent(const LatentGrid& z) {
    if (z.channels != kLatentChannels || z.frames < 1 || z.height < 1 || z.width < 1 ||
        z.data.size() != static_cast<std::size_t>(z.channels) * z.channel_stride())
        throw ShapeError("latent grid must be 16 x T' x H' x W'");
}

// Gathers the patch (or tube) feeding latent cell (t, i, j) into `buf`.
void gather(const Video& v, int t, int i, int j, std::vector<double>& buf) {
    const int f0 = t == 0 ? 0 : 4 * (t - 1) + 1;
    const int nf = t == 0 ? 1 : 4;
    std::size_t k = 0;
    for (int df = 0; df < nf; ++df)
        for (int y = 0; y < 8; ++y) {
            const double* row = &v.data[v.index(f0 + df, 8 * i + y, 8 * j, 0)];
            for (int x = 0; x < 24; ++x) buf[k++] = row[x];
        }
}

LatentGrid project(const Video& video, const PatchBasis& basis) {
    check_clip_geometry(video.frames, video.height, video.width);
    LatentGrid z = latent_for(video.frames, video.height, video.width);
    std::vector<double> buf(PatchBasis::kGroupDim);
    for (int t = 0; t < z.frames; ++t) {
        const auto& b = t == 0 ? basis.first : basis.group;
        const std::size_t len = t == 0 ? PatchBasis::kFirstDim : PatchBasis::kGroupDim;
        for (int i = 0; i < z.height; ++i)
            for (int j = 0; j < z.width; ++j) {
                gather(video, t, i, j, buf);
                for (int c = 0; c < kLatentChannels; ++c) {
                    const double* row = &b[c * len];
                    double s = 0.0;
                    for (std::size_t k = 0; k < len; ++k) s += row[k] * buf[k];
                    z.at(c, t, i, j) = s;
                }
            }
    }
    return z;
}

} // namespace

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what) {
    if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": latent shapes differ");
}

PatchBasis make_basis() {
    PatchBasis b;
    b.first = truncated_dct<3>({8, 8, 3}, kLatentChannels);
    b.group = truncated_dct<4>({4, 8, 8, 3}, kLatentChannels);
    return b;
}

CodecCounters& codec_counters() {
    static CodecCounters counters;
    return counters;
}

LatentGrid latent_for(int frames, int height, int width) {
    check_clip_geometry(frames, height, width);
    return LatentGrid(kLatentChannels, 1 + (frames - 1) / 4, height / 8, width / 8);
}

LatentGrid encode(const Video& video, const PatchBasis& basis) {
    codec_counters().encode_calls.fetch_add(1, std::memory_order_relaxed);
    return project(video, basis);
}

Video decode_unclamped(const LatentGrid& z, const PatchBasis& basis) {
    codec_counters().decode_calls.fetch_add(1, std::memory_order_relaxed);
    check_latent(z);
    Video v(1 + 4 * (z.frames - 1), 8 * z.height, 8 * z.width);
    std::vector<double> buf(PatchBasis::kGroupDim);
    for (int t = 0; t < z.frames; ++t) {
        const auto& b = t == 0 ? basis.first : basis.group;
        const std::size_t len = t == 0 ? PatchBasis::kFirstDim : PatchBasis::kGroupDim;
        const int f0 = t == 0 ? 0 : 4 * (t - 1) + 1;
        const int nf = t == 0 ? 1 : 4;
        for (int i = 0; i < z.height; ++i)
            for (int j = 0; j < z.width; ++j) {
                std::fill(buf.begin(), buf.begin() + len, 0.0);
                for (int c = 0; c < kLatentChannels; ++c) {
                    const double a = z.at(c, t, i, j);
                    const double* row = &b[c * len];
                    for (std::size_t k = 0; k < len; ++k) buf[k] += a * row[k];
                }
                std::size_t k = 0;
                for (int df = 0; df < nf; ++df)
                    for (int y = 0; y < 8; ++y) {
                        double* dst = &v.data[v.index(f0 + df, 8 * i + y, 8 * j, 0)];
                        for (int x = 0; x < 24; ++x) dst[x] = buf[k++];
                    }
            }
    }
    return v;
}

Video decode(const LatentGrid& latent, const PatchBasis& basis) {
    Video v = decode_unclamped(latent, basis);
    for (double& x : v.data) x = std::clamp(x, 0.0, 1.0);
    return v;
}

LatentGrid decode_grad(const Video& upstream, const Video& unclamped, const PatchBasis& basis) {
    if (!upstream.same_shape(unclamped)) throw ShapeError("decode_grad: upstream gradient shape mismatch");
    Video g = upstream;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        const double u = unclamped.data[i];
        if (u < 0.0 || u > 1.0) g.data[i] = 0.0;
    }
    return project(g, basis);
}

} // namespace vividforge
