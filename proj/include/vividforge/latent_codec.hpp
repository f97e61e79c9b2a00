#pragma once

#include "vividforge/latent.hpp"
#include "vividforge/media.hpp"

#include <atomic>
#include <cstdint>
#include <vector>

namespace vividforge {

/// Fixed linear surrogate for a video VAE with 8x spatial and 4x temporal
/// compression into 16 channels.
///
/// The first pixel frame is coded on its own through `first` (16 x 192 over an
/// 8x8x3 patch flattened as (row, col, channel)); every following group of
/// four frames is coded through `group` (16 x 768 over a 4x8x8x3 tube flattened
/// as (time, row, col, channel)). Rows are the lowest-frequency orthonormal
/// DCT-II basis vectors, ordered by ascending frequency-index sum with ties
/// broken lexicographically. Row 0 is the DC vector.
struct PatchBasis {
    static constexpr int kFirstDim = 8 * 8 * 3;
    static constexpr int kGroupDim = 4 * 8 * 8 * 3;

    std::vector<double> first; // 16 x kFirstDim, row-major
    std::vector<double> group; // 16 x kGroupDim, row-major
};

PatchBasis make_basis();

/// Process-wide call counters, used to check stage boundaries and the
/// one-pass restore contract.
struct CodecCounters {
    std::atomic<std::uint64_t> encode_calls{0};
    std::atomic<std::uint64_t> decode_calls{0};
};
CodecCounters& codec_counters();

/// Latent geometry for a clip of the given size: 16 x (1+T/4) x H/8 x W/8.
LatentGrid latent_for(int frames, int height, int width);

LatentGrid encode(const Video& video, const PatchBasis& basis);

/// Adjoint of encode without output clamping.
Video decode_unclamped(const LatentGrid& latent, const PatchBasis& basis);

/// decode_unclamped followed by clamping to [0,1].
Video decode(const LatentGrid& latent, const PatchBasis& basis);

/// Gradient of a loss on decode(latent) with respect to latent, given the
/// upstream gradient on the clamped pixels and the unclamped decoder output.
/// Pixels outside [0,1] before clamping pass no gradient.
LatentGrid decode_grad(const Video& upstream, const Video& unclamped, const PatchBasis& basis);

} // namespace vividforge
