#pragma once

#include "vividforge/latent.hpp"
#include "vividforge/media.hpp"

#include <cstdint>
#include <vector>

namespace vividforge {

/// Per-frame or per-latent-step mask plane stack, (step, row, col).
struct MaskGrid {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    MaskGrid() = default;
    MaskGrid(int f, int h, int w, double fill = 0.0)
        : frames(f), height(h), width(w), data(static_cast<std::size_t>(f) * h * w, fill) {}

    std::size_t index(int f, int y, int x) const {
        return (static_cast<std::size_t>(f) * height + y) * width + x;
    }
    double& at(int f, int y, int x) { return data[index(f, y, x)]; }
    double at(int f, int y, int x) const { return data[index(f, y, x)]; }
};

/// Nearest-neighbour 8x8 downsample sampling each cell at offset (+4, +4).
MaskGrid downsample_mask(const MaskStack& masks);

/// Step 0 passes frame 0 through; step i >= 1 is the element-wise max of
/// frames 4(i-1)+1 .. 4(i-1)+4.
MaskGrid temporal_align(const MaskGrid& per_frame);

/// Copies the aligned mask into all 16 latent channels.
LatentMask replicate_channels(const MaskGrid& aligned);

/// downsample -> temporal_align -> replicate.
LatentMask latent_mask(const MaskStack& masks);

} // namespace vividforge
