#pragma once

#include <cstddef>
#include <vector>

namespace vividforge {

inline constexpr int kLatentChannels = 16;

/// Spatiotemporal latent tensor laid out (channel, time, row, col).
struct LatentGrid {
    int channels = kLatentChannels;
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    LatentGrid() = default;
    LatentGrid(int c, int t, int h, int w, double fill = 0.0)
        : channels(c), frames(t), height(h), width(w),
          data(static_cast<std::size_t>(c) * t * h * w, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t channel_stride() const { return static_cast<std::size_t>(frames) * plane(); }
    std::size_t index(int c, int t, int y, int x) const {
        return ((static_cast<std::size_t>(c) * frames + t) * height + y) * width + x;
    }
    double& at(int c, int t, int y, int x) { return data[index(c, t, y, x)]; }
    double at(int c, int t, int y, int x) const { return data[index(c, t, y, x)]; }

    bool same_shape(const LatentGrid& o) const {
        return channels == o.channels && frames == o.frames && height == o.height && width == o.width;
    }
};

/// Latent-aligned mask, same layout as the latent it weights.
using LatentMask = LatentGrid;

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what);

} // namespace vividforge
