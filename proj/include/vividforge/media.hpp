#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace vividforge {

/// RGB clip of `frames` frames, stored frame-major as (frame, row, col, channel)
/// with values nominally in [0,1].
///
/// Clips that feed the latent codec must have 1+4k frames and spatial dims
/// divisible by 8 (see check_clip_geometry). Crops produced for curation are
/// Videos too and need not satisfy that.
struct Video {
    int frames = 0;
    int height = 0;
    int width = 0;
    int fps = 25;
    std::vector<double> data;

    Video() = default;
    Video(int f, int h, int w, double fill = 0.0)
        : frames(f), height(h), width(w),
          data(static_cast<std::size_t>(f) * h * w * 3, fill) {}

    std::size_t frame_stride() const { return static_cast<std::size_t>(height) * width * 3; }
    std::size_t index(int f, int y, int x, int c) const {
        return ((static_cast<std::size_t>(f) * height + y) * width + x) * 3 + c;
    }
    double& at(int f, int y, int x, int c) { return data[index(f, y, x, c)]; }
    double at(int f, int y, int x, int c) const { return data[index(f, y, x, c)]; }

    std::span<double> frame(int f) { return {data.data() + f * frame_stride(), frame_stride()}; }
    std::span<const double> frame(int f) const {
        return {data.data() + f * frame_stride(), frame_stride()};
    }

    bool same_shape(const Video& o) const {
        return frames == o.frames && height == o.height && width == o.width;
    }
};

/// Per-frame binary masks, (frame, row, col), values exactly 0 or 1.
struct MaskStack {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    MaskStack() = default;
    MaskStack(int f, int h, int w, std::uint8_t fill = 0)
        : frames(f), height(h), width(w), data(static_cast<std::size_t>(f) * h * w, fill) {}

    std::size_t index(int f, int y, int x) const {
        return (static_cast<std::size_t>(f) * height + y) * width + x;
    }
    std::uint8_t& at(int f, int y, int x) { return data[index(f, y, x)]; }
    std::uint8_t at(int f, int y, int x) const { return data[index(f, y, x)]; }

    std::size_t count_ones() const;
};

/// Throws ShapeError unless frames = 1+4k (k >= 0) and height/width are
/// positive multiples of 8.
void check_clip_geometry(int frames, int height, int width);

// Frame directories hold frame_%05d.ppm (P6, maxval 255); mask directories
// hold mask_%05d.pgm (P5). Files are taken in lexicographic order.
Video read_clip(const std::filesystem::path& dir);
void write_clip(const Video& video, const std::filesystem::path& dir);

/// Reads binarized masks (pixel > 127 means 1). When `expect` is given the
/// stack must match its frame count and spatial dims.
MaskStack read_masks(const std::filesystem::path& dir, const Video* expect = nullptr);
void write_masks(const MaskStack& masks, const std::filesystem::path& dir);

// Clip directory convention: <clip>/frames and <clip>/masks.
inline std::filesystem::path frames_dir(const std::filesystem::path& clip) { return clip / "frames"; }
inline std::filesystem::path masks_dir(const std::filesystem::path& clip) { return clip / "masks"; }

/// byte = round(255 * clamp(v, 0, 1)), halves rounded up.
std::uint8_t to_byte(double v);

/// Procedural face clip: a soft-edged head ellipse translating across the
/// clip with a small sinusoidal wobble of its radii, two dark eye ellipses,
/// a mouth ellipse and a smooth striped background. The mask is the head
/// interior. Pure function of its arguments.
std::pair<Video, MaskStack> synth_clip(std::uint64_t seed, int frames, int size);

} // namespace vividforge
