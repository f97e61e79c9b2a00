#pragma once

#include "vividforge/media.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace vividforge {

/// One degradation draw, applied uniformly to every frame of a clip.
struct DegradeParams {
    double sigma = 1.0;  // Gaussian blur std, pixels, in [0.1, 10]
    double scale = 1.0;  // downsample factor, in [1, 4]
    double noise = 0.0;  // Gaussian noise std on the 0-255 scale, in [0, 10]
    double crf = 18.0;   // compression strength, in [18, 25]
    std::uint64_t seed = 0;
    bool bypass_compression = false; // test hook: skip the compression stage

    void validate() const;
};

namespace degrade_ranges {
inline constexpr double kSigmaMin = 0.1, kSigmaMax = 10.0;
inline constexpr double kScaleMin = 1.0, kScaleMax = 4.0;
inline constexpr double kNoiseMin = 0.0, kNoiseMax = 10.0;
inline constexpr double kCrfMin = 18.0, kCrfMax = 25.0;
} // namespace degrade_ranges

/// Each field uniform over its range; the noise stream is seeded from `seed`.
DegradeParams sample_params(std::uint64_t seed);

/// Normalized 1-D Gaussian, radius ceil(3*sigma), length 2*radius+1.
std::vector<double> gaussian_kernel(double sigma);

/// Separable blur of one interleaved RGB plane with edge-replicate padding.
void blur_frame(std::span<const double> src, std::span<double> dst, int height, int width,
                std::span<const double> kernel);

/// Bilinear resize of an interleaved RGB plane using half-pixel centres
/// (src = (dst + 0.5) * in/out - 0.5, clamped to the image).
std::vector<double> resize_bilinear(std::span<const double> src, int in_h, int in_w, int out_h, int out_w);

/// Quantization step of the compression stand-in.
inline double compress_step(double crf) { return 0.0015 * crf; }

/// Blockwise 8x8 DCT quantization per channel (edge-replicate padded). The
/// DC coefficient of each block is kept exactly; AC coefficients are rounded
/// to multiples of compress_step(crf).
std::vector<double> compress_proxy(std::span<const double> frame, int height, int width, double crf);

/// blur -> downsample -> upsample -> noise -> compression -> clamp [0,1].
Video degrade_clip(const Video& video, const DegradeParams& params);

} // namespace vividforge
