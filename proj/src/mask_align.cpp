#include "vividforge/mask_align.hpp"

#include "vividforge/errors.hpp"

#include <algorithm>

namespace vividforge {

MaskGrid downsample_mask(const MaskStack& masks) {
    if (masks.height <= 0 || masks.width <= 0 || masks.height % 8 || masks.width % 8)
        throw ShapeError("mask dims must be positive multiples of 8");
    MaskGrid out(masks.frames, masks.height / 8, masks.width / 8);
    for (int f = 0; f < out.frames; ++f)
        for (int i = 0; i < out.height; ++i)
            for (int j = 0; j < out.width; ++j) out.at(f, i, j) = masks.at(f, 8 * i + 4, 8 * j + 4);
    return out;
}

MaskGrid temporal_align(const MaskGrid& m) {
    if (m.frames < 1 || (m.frames - 1) % 4 != 0) throw ShapeError("mask frame count is not 1+4k");
    MaskGrid out(1 + (m.frames - 1) / 4, m.height, m.width);
    const std::size_t plane = static_cast<std::size_t>(m.height) * m.width;
    std::copy_n(m.data.begin(), plane, out.data.begin());
    for (int i = 1; i < out.frames; ++i) {
        double* dst = &out.data[i * plane];
        for (int j = 1; j <= 4; ++j) {
            const double* src = &m.data[(4 * (i - 1) + j) * plane];
            for (std::size_t k = 0; k < plane; ++k) dst[k] = std::max(dst[k], src[k]);
        }
    }
    return out;
}

LatentMask replicate_channels(const MaskGrid& aligned) {
    LatentMask out(kLatentChannels, aligned.frames, aligned.height, aligned.width);
    for (int c = 0; c < kLatentChannels; ++c)
        std::copy(aligned.data.begin(), aligned.data.end(), out.data.begin() + c * out.channel_stride());
    return out;
}

LatentMask latent_mask(const MaskStack& masks) {
    return replicate_channels(temporal_align(downsample_mask(masks)));
}

} // namespace vividforge
