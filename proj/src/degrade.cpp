#include "vividforge/degrade.hpp"

#include "vividforge/errors.hpp"
#include "vividforge/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace vividforge {

namespace {

using Dct8 = std::array<std::array<double, 8>, 8>;

// Orthonormal DCT-II matrix, row k = frequency k.
const Dct8& dct8() {
    static const Dct8 m = [] {
        Dct8 d{};
        for (int k = 0; k < 8; ++k) {
            const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int n = 0; n < 8; ++n) d[k][n] = a * std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
        }
        return d;
    }();
    return m;
}

void check_range(const char* name, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi))
        throw ValidationError(std::string(name) + " = " + std::to_string(v) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

} // namespace

void DegradeParams::validate() const {
    using namespace degrade_ranges;
    check_range("sigma", sigma, kSigmaMin, kSigmaMax);
    check_range("scale", scale, kScaleMin, kScaleMax);
    check_range("noise", noise, kNoiseMin, kNoiseMax);
    check_range("crf", crf, kCrfMin, kCrfMax);
}

DegradeParams sample_params(std::uint64_t seed) {
    using namespace degrade_ranges;
    Rng rng(mix_seed(seed, 0xde9));
    DegradeParams p;
    p.sigma = uniform(rng, kSigmaMin, kSigmaMax);
    p.scale = uniform(rng, kScaleMin, kScaleMax);
    p.noise = uniform(rng, kNoiseMin, kNoiseMax);
    p.crf = uniform(rng, kCrfMin, kCrfMax);
    p.seed = seed;
    return p;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw ValidationError("gaussian_kernel: sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

void blur_frame(std::span<const double> src, std::span<double> dst, int height, int width,
                std::span<const double> kernel) {
    const int radius = static_cast<int>(kernel.size() / 2);
    std::vector<double> tmp(src.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc[3] = {0, 0, 0};
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, width - 1);
                const double w = kernel[i + radius];
                const double* p = &src[(static_cast<std::size_t>(y) * width + xx) * 3];
                acc[0] += w * p[0];
                acc[1] += w * p[1];
                acc[2] += w * p[2];
            }
            double* q = &tmp[(static_cast<std::size_t>(y) * width + x) * 3];
            q[0] = acc[0];
            q[1] = acc[1];
            q[2] = acc[2];
        }
    }
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc[3] = {0, 0, 0};
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, height - 1);
                const double w = kernel[i + radius];
                const double* p = &tmp[(static_cast<std::size_t>(yy) * width + x) * 3];
                acc[0] += w * p[0];
                acc[1] += w * p[1];
                acc[2] += w * p[2];
            }
            double* q = &dst[(static_cast<std::size_t>(y) * width + x) * 3];
            q[0] = acc[0];
            q[1] = acc[1];
            q[2] = acc[2];
        }
    }
}

std::vector<double> resize_bilinear(std::span<const double> src, int in_h, int in_w, int out_h, int out_w) {
    struct Tap { int i0, i1; double w1; };
    auto taps = [](int in, int out) {
        std::vector<Tap> t(out);
        const double ratio = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            const double s = std::clamp((o + 0.5) * ratio - 0.5, 0.0, static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(s));
            const int i1 = std::min(i0 + 1, in - 1);
            t[o] = {i0, i1, s - i0};
        }
        return t;
    };
    const auto ty = taps(in_h, out_h);
    const auto tx = taps(in_w, out_w);
    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w * 3);
    auto px = [&](int y, int x, int c) { return src[(static_cast<std::size_t>(y) * in_w + x) * 3 + c]; };
    for (int y = 0; y < out_h; ++y) {
        const auto& a = ty[y];
        for (int x = 0; x < out_w; ++x) {
            const auto& b = tx[x];
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - b.w1) * px(a.i0, b.i0, c) + b.w1 * px(a.i0, b.i1, c);
                const double bot = (1.0 - b.w1) * px(a.i1, b.i0, c) + b.w1 * px(a.i1, b.i1, c);
                out[(static_cast<std::size_t>(y) * out_w + x) * 3 + c] = (1.0 - a.w1) * top + a.w1 * bot;
            }
        }
    }
    return out;
}

std::vector<double> compress_proxy(std::span<const double> frame, int height, int width, double crf) {
    const double q = compress_step(crf);
    const auto& d = dct8();
    std::vector<double> out(frame.size());
    const int bh = (height + 7) / 8;
    const int bw = (width + 7) / 8;
    double block[8][8];
    double tmp[8][8];
    for (int c = 0; c < 3; ++c) {
        for (int by = 0; by < bh; ++by) {
            for (int bx = 0; bx < bw; ++bx) {
                for (int i = 0; i < 8; ++i) {
                    const int y = std::min(by * 8 + i, height - 1);
                    for (int j = 0; j < 8; ++j) {
                        const int x = std::min(bx * 8 + j, width - 1);
                        block[i][j] = frame[(static_cast<std::size_t>(y) * width + x) * 3 + c];
                    }
                }
                // forward: tmp = D * block, block = tmp * D^T
                for (int k = 0; k < 8; ++k)
                    for (int j = 0; j < 8; ++j) {
                        double s = 0.0;
                        for (int n = 0; n < 8; ++n) s += d[k][n] * block[n][j];
                        tmp[k][j] = s;
                    }
                for (int k = 0; k < 8; ++k)
                    for (int l = 0; l < 8; ++l) {
                        double s = 0.0;
                        for (int n = 0; n < 8; ++n) s += tmp[k][n] * d[l][n];
                        block[k][l] = s;
                    }
                for (int k = 0; k < 8; ++k)
                    for (int l = 0; l < 8; ++l)
                        if (k != 0 || l != 0) block[k][l] = q * std::round(block[k][l] / q);
                // inverse: tmp = D^T * block, block = tmp * D
                for (int n = 0; n < 8; ++n)
                    for (int l = 0; l < 8; ++l) {
                        double s = 0.0;
                        for (int k = 0; k < 8; ++k) s += d[k][n] * block[k][l];
                        tmp[n][l] = s;
                    }
                for (int i = 0; i < 8; ++i) {
                    const int y = by * 8 + i;
                    if (y >= height) break;
                    for (int j = 0; j < 8; ++j) {
                        const int x = bx * 8 + j;
                        if (x >= width) break;
                        double s = 0.0;
                        for (int l = 0; l < 8; ++l) s += tmp[i][l] * d[l][j];
                        out[(static_cast<std::size_t>(y) * width + x) * 3 + c] = s;
                    }
                }
            }
        }
    }
    return out;
}

Video degrade_clip(const Video& video, const DegradeParams& params) {
    params.validate();
    const int h = video.height;
    const int w = video.width;
    const int small_h = std::max(1, static_cast<int>(std::lround(h / params.scale)));
    const int small_w = std::max(1, static_cast<int>(std::lround(w / params.scale)));
    const auto kernel = gaussian_kernel(params.sigma);

    Rng rng(mix_seed(params.seed, 0x4015e));
    std::normal_distribution<double> gauss(0.0, params.noise / 255.0);

    Video out = video;
    std::vector<double> blurred(video.frame_stride());
    for (int f = 0; f < video.frames; ++f) {
        blur_frame(video.frame(f), blurred, h, w, kernel);
        std::vector<double> plane = blurred;
        if (small_h != h || small_w != w) {
            const auto small = resize_bilinear(plane, h, w, small_h, small_w);
            plane = resize_bilinear(small, small_h, small_w, h, w);
        }
        if (params.noise > 0.0)
            for (double& v : plane) v += gauss(rng);
        if (!params.bypass_compression) plane = compress_proxy(plane, h, w, params.crf);
        auto dst = out.frame(f);
        for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = std::clamp(plane[i], 0.0, 1.0);
    }
    return out;
}

} // namespace vividforge
