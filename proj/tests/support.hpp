#pragma once

#include "vividforge/latent.hpp"
#include "vividforge/mask_align.hpp"
#include "vividforge/media.hpp"
#include "vividforge/random.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace testsupport {

namespace fs = std::filesystem;
using namespace vividforge;

// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "vf") {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline Video random_video(Rng& rng, int frames, int h, int w) {
    Video v(frames, h, w);
    for (double& x : v.data) x = uniform01(rng);
    return v;
}

inline LatentGrid random_latent(Rng& rng, int t, int h, int w, double lo = -1.0, double hi = 1.0) {
    LatentGrid z(kLatentChannels, t, h, w);
    for (double& x : z.data) x = uniform(rng, lo, hi);
    return z;
}

inline MaskStack random_masks(Rng& rng, int frames, int h, int w, double density) {
    MaskStack m(frames, h, w);
    for (auto& x : m.data) x = uniform01(rng) < density ? 1 : 0;
    return m;
}

// Textured frame content used where a flat image would hide an effect.
inline Video textured_video(int frames, int h, int w) {
    Video v(frames, h, w);
    for (int f = 0; f < frames; ++f)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    v.at(f, y, x, c) = 0.5 + 0.2 * std::sin(0.9 * x + 0.3 * c + 0.2 * f) * std::cos(0.7 * y) +
                                       0.15 * (((x / 3 + y / 2) % 2) ? 1.0 : -1.0);
    return v;
}

// Latent mask straight from the defining formulas: sample each 8x8 cell at
// its (+4,+4) site, keep latent step 0 from pixel frame 0, take the max over
// pixel frames 4(i-1)+1..4(i-1)+4 for step i, copy into 16 channels.
inline LatentGrid brute_force_latent_mask(const MaskStack& m) {
    const int T1 = 1 + (m.frames - 1) / 4, H1 = m.height / 8, W1 = m.width / 8;
    LatentGrid out(kLatentChannels, T1, H1, W1);
    for (int c = 0; c < kLatentChannels; ++c)
        for (int i = 0; i < T1; ++i)
            for (int y = 0; y < H1; ++y)
                for (int x = 0; x < W1; ++x) {
                    double v = 0.0;
                    if (i == 0) {
                        v = m.at(0, 8 * y + 4, 8 * x + 4);
                    } else {
                        for (int j = 1; j <= 4; ++j) v = std::max<double>(v, m.at(4 * (i - 1) + j, 8 * y + 4, 8 * x + 4));
                    }
                    out.at(c, i, y, x) = v;
                }
    return out;
}

// Relative error with a floor so entries whose true gradient is ~0 are judged
// on an absolute scale.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline void write_text(const fs::path& p, const std::string& s) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << s;
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace testsupport
