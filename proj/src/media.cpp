#include "vividforge/media.hpp"

#include "vividforge/errors.hpp"
#include "vividforge/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

namespace fs = std::filesystem;

namespace vividforge {

namespace {

struct RawImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

void skip_space_and_comments(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            in.get();
        } else {
            return;
        }
    }
}

int read_header_int(std::istream& in, const fs::path& path) {
    skip_space_and_comments(in);
    int v = -1;
    if (!(in >> v) || v <= 0) throw FormatError("bad netpbm header in " + path.string());
    return v;
}

RawImage read_netpbm(const fs::path& path, const char* magic, int channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char m[2] = {0, 0};
    in.read(m, 2);
    if (!in || m[0] != magic[0] || m[1] != magic[1])
        throw FormatError(path.string() + ": expected " + magic + " netpbm file");
    RawImage img;
    img.channels = channels;
    img.width = read_header_int(in, path);
    img.height = read_header_int(in, path);
    const int maxval = read_header_int(in, path);
    if (maxval != 255) throw FormatError(path.string() + ": maxval must be 255");
    in.get(); // single whitespace before the raster
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * channels);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw FormatError(path.string() + ": truncated raster");
    return img;
}

void write_netpbm(const fs::path& path, const char* magic, int width, int height,
                  const std::vector<std::uint8_t>& pixels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << magic << "\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

// Files named <prefix>NNNNN<ext>, sorted; numbering must be contiguous from 0.
std::vector<fs::path> list_numbered(const fs::path& dir, const std::string& prefix,
                                    const std::string& ext) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.size() > prefix.size() + ext.size() && name.starts_with(prefix) && name.ends_with(ext))
            files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (std::size_t i = 0; i < files.size(); ++i) {
        char expect[64];
        std::snprintf(expect, sizeof expect, "%s%05zu%s", prefix.c_str(), i, ext.c_str());
        if (files[i].filename().string() != expect)
            throw FormatError("missing frame " + std::string(expect) + " in " + dir.string());
    }
    return files;
}

std::string numbered_name(const char* prefix, int i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%05d%s", prefix, i, ext);
    return buf;
}

} // namespace

std::size_t MaskStack::count_ones() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

void check_clip_geometry(int frames, int height, int width) {
    if (frames < 1 || (frames - 1) % 4 != 0)
        throw ShapeError("frame count " + std::to_string(frames) + " is not 1+4k");
    if (height <= 0 || width <= 0 || height % 8 != 0 || width % 8 != 0)
        throw ShapeError("frame size " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not a multiple of 8");
}

std::uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(255.0 * c + 0.5));
}

Video read_clip(const fs::path& dir) {
    const auto files = list_numbered(dir, "frame_", ".ppm");
    std::vector<RawImage> images;
    images.reserve(files.size());
    for (const auto& f : files) {
        images.push_back(read_netpbm(f, "P6", 3));
        if (images.back().width != images.front().width || images.back().height != images.front().height)
            throw FormatError("frame " + f.filename().string() + " differs in size from frame 0");
    }
    const int n = static_cast<int>(images.size());
    const int h = n ? images.front().height : 0;
    const int w = n ? images.front().width : 0;
    check_clip_geometry(n, h, w);

    Video v(n, h, w);
    for (int f = 0; f < n; ++f) {
        auto dst = v.frame(f);
        const auto& px = images[f].pixels;
        for (std::size_t i = 0; i < px.size(); ++i) dst[i] = px[i] / 255.0;
    }
    return v;
}

void write_clip(const Video& video, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::uint8_t> px(video.frame_stride());
    for (int f = 0; f < video.frames; ++f) {
        auto src = video.frame(f);
        std::transform(src.begin(), src.end(), px.begin(), to_byte);
        write_netpbm(dir / numbered_name("frame_", f, ".ppm"), "P6", video.width, video.height, px);
    }
}

MaskStack read_masks(const fs::path& dir, const Video* expect) {
    const auto files = list_numbered(dir, "mask_", ".pgm");
    std::vector<RawImage> images;
    for (const auto& f : files) {
        images.push_back(read_netpbm(f, "P5", 1));
        if (images.back().width != images.front().width || images.back().height != images.front().height)
            throw ShapeError("mask " + f.filename().string() + " differs in size from mask 0");
    }
    const int n = static_cast<int>(images.size());
    const int h = n ? images.front().height : 0;
    const int w = n ? images.front().width : 0;
    if (expect && (n != expect->frames || h != expect->height || w != expect->width))
        throw ShapeError("mask stack " + std::to_string(n) + "x" + std::to_string(h) + "x" +
                         std::to_string(w) + " does not match clip layout");
    if (n == 0) throw ShapeError("no masks in " + dir.string());

    MaskStack m(n, h, w);
    for (int f = 0; f < n; ++f) {
        const auto& px = images[f].pixels;
        for (std::size_t i = 0; i < px.size(); ++i) m.data[f * px.size() + i] = px[i] > 127 ? 1 : 0;
    }
    return m;
}

void write_masks(const MaskStack& masks, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const std::size_t plane = static_cast<std::size_t>(masks.height) * masks.width;
    std::vector<std::uint8_t> px(plane);
    for (int f = 0; f < masks.frames; ++f) {
        for (std::size_t i = 0; i < plane; ++i) px[i] = masks.data[f * plane + i] ? 255 : 0;
        write_netpbm(dir / numbered_name("mask_", f, ".pgm"), "P5", masks.width, masks.height, px);
    }
}

std::pair<Video, MaskStack> synth_clip(std::uint64_t seed, int frames, int size) {
    check_clip_geometry(frames, size, size);
    Rng rng(mix_seed(seed, 0x5eed));
    const double s = size;
    constexpr double two_pi = 2.0 * std::numbers::pi;

    // Head geometry. Radii in [0.2, 0.35]*size; the wobble is kept small
    // enough that radii plus travel leave the head inside the frame.
    const double ra = uniform(rng, 0.2, 0.35) * s;
    const double rb = uniform(rng, 0.2, 0.35) * s;
    const double travel = uniform(rng, 0.0, 0.15) * s;
    const double heading = uniform(rng, 0.0, two_pi);
    const double cx0 = 0.5 * s - 0.5 * travel * std::cos(heading);
    const double cy0 = 0.5 * s - 0.5 * travel * std::sin(heading);
    const double wobble_amp = uniform(rng, 0.01, 0.04);
    const double wobble_freq = uniform(rng, 0.3, 1.2);
    const double wobble_phase = uniform(rng, 0.0, two_pi);

    const double skin[3] = {uniform(rng, 0.55, 0.85), uniform(rng, 0.40, 0.65), uniform(rng, 0.30, 0.55)};
    const double lip[3] = {uniform(rng, 0.55, 0.80), uniform(rng, 0.15, 0.30), uniform(rng, 0.15, 0.30)};
    const double eye_dark = uniform(rng, 0.15, 0.35);
    const double shade_dir = uniform(rng, 0.0, two_pi);

    // Background: base colour plus a few low-frequency gratings.
    double bg[3];
    for (double& c : bg) c = uniform(rng, 0.2, 0.6);
    struct Grating { double kx, ky, phase, amp[3]; };
    Grating gratings[3];
    for (auto& g : gratings) {
        const double wavelength = uniform(rng, 20.0, 64.0) * s / 64.0;
        const double angle = uniform(rng, 0.0, two_pi);
        g.kx = two_pi / wavelength * std::cos(angle);
        g.ky = two_pi / wavelength * std::sin(angle);
        g.phase = uniform(rng, 0.0, two_pi);
        for (double& a : g.amp) a = uniform(rng, 0.02, 0.08);
    }
    const double drift = uniform(rng, -0.3, 0.3);

    Video video(frames, size, size);
    MaskStack masks(frames, size, size);
    const double edge = std::max(1.0, 1.5 * s / 64.0);

    for (int f = 0; f < frames; ++f) {
        const double u = frames > 1 ? static_cast<double>(f) / (frames - 1) : 0.0;
        const double cx = cx0 + travel * u * std::cos(heading);
        const double cy = cy0 + travel * u * std::sin(heading);
        const double wob = wobble_amp * std::sin(two_pi * wobble_freq * u + wobble_phase);
        const double a = ra * (1.0 + wob);
        const double b = rb * (1.0 - wob);

        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double px = x + 0.5;
                const double py = y + 0.5;
                double col[3];
                for (int c = 0; c < 3; ++c) {
                    double v = bg[c];
                    for (const auto& g : gratings)
                        v += g.amp[c] * std::sin(g.kx * px + g.ky * py + g.phase + drift * f);
                    col[c] = v;
                }

                const double dx = (px - cx) / a;
                const double dy = (py - cy) / b;
                const double rho = std::sqrt(dx * dx + dy * dy);
                const double alpha = std::clamp((1.0 - rho) * std::min(a, b) / edge + 0.5, 0.0, 1.0);
                masks.at(f, y, x) = rho < 1.0 ? 1 : 0;

                if (alpha > 0.0) {
                    const double shade = 1.0 + 0.12 * (dx * std::cos(shade_dir) + dy * std::sin(shade_dir));
                    double face[3];
                    for (int c = 0; c < 3; ++c) face[c] = skin[c] * shade;

                    auto blend_feature = [&](double fx, double fy, double rx, double ry, const double* tone,
                                             double scale) {
                        const double ex = (dx - fx) / rx;
                        const double ey = (dy - fy) / ry;
                        const double r = std::sqrt(ex * ex + ey * ey);
                        const double w = std::clamp((1.0 - r) * rx * a / edge + 0.5, 0.0, 1.0);
                        for (int c = 0; c < 3; ++c) {
                            const double target = tone ? tone[c] : face[c] * scale;
                            face[c] = (1.0 - w) * face[c] + w * target;
                        }
                    };
                    blend_feature(-0.38, -0.25, 0.18, 0.10, nullptr, eye_dark);
                    blend_feature(0.38, -0.25, 0.18, 0.10, nullptr, eye_dark);
                    blend_feature(0.0, 0.45, 0.32, 0.10, lip, 1.0);

                    for (int c = 0; c < 3; ++c) col[c] = (1.0 - alpha) * col[c] + alpha * face[c];
                }
                for (int c = 0; c < 3; ++c) video.at(f, y, x, c) = std::clamp(col[c], 0.0, 1.0);
            }
        }
    }
    return {std::move(video), std::move(masks)};
}

} // namespace vividforge
