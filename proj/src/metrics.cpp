#include "vividforge/metrics.hpp"

#include "vividforge/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace fs = std::filesystem;

namespace vividforge {

namespace {

void require_same(const Video& a, const Video& b) {
    if (!a.same_shape(b)) throw ShapeError("metric operands differ in shape");
}

double psnr_from_mse(double mse) {
    return mse <= 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> luma(const Video& v, int f) {
    const auto src = v.frame(f);
    std::vector<double> y(static_cast<std::size_t>(v.height) * v.width);
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    return y;
}

const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> k(11);
        double s = 0.0;
        for (int i = 0; i < 11; ++i) s += k[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
        for (double& v : k) v /= s;
        return k;
    }();
    return w;
}

// Valid-mode separable filtering of an h x w plane with the SSIM window.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w) {
    const auto& k = ssim_window();
    const int oh = h - 10, ow = w - 10;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < 11; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w);
    const auto mu_b = filter_valid(b, h, w);
    const auto e_aa = filter_valid(aa, h, w);
    const auto e_bb = filter_valid(bb, h, w);
    const auto e_ab = filter_valid(ab, h, w);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return sum / static_cast<double>(mu_a.size());
}

std::vector<std::pair<std::string, fs::path>> list_clips(const fs::path& dir) {
    std::vector<std::pair<std::string, fs::path>> out;
    if (fs::is_directory(dir / "frames")) {
        out.emplace_back(dir.filename().string(), dir);
        return out;
    }
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::is_directory(e.path() / "frames"))
            out.emplace_back(e.path().filename().string(), e.path());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

double psnr(const Video& ref, const Video& test) {
    require_same(ref, test);
    double sum = 0.0;
    for (std::size_t i = 0; i < ref.data.size(); ++i) {
        const double d = ref.data[i] - test.data[i];
        sum += d * d;
    }
    return psnr_from_mse(ref.data.empty() ? 0.0 : sum / static_cast<double>(ref.data.size()));
}

std::vector<double> psnr_per_frame(const Video& ref, const Video& test) {
    require_same(ref, test);
    std::vector<double> out;
    for (int f = 0; f < ref.frames; ++f) {
        const auto a = ref.frame(f);
        const auto b = test.frame(f);
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
        out.push_back(psnr_from_mse(sum / static_cast<double>(a.size())));
    }
    return out;
}

std::vector<double> ssim_per_frame(const Video& ref, const Video& test) {
    require_same(ref, test);
    if (ref.height < 11 || ref.width < 11) throw ValidationError("SSIM needs frames of at least 11x11");
    std::vector<double> out;
    for (int f = 0; f < ref.frames; ++f) out.push_back(ssim_plane(luma(ref, f), luma(test, f), ref.height, ref.width));
    return out;
}

double ssim(const Video& ref, const Video& test) {
    const auto per = ssim_per_frame(ref, test);
    return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

ClipMetrics evaluate_clip(const Video& ref, const Video& test) {
    ClipMetrics m;
    m.psnr_db = psnr(ref, test);
    m.psnr_frames = psnr_per_frame(ref, test);
    m.ssim_frames = ssim_per_frame(ref, test);
    m.ssim = std::accumulate(m.ssim_frames.begin(), m.ssim_frames.end(), 0.0) /
             static_cast<double>(m.ssim_frames.size());
    return m;
}

EvalReport make_report(std::map<std::string, ClipMetrics> clips) {
    EvalReport r;
    r.clips = std::move(clips);
    for (const auto& [id, m] : r.clips) {
        r.mean_psnr_db += m.psnr_db;
        r.mean_ssim += m.ssim;
    }
    if (!r.clips.empty()) {
        r.mean_psnr_db /= static_cast<double>(r.clips.size());
        r.mean_ssim /= static_cast<double>(r.clips.size());
    }
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, m] : clips) {
        j[id] = {{"psnr", m.psnr_db},
                 {"ssim", m.ssim},
                 {"per_frame", {{"psnr", m.psnr_frames}, {"ssim", m.ssim_frames}}}};
    }
    j["mean"] = {{"psnr", mean_psnr_db}, {"ssim", mean_ssim}};
    return j.dump(2);
}

EvalReport eval_pair(const fs::path& ref_dir, const fs::path& test_dir) {
    auto refs = list_clips(ref_dir);
    auto tests = list_clips(test_dir);
    // A single clip on each side is paired regardless of directory names.
    if (refs.size() == 1 && tests.size() == 1 && fs::is_directory(ref_dir / "frames"))
        tests.front().first = refs.front().first;
    if (refs.size() != tests.size()) throw ShapeError("reference and test sets hold different clip counts");
    std::map<std::string, ClipMetrics> clips;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].first != tests[i].first)
            throw ShapeError("clip " + refs[i].first + " has no counterpart in " + test_dir.string());
        const Video ref = read_clip(frames_dir(refs[i].second));
        const Video test = read_clip(frames_dir(tests[i].second));
        if (!ref.same_shape(test)) throw ShapeError("clip " + refs[i].first + " differs in shape");
        clips[refs[i].first] = evaluate_clip(ref, test);
    }
    return make_report(std::move(clips));
}

void write_report(const EvalReport& report, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << report.to_json() << "\n";
}

} // namespace vividforge
