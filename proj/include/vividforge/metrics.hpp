#pragma once

#include "vividforge/media.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vividforge {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over every element of the clip, peak 1.0; 99 dB when
/// the clips are identical.
double psnr(const Video& ref, const Video& test);
std::vector<double> psnr_per_frame(const Video& ref, const Video& test);

/// Luma SSIM (Y = 0.299 R + 0.587 G + 0.114 B), 11x11 Gaussian window with
/// sigma 1.5, K1 = 0.01, K2 = 0.03, L = 1, averaged over valid windows and
/// then over frames.
double ssim(const Video& ref, const Video& test);
std::vector<double> ssim_per_frame(const Video& ref, const Video& test);

struct ClipMetrics {
    double psnr_db = 0.0;
    double ssim = 0.0;
    std::vector<double> psnr_frames;
    std::vector<double> ssim_frames;
};

struct EvalReport {
    std::map<std::string, ClipMetrics> clips;
    double mean_psnr_db = 0.0;
    double mean_ssim = 0.0;

    /// {clip_id: {psnr, ssim, per_frame: {psnr: [...], ssim: [...]}}, "mean": {psnr, ssim}}
    std::string to_json() const;
};

ClipMetrics evaluate_clip(const Video& ref, const Video& test);
EvalReport make_report(std::map<std::string, ClipMetrics> clips);

/// Each directory is either one clip (has frames/) or a root of clip
/// directories; the two sides must hold the same clip ids.
EvalReport eval_pair(const std::filesystem::path& ref_dir, const std::filesystem::path& test_dir);

void write_report(const EvalReport& report, const std::filesystem::path& path);

} // namespace vividforge
