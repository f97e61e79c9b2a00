#pragma once

#include "vividforge/media.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vividforge {

// ---------------------------------------------------------------------------
// Rubric data

enum class QualityTier { Premium, High, Standard, BelowStandard };

/// Premium >= 85, High >= 80, Standard >= 75, otherwise BelowStandard.
QualityTier tier_for(int final_score);
std::string to_string(QualityTier tier);

struct Adjustment {
    int points = 0;
    std::string reason;
};

/// Parsed assessment. The five sub-scores and the itemized adjustments are the
/// ground truth; the `stated_*` fields record what the model claimed and are
/// only consulted by verify_arithmetic.
struct QualityReport {
    int clarity = 0;   // /35
    int stability = 0; // /20
    int lighting = 0;  // /20
    int artifacts = 0; // /15
    int occlusion = 0; // /10
    std::vector<Adjustment> adjustments;
    std::string motion_blur_note;

    int stated_base = 0;
    std::optional<int> stated_adjustment_total;
    int stated_final = 0;
    QualityTier stated_tier = QualityTier::BelowStandard;

    int base() const { return clarity + stability + lighting + artifacts + occlusion; }
    int adjustment_total() const;
    int final_score() const { return base() + adjustment_total(); }
    QualityTier tier() const { return tier_for(final_score()); }
};

struct Verification {
    bool ok = true;
    int expected_base = 0;
    int stated_base = 0;
    int expected_final = 0;
    int stated_final = 0;
    QualityTier tier = QualityTier::BelowStandard; // recomputed from expected_final
    bool tier_corrected = false;
};

// ---------------------------------------------------------------------------
// Operations

struct CropBox {
    int y0 = 0, x0 = 0, height = 0, width = 0;
};

/// Bounding box of every mask pixel across all frames, grown by
/// ceil(10%) of its extent on each side, clamped to the frame and widened to
/// even dimensions. Throws EmptyFaceError when no mask pixel is set.
CropBox face_box(const MaskStack& masks);
Video face_crop(const Video& video, const MaskStack& masks);

/// Fixed quality-assessment prompt given to the multimodal model.
const std::string& build_prompt();

/// Extracts sub-scores, adjustments, stated totals and tier from a model
/// response. Throws ParseError when a STEP section or a required score line
/// is missing or malformed.
QualityReport parse_report(const std::string& text);

Verification verify_arithmetic(const QualityReport& report);

/// Inverse of parse_report for the numeric fields; used to produce fixtures.
std::string render_report(const QualityReport& report);

// ---------------------------------------------------------------------------
// Assessment client

/// Request body sent to the assessment endpoint:
/// {"model": ..., "prompt": ..., "clip_id": ..., "frame_refs": [...]}
struct AssessmentRequest {
    std::string model = "qwen2.5-vl";
    std::string prompt;
    std::string clip_id;
    std::vector<std::string> frame_refs;

    std::string to_json() const;
};

class AssessmentBackend {
public:
    virtual ~AssessmentBackend() = default;
    /// Returns the raw completion text. Transport failures throw EndpointError.
    virtual std::string complete(const AssessmentRequest& request) = 0;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{200};
    std::chrono::milliseconds timeout{30000};
};

/// POSTs the request JSON to an http:// chat endpoint. The completion is read
/// from "completion", "text", "choices[0].message.content" or
/// "choices[0].text" when the response is JSON, else the raw body is used.
class HttpBackend : public AssessmentBackend {
public:
    HttpBackend(std::string endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30));
    std::string complete(const AssessmentRequest& request) override;

    std::uint64_t attempts() const { return attempts_.load(); }

private:
    std::string scheme_host_port_;
    std::string path_;
    std::chrono::milliseconds timeout_;
    std::atomic<std::uint64_t> attempts_{0};
};

/// Serves fixture text by clip id, from memory or from <dir>/<clip_id>.txt.
/// Optional per-request latency; tracks peak concurrency.
class MockBackend : public AssessmentBackend {
public:
    explicit MockBackend(std::map<std::string, std::string> fixtures,
                         std::chrono::milliseconds latency = std::chrono::milliseconds(0));
    explicit MockBackend(std::filesystem::path fixture_dir,
                         std::chrono::milliseconds latency = std::chrono::milliseconds(0));

    std::string complete(const AssessmentRequest& request) override;

    int peak_in_flight() const { return peak_.load(); }
    std::uint64_t calls() const { return calls_.load(); }

private:
    std::map<std::string, std::string> fixtures_;
    std::optional<std::filesystem::path> dir_;
    std::chrono::milliseconds latency_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_{0};
    std::atomic<std::uint64_t> calls_{0};
};

/// Calls the backend with up to `policy.max_retries` retries and exponential
/// backoff on EndpointError. Empty completions throw EmptyResponseError.
std::string request_assessment(AssessmentBackend& backend, const AssessmentRequest& request,
                               const RetryPolicy& policy = {});

struct AssessedClip {
    std::string clip_id;
    std::optional<QualityReport> report;
    std::string error; // "parse_error: ...", "endpoint_error: ...", empty when parsed
};

/// Requests and parses every clip with at most `parallelism` requests in flight.
/// Results keep the order of `requests`.
std::vector<AssessedClip> assess_clips(AssessmentBackend& backend, const std::vector<AssessmentRequest>& requests,
                                       int parallelism = 4, const RetryPolicy& policy = {});

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
    std::string clip_id;
    std::optional<int> final_score; // recomputed; absent for unusable clips
    std::optional<QualityTier> tier;
    bool retained = false;
    bool arithmetic_mismatch = false;
    std::optional<int> stated_final;
    std::string error;
};

struct CurationManifest {
    int threshold = 90;
    std::vector<ManifestEntry> entries;

    std::string to_json() const;
    std::vector<std::string> retained_ids() const;
};

/// Retains a clip iff its recomputed final score is strictly greater than
/// `threshold`. Unusable clips are listed with their error and never retained.
CurationManifest filter_manifest(const std::vector<AssessedClip>& clips, int threshold = 90);

void write_manifest(const CurationManifest& manifest, const std::filesystem::path& path);

} // namespace vividforge
