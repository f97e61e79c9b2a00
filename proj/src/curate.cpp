#include "vividforge/curate.hpp"

#include "vividforge/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace vividforge {

namespace {

const std::regex::flag_type kRe = std::regex::ECMAScript | std::regex::icase;

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

// Markdown emphasis and heading marks are dropped before parsing.
std::string strip_markup(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text)
        if (c != '*' && c != '#' && c != '`') out.push_back(c);
    return out;
}

int to_int(const std::string& s, const char* what) {
    std::string digits;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) digits.push_back(c);
    try {
        std::size_t used = 0;
        const int v = std::stoi(digits, &used);
        if (used != digits.size()) throw std::invalid_argument(digits);
        return v;
    } catch (const std::exception&) {
        throw ParseError(std::string("unparseable ") + what + ": '" + s + "'");
    }
}

// Integer after the last '=' of a line, ignoring a trailing "/100".
int value_after_last_equals(const std::string& line, const char* what) {
    const auto eq = line.rfind('=');
    if (eq == std::string::npos) throw ParseError(std::string("no '=' in ") + what + " line");
    std::smatch m;
    const std::string tail = line.substr(eq + 1);
    static const std::regex num(R"(^\s*([+-]?\s*\d+))");
    if (!std::regex_search(tail, m, num)) throw ParseError(std::string("unparseable ") + what + ": '" + trim(tail) + "'");
    return to_int(m[1].str(), what);
}

std::string first_line_matching(const std::string& section, const std::regex& re) {
    std::smatch m;
    if (!std::regex_search(section, m, re)) return {};
    const auto start = static_cast<std::size_t>(m.position(0));
    const auto end = section.find('\n', start);
    return section.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

struct ScoreSpec {
    const char* name;
    int max;
    int QualityReport::*field;
};

constexpr ScoreSpec kScores[] = {
    {"Clarity", 35, &QualityReport::clarity},     {"Stability", 20, &QualityReport::stability},
    {"Lighting", 20, &QualityReport::lighting},   {"Artifacts", 15, &QualityReport::artifacts},
    {"Occlusion", 10, &QualityReport::occlusion},
};

QualityTier parse_tier(const std::string& raw) {
    const std::string t = lower(trim(raw));
    if (t.starts_with("premium")) return QualityTier::Premium;
    if (t.starts_with("high")) return QualityTier::High;
    if (t.starts_with("standard")) return QualityTier::Standard;
    if (t.starts_with("below")) return QualityTier::BelowStandard;
    throw ParseError("unknown quality tier '" + trim(raw) + "'");
}

} // namespace

QualityTier tier_for(int final_score) {
    if (final_score >= 85) return QualityTier::Premium;
    if (final_score >= 80) return QualityTier::High;
    if (final_score >= 75) return QualityTier::Standard;
    return QualityTier::BelowStandard;
}

std::string to_string(QualityTier tier) {
    switch (tier) {
    case QualityTier::Premium: return "Premium";
    case QualityTier::High: return "High";
    case QualityTier::Standard: return "Standard";
    case QualityTier::BelowStandard: return "Below Standard";
    }
    return "Below Standard";
}

int QualityReport::adjustment_total() const {
    int s = 0;
    for (const auto& a : adjustments) s += a.points;
    return s;
}

// ---------------------------------------------------------------------------

CropBox face_box(const MaskStack& masks) {
    int y0 = masks.height, y1 = -1, x0 = masks.width, x1 = -1;
    for (int f = 0; f < masks.frames; ++f)
        for (int y = 0; y < masks.height; ++y)
            for (int x = 0; x < masks.width; ++x)
                if (masks.at(f, y, x)) {
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                }
    if (y1 < 0) throw EmptyFaceError("no facial mask pixels in any frame");

    auto expand = [](int& lo, int& hi, int limit) {
        const int pad = static_cast<int>(std::ceil(0.1 * (hi - lo + 1)));
        lo = std::max(0, lo - pad);
        hi = std::min(limit - 1, hi + pad);
        if ((hi - lo + 1) % 2 != 0) {
            if (hi + 1 < limit) ++hi;
            else if (lo > 0) --lo;
        }
    };
    expand(y0, y1, masks.height);
    expand(x0, x1, masks.width);
    return {y0, x0, y1 - y0 + 1, x1 - x0 + 1};
}

Video face_crop(const Video& video, const MaskStack& masks) {
    if (masks.frames != video.frames || masks.height != video.height || masks.width != video.width)
        throw ShapeError("face_crop: masks do not match the clip");
    const CropBox box = face_box(masks);
    Video out(video.frames, box.height, box.width);
    out.fps = video.fps;
    for (int f = 0; f < video.frames; ++f)
        for (int y = 0; y < box.height; ++y)
            std::copy_n(&video.data[video.index(f, box.y0 + y, box.x0, 0)], 3 * box.width,
                        &out.data[out.index(f, y, 0, 0)]);
    return out;
}

// ---------------------------------------------------------------------------

QualityReport parse_report(const std::string& raw_text) {
    const std::string text = strip_markup(raw_text);

    std::size_t pos[5] = {0, 0, 0, 0, 0};
    for (int s = 1; s <= 4; ++s) {
        const std::regex header("STEP\\s*" + std::to_string(s) + "\\s*(-|:|\xE2\x80\x93|\xE2\x80\x94)", kRe);
        std::smatch m;
        const auto from = text.cbegin() + static_cast<std::ptrdiff_t>(pos[s - 1]);
        if (!std::regex_search(from, text.cend(), m, header))
            throw ParseError("missing STEP " + std::to_string(s) + " section");
        pos[s] = pos[s - 1] + static_cast<std::size_t>(m.position(0)) + 1;
    }
    const std::string step1 = text.substr(pos[1], pos[2] - pos[1]);
    const std::string step2 = text.substr(pos[2], pos[3] - pos[2]);
    const std::string step3 = text.substr(pos[3], pos[4] - pos[3]);
    const std::string step4 = text.substr(pos[4]);

    QualityReport r;
    for (const auto& spec : kScores) {
        const std::regex re(std::string("\\b") + spec.name + R"(\s*:\s*([+-]?\d+)\s*/\s*(\d+))", kRe);
        std::smatch m;
        if (!std::regex_search(step1, m, re)) throw ParseError(std::string("missing or unparseable ") + spec.name + " score");
        const int value = to_int(m[1].str(), spec.name);
        const int denom = to_int(m[2].str(), spec.name);
        if (denom != spec.max)
            throw ParseError(std::string(spec.name) + " must be scored out of " + std::to_string(spec.max));
        if (value < 0 || value > spec.max)
            throw ParseError(std::string(spec.name) + " score " + std::to_string(value) + " out of range");
        r.*spec.field = value;
    }

    const std::string base_line = first_line_matching(step2, std::regex(R"(Base\s+Score\s*=)", kRe));
    if (base_line.empty()) throw ParseError("missing Base Score line");
    r.stated_base = value_after_last_equals(base_line, "base score");

    static const std::regex total_re(R"(Total\s+Adjustment\s*:\s*([+-]?\s*\d+))", kRe);
    static const std::regex item_re(R"(([+-]?)\s*(\d+)\s*(?:points?|pts?)\b)", kRe);
    std::istringstream lines(step3);
    std::string line;
    bool first = true;
    while (std::getline(lines, line)) {
        if (first) { // the header line itself
            first = false;
            continue;
        }
        std::smatch m;
        if (std::regex_search(line, m, total_re)) {
            r.stated_adjustment_total = to_int(m[1].str(), "total adjustment");
            continue;
        }
        if (!std::regex_search(line, m, item_re)) continue;
        int points = to_int(m[2].str(), "adjustment");
        const std::string sign = m[1].str();
        if (sign == "-" || (sign.empty() && lower(line).find("penalty") != std::string::npos)) points = -points;
        std::string reason = trim(line);
        while (!reason.empty() && (reason.front() == '-' || reason.front() == '[' || reason.front() == ' '))
            reason.erase(reason.begin());
        r.adjustments.push_back({points, reason});
    }
    if (r.adjustments.empty() && r.stated_adjustment_total && *r.stated_adjustment_total != 0)
        r.adjustments.push_back({*r.stated_adjustment_total, "total adjustment (not itemized)"});

    const std::string final_line = first_line_matching(step4, std::regex(R"(Final\s+Score\s*=)", kRe));
    if (final_line.empty()) throw ParseError("missing Final Score line");
    r.stated_final = value_after_last_equals(final_line, "final score");

    std::smatch m;
    static const std::regex tier_re(R"(Quality\s+Tier\s*:\s*\[?\s*([A-Za-z][A-Za-z \-]*))", kRe);
    if (!std::regex_search(step4, m, tier_re)) throw ParseError("missing Quality Tier line");
    r.stated_tier = parse_tier(m[1].str());

    static const std::regex blur_re(R"(Motion\s+Blur\s+Check\s*:\s*([^\n]*))", kRe);
    if (std::regex_search(step4, m, blur_re)) r.motion_blur_note = trim(m[1].str());
    return r;
}

Verification verify_arithmetic(const QualityReport& r) {
    Verification v;
    v.expected_base = r.base();
    v.stated_base = r.stated_base;
    v.expected_final = r.final_score();
    v.stated_final = r.stated_final;
    v.tier = tier_for(v.expected_final);
    v.tier_corrected = v.tier != r.stated_tier;
    const bool total_ok = !r.stated_adjustment_total || *r.stated_adjustment_total == r.adjustment_total();
    v.ok = v.expected_base == v.stated_base && v.expected_final == v.stated_final && total_ok && !v.tier_corrected;
    return v;
}

std::string render_report(const QualityReport& r) {
    auto signed_str = [](int v) { return (v >= 0 ? "+" : "") + std::to_string(v); };
    std::ostringstream o;
    o << "STEP 1 - Individual Scores:\n"
      << "Clarity: " << r.clarity << "/35 (detail)\n"
      << "Stability: " << r.stability << "/20 (stability)\n"
      << "Lighting: " << r.lighting << "/20 (lighting)\n"
      << "Artifacts: " << r.artifacts << "/15 (artifacts)\n"
      << "Occlusion: " << r.occlusion << "/10 (occlusion)\n\n"
      << "STEP 2 - Base Score Calculation:\n"
      << "Base Score = " << r.clarity << " + " << r.stability << " + " << r.lighting << " + " << r.artifacts
      << " + " << r.occlusion << " = " << r.stated_base << "/100\n\n"
      << "STEP 3 - Bonus/Penalty Adjustments:\n";
    for (const auto& a : r.adjustments)
        o << "- " << (a.points >= 0 ? "Bonus" : "Penalty") << " (" << signed_str(a.points) << " points): "
          << a.reason << "\n";
    o << "Total Adjustment: " << signed_str(r.stated_adjustment_total.value_or(r.adjustment_total())) << " points\n\n"
      << "STEP 4 - Final Results:\n"
      << "Final Score = " << r.stated_base << " (Base) + " << r.adjustment_total() << " (Adjustment) = "
      << r.stated_final << "/100\n"
      << "Quality Tier: " << to_string(r.stated_tier) << "\n"
      << "Critical Issues: none\n"
      << "Motion Blur Check: " << (r.motion_blur_note.empty() ? "none" : r.motion_blur_note) << "\n";
    return o.str();
}

// ---------------------------------------------------------------------------

std::string AssessmentRequest::to_json() const {
    return nlohmann::json{{"model", model}, {"prompt", prompt}, {"clip_id", clip_id}, {"frame_refs", frame_refs}}
        .dump();
}

HttpBackend::HttpBackend(std::string endpoint, std::chrono::milliseconds timeout) : timeout_(timeout) {
    static const std::regex url(R"(^(https?)://([^/:]+)(:\d+)?(/.*)?$)", kRe);
    std::smatch m;
    if (!std::regex_match(endpoint, m, url)) throw ValidationError("malformed endpoint URL '" + endpoint + "'");
    if (lower(m[1].str()) != "http") throw ValidationError("only http:// endpoints are supported");
    scheme_host_port_ = "http://" + m[2].str() + m[3].str();
    path_ = m[4].matched ? m[4].str() : "/";
}

std::string HttpBackend::complete(const AssessmentRequest& request) {
    attempts_.fetch_add(1);
    httplib::Client client(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    auto res = client.Post(path_, request.to_json(), "application/json");
    if (!res) throw EndpointError("request to " + scheme_host_port_ + path_ + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw EndpointError("endpoint returned HTTP " + std::to_string(res->status));

    const auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return res->body;
    for (const char* key : {"completion", "text"})
        if (body.contains(key) && body[key].is_string()) return body[key].get<std::string>();
    if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
        const auto& c = body["choices"][0];
        if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string())
            return c["message"]["content"].get<std::string>();
        if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
    }
    return {};
}

MockBackend::MockBackend(std::map<std::string, std::string> fixtures, std::chrono::milliseconds latency)
    : fixtures_(std::move(fixtures)), latency_(latency) {}

MockBackend::MockBackend(fs::path fixture_dir, std::chrono::milliseconds latency)
    : dir_(std::move(fixture_dir)), latency_(latency) {}

std::string MockBackend::complete(const AssessmentRequest& request) {
    calls_.fetch_add(1);
    const int now = in_flight_.fetch_add(1) + 1;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    struct Leave {
        std::atomic<int>& n;
        ~Leave() { n.fetch_sub(1); }
    } leave{in_flight_};

    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    if (dir_) {
        const fs::path p = *dir_ / (request.clip_id + ".txt");
        std::ifstream in(p, std::ios::binary);
        if (!in) throw EndpointError("mock backend has no fixture for " + request.clip_id);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }
    const auto it = fixtures_.find(request.clip_id);
    if (it == fixtures_.end()) throw EndpointError("mock backend has no fixture for " + request.clip_id);
    return it->second;
}

std::string request_assessment(AssessmentBackend& backend, const AssessmentRequest& request,
                               const RetryPolicy& policy) {
    auto backoff = policy.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        try {
            std::string text = backend.complete(request);
            if (trim(text).empty()) throw EmptyResponseError("empty completion for clip " + request.clip_id);
            return text;
        } catch (const EndpointError& e) {
            if (attempt >= policy.max_retries)
                throw EndpointError(std::string(e.what()) + " (after " + std::to_string(policy.max_retries) +
                                    " retries)");
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

std::vector<AssessedClip> assess_clips(AssessmentBackend& backend, const std::vector<AssessmentRequest>& requests,
                                       int parallelism, const RetryPolicy& policy) {
    std::vector<AssessedClip> out(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
            auto& slot = out[i];
            slot.clip_id = requests[i].clip_id;
            try {
                slot.report = parse_report(request_assessment(backend, requests[i], policy));
            } catch (const ParseError& e) {
                slot.error = std::string("parse_error: ") + e.what();
            } catch (const EmptyResponseError& e) {
                slot.error = std::string("empty_response: ") + e.what();
            } catch (const EndpointError& e) {
                slot.error = std::string("endpoint_error: ") + e.what();
            }
        }
    };
    const int n = std::max(1, std::min<int>(parallelism, static_cast<int>(requests.size())));
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    return out;
}

// ---------------------------------------------------------------------------

CurationManifest filter_manifest(const std::vector<AssessedClip>& clips, int threshold) {
    CurationManifest m;
    m.threshold = threshold;
    for (const auto& c : clips) {
        ManifestEntry e;
        e.clip_id = c.clip_id;
        if (c.report) {
            const auto v = verify_arithmetic(*c.report);
            e.final_score = v.expected_final;
            e.stated_final = v.stated_final;
            e.tier = v.tier;
            e.arithmetic_mismatch = !v.ok;
            e.retained = v.expected_final > threshold;
        } else {
            e.error = c.error.empty() ? "unusable" : c.error;
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

std::vector<std::string> CurationManifest::retained_ids() const {
    std::vector<std::string> ids;
    for (const auto& e : entries)
        if (e.retained) ids.push_back(e.clip_id);
    return ids;
}

std::string CurationManifest::to_json() const {
    nlohmann::json clips = nlohmann::json::array();
    for (const auto& e : entries) {
        nlohmann::json j = {{"clip_id", e.clip_id}, {"retained", e.retained}};
        j["final"] = e.final_score ? nlohmann::json(*e.final_score) : nlohmann::json(nullptr);
        j["tier"] = e.tier ? nlohmann::json(to_string(*e.tier)) : nlohmann::json(nullptr);
        if (e.stated_final) j["stated_final"] = *e.stated_final;
        j["arithmetic_mismatch"] = e.arithmetic_mismatch;
        if (!e.error.empty()) j["error"] = e.error;
        clips.push_back(std::move(j));
    }
    return nlohmann::json{{"threshold", threshold}, {"clips", clips}, {"retained", retained_ids()}}.dump(2);
}

void write_manifest(const CurationManifest& manifest, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << manifest.to_json() << "\n";
}

} // namespace vividforge
