// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include "curation_oracle.hpp"
#include "support.hpp"

#include "vividforge/archive.hpp"
#include "vividforge/cli.hpp"
#include "vividforge/curate.hpp"
#include "vividforge/degrade.hpp"
#include "vividforge/errors.hpp"
#include "vividforge/flow_net.hpp"
#include "vividforge/latent_codec.hpp"
#include "vividforge/mask_align.hpp"
#include "vividforge/metrics.hpp"
#include "vividforge/train.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

using namespace vividforge;
using namespace testsupport;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// -- 1 ----------------------------------------------------------------------

Outcome mask_oracle() {
    const auto t0 = Clock::now();
    Rng rng(2024);
    const int Ts[] = {4, 8, 12, 16}, Ss[] = {8, 16, 32};
    int mismatches = 0;
    for (int i = 0; i < 200; ++i) {
        const int T = Ts[rng() % 4], H = Ss[rng() % 3], W = Ss[rng() % 3];
        const MaskStack m = random_masks(rng, T + 1, H, W, uniform(rng, 0.05, 0.95));
        if (latent_mask(m).data != brute_force_latent_mask(m).data) ++mismatches;
    }
    const double dt = seconds_since(t0);
    return {mismatches == 0 && dt < 10.0,
            std::to_string(200 - mismatches) + "/200 exact matches in " + fmt_g(dt) + " s (limit 10 s)"};
}

// -- 2 ----------------------------------------------------------------------

Outcome gradient_audit() {
    const auto t0 = Clock::now();
    Rng rng(77);
    VelocityNet net = VelocityNet::initialized(77);
    for (double& w : net.tensor("head.weight")) w = uniform(rng, -0.5, 0.5);
    for (double& b : net.tensor("head.bias")) b = uniform(rng, -0.5, 0.5);
    const LatentGrid z = random_latent(rng, 2, 4, 4), u = random_latent(rng, 2, 4, 4);
    const NetGradients g = backward(net, z, 400, u);
    auto params = net.params();
    const double eps = 1e-3;
    double worst_param = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + eps;
        const double fp = dot(u.data, forward(net, z, 400).data);
        params[i] = keep - eps;
        const double fm = dot(u.data, forward(net, z, 400).data);
        params[i] = keep;
        worst_param = std::max(worst_param, rel_err(g.params[i], (fp - fm) / (2 * eps)));
    }
    double worst_input = 0.0;
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        LatentGrid zp = z, zm = z;
        zp.data[i] += eps;
        zm.data[i] -= eps;
        const double fd = (dot(u.data, forward(net, zp, 400).data) - dot(u.data, forward(net, zm, 400).data)) / (2 * eps);
        worst_input = std::max(worst_input, rel_err(g.input.data[i], fd));
    }

    // stage-2 chain: masked pixel loss + lambda * structure term through decode
    const auto basis = make_basis();
    ClipPair pair;
    pair.id = "audit";
    pair.high = Video(5, 8, 8);
    pair.low = Video(5, 8, 8);
    for (std::size_t i = 0; i < pair.high.data.size(); ++i) {
        pair.high.data[i] = uniform(rng, 0.3, 0.7);
        pair.low.data[i] = 0.5 * pair.high.data[i] + 0.25;
    }
    pair.masks = random_masks(rng, 5, 8, 8, 0.5);
    const auto cache = load_cache(cache_latents({pair}, basis));
    VelocityNet small = VelocityNet::initialized(5);
    for (double& w : small.tensor("head.weight")) w = uniform(rng, -0.02, 0.02);
    for (double& b : small.tensor("head.bias")) b = uniform(rng, -0.02, 0.02);
    double worst_chain = 0.0;
    for (int b : {0, 1}) {
        const auto r = pixel_loss_and_grad(small, cache[0], pair.high, b, LossConfig{}, FlowConfig{}, basis);
        auto sp = small.params();
        for (std::size_t i = 0; i < sp.size(); ++i) {
            const double keep = sp[i];
            sp[i] = keep + eps;
            const double fp = pixel_loss_and_grad(small, cache[0], pair.high, b, LossConfig{}, FlowConfig{}, basis, false).loss;
            sp[i] = keep - eps;
            const double fm = pixel_loss_and_grad(small, cache[0], pair.high, b, LossConfig{}, FlowConfig{}, basis, false).loss;
            sp[i] = keep;
            worst_chain = std::max(worst_chain, rel_err(r.param_grad[i], (fp - fm) / (2 * eps), 1e-8));
        }
    }
    const double dt = seconds_since(t0);
    const bool ok = worst_param < 1e-4 && worst_input < 1e-4 && worst_chain < 1e-3 && dt < 60.0;
    return {ok, std::to_string(params.size()) + " parameters, worst rel. err " + fmt_g(worst_param) + " (params), " +
                    fmt_g(worst_input) + " (input), " + fmt_g(worst_chain) + " (stage-2 chain); " + fmt_g(dt) +
                    " s (limit 60 s)"};
}

// -- 3 ----------------------------------------------------------------------

Outcome codec_contract() {
    const auto basis = make_basis();
    double gram = 0.0;
    for (const auto* b : {&basis.first, &basis.group}) {
        const int dim = static_cast<int>(b->size() / 16);
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 16; ++j) {
                double s = 0.0;
                for (int k = 0; k < dim; ++k) s += (*b)[i * dim + k] * (*b)[j * dim + k];
                gram = std::max(gram, std::abs(s - (i == j ? 1.0 : 0.0)));
            }
    }
    Rng rng(303);
    double adjoint = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Video x = random_video(rng, 9, 16, 16);
        const LatentGrid z = random_latent(rng, 3, 2, 2);
        adjoint = std::max(adjoint, std::abs(dot(encode(x, basis).data, z.data) - dot(x.data, decode_unclamped(z, basis).data)));
    }
    double roundtrip = 0.0;
    for (double v : {0.0, 0.37, 1.0}) {
        const Video x(9, 16, 16, v);
        for (double y : decode(encode(x, basis), basis).data) roundtrip = std::max(roundtrip, std::abs(y - v));
    }
    return {gram < 1e-10 && adjoint < 1e-6 && roundtrip < 1e-6,
            "max |BB^T - I| " + fmt_g(gram) + " (<1e-10), adjoint gap " + fmt_g(adjoint) + " (<1e-6), constant round-trip " +
                fmt_g(roundtrip) + " (<1e-6)"};
}

// -- 4 ----------------------------------------------------------------------

Outcome loss_expectation() {
    auto [hq, masks] = synth_clip(404, 9, 64);
    DegradeParams p = sample_params(404);
    const Video lq = degrade_clip(hq, p);
    const auto basis = make_basis();
    const LatentGrid zl = encode(lq, basis), zh = encode(hq, basis);
    const LatentMask ml = latent_mask(masks);
    const double lm = masked_loss(zh.data, zl.data, ml.data, 1).value;
    const double lg = masked_loss(zh.data, zl.data, ml.data, 0).value;
    const double prob = 0.5;
    const int n = 10000;
    Rng rng(mix_seed(404, 2));
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += masked_loss(zh.data, zl.data, ml.data, sample_b(rng, prob)).value;
    const double mean = sum / n, expected = prob * lm + (1 - prob) * lg;
    const double sigma = std::abs(lm - lg) * std::sqrt(prob * (1 - prob) / n);
    const double z = std::abs(mean - expected) / sigma;
    return {z <= 3.0, "empirical " + fmt_g(mean) + " vs expected " + fmt_g(expected) + ", deviation " + fmt_g(z) +
                          " binomial sigma (limit 3)"};
}

// -- 5, 6, 7 ----------------------------------------------------------------

struct EndToEnd {
    std::string stage1_bytes, stage2_bytes;
    std::string restored_report, degraded_report;
    double restored_psnr = 0.0, degraded_psnr = 0.0, codec_only_psnr = 0.0;
    double stage1_pixel_obj = 0.0, stage2_pixel_obj = 0.0;
    double latent_mse_before = 0.0, latent_mse_after = 0.0;
    double trailing_100 = 0.0, trailing_2000 = 0.0;
    std::vector<std::uint64_t> forwards_per_restore;
    double seconds = 0.0;
};

EndToEnd run_end_to_end(const fs::path& work) {
    const auto t0 = Clock::now();
    const auto basis = make_basis();
    const int n_clips = 32, n_train = 24;
    std::vector<ClipPair> train, held;
    std::map<std::string, Video> high;
    for (int i = 0; i < n_clips; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "clip_%02d", i);
        auto [v, m] = synth_clip(mix_seed(5150, static_cast<std::uint64_t>(i)), 9, 64);
        ClipPair c{id, degrade_clip(v, sample_params(mix_seed(6160, static_cast<std::uint64_t>(i)))), v, m};
        (i < n_train ? train : held).push_back(c);
        high[id] = v;
        // held-out clips go to disk for the restore/eval path
        if (i >= n_train) {
            write_clip(c.high, frames_dir(work / "gt" / id));
            write_clip(c.low, frames_dir(work / "lq" / id));
        }
    }
    const auto cache = load_cache(cache_latents(train, basis));

    TrainConfig s1;
    s1.stage = 1;
    s1.steps = 2000;
    s1.batch = 4;
    s1.lr = 1e-4;
    s1.seed = 7;
    LossConfig lc; // p = 0.5, lambda = 0.1
    const TrainResult r1 = train_stage1(s1, lc, cache);
    TensorArchive a1 = r1.checkpoint.to_archive();
    a1.save(work / "stage1.vvt");

    TrainConfig s2 = s1;
    s2.stage = 2;
    s2.steps = 500;
    const Checkpoint from_disk = Checkpoint::from_archive(TensorArchive::load(work / "stage1.vvt"));
    const TrainResult r2 = train_stage2(s2, lc, cache, high, from_disk, basis);
    r2.checkpoint.to_archive().save(work / "stage2.vvt");

    EndToEnd e;
    e.stage1_bytes = read_text(work / "stage1.vvt");
    e.stage2_bytes = read_text(work / "stage2.vvt");
    e.stage1_pixel_obj = expected_pixel_objective(from_disk.net, cache, high, lc, s2.flow, basis);
    e.stage2_pixel_obj = expected_pixel_objective(r2.checkpoint.net, cache, high, lc, s2.flow, basis);
    auto trailing = [&](int end) {
        double s = 0.0;
        for (int i = end - 100; i < end; ++i) s += r1.losses[i];
        return s / 100.0;
    };
    e.trailing_100 = trailing(100);
    e.trailing_2000 = trailing(2000);

    const auto held_cache = load_cache(cache_latents(held, basis));
    for (const auto& c : held_cache) {
        const LatentGrid restored = one_step_restore(r2.checkpoint.net, c.z_low, s2.flow);
        e.latent_mse_before += masked_loss(c.z_high.data, c.z_low.data, c.latent_mask.data, 0).value / held.size();
        e.latent_mse_after += masked_loss(c.z_high.data, restored.data, c.latent_mask.data, 0).value / held.size();
    }

    Checkpoint identity;
    identity.net = VelocityNet::initialized(0);
    identity.to_archive().save(work / "identity.vvt");
    for (const auto& c : held) {
        e.forwards_per_restore.push_back(
            restore_clip(work / "stage2.vvt", work / "lq" / c.id, work / "restored" / c.id).forward_calls);
        restore_clip(work / "identity.vvt", work / "lq" / c.id, work / "codec_only" / c.id);
    }
    const EvalReport restored = eval_pair(work / "gt", work / "restored");
    const EvalReport degraded = eval_pair(work / "gt", work / "lq");
    const EvalReport codec_only = eval_pair(work / "gt", work / "codec_only");
    write_report(restored, work / "restored.json");
    write_report(degraded, work / "degraded.json");
    e.restored_report = read_text(work / "restored.json");
    e.degraded_report = read_text(work / "degraded.json");
    e.restored_psnr = restored.mean_psnr_db;
    e.degraded_psnr = degraded.mean_psnr_db;
    e.codec_only_psnr = codec_only.mean_psnr_db;
    e.seconds = seconds_since(t0);
    return e;
}

Outcome end_to_end_verdict(const EndToEnd& e) {
    const double gain = e.restored_psnr - e.degraded_psnr;
    const bool ok = gain >= 1.0 && e.stage2_pixel_obj < e.stage1_pixel_obj && e.seconds < 15 * 60;
    std::ostringstream o;
    o << "held-out PSNR restored " << fmt_g(e.restored_psnr) << " dB vs degraded " << fmt_g(e.degraded_psnr)
      << " dB (gain " << fmt_g(gain) << ", need >= 1.0); stage-2 pixel objective " << fmt_g(e.stage2_pixel_obj)
      << " vs stage-1 checkpoint " << fmt_g(e.stage1_pixel_obj) << "; " << fmt_g(e.seconds) << " s (limit 900 s)";
    return {ok, o.str()};
}

// -- 8 ----------------------------------------------------------------------

Outcome curation_suite() {
    const auto truth = load_fixture_truth();
    std::map<std::string, std::string> fixtures;
    std::vector<AssessmentRequest> reqs;
    for (const auto& t : truth) {
        fixtures[t.name] = fixture_text(t.name);
        AssessmentRequest r;
        r.prompt = build_prompt();
        r.clip_id = t.name;
        reqs.push_back(r);
    }
    MockBackend mock(fixtures);
    const auto assessed = assess_clips(mock, reqs, 4);
    int valid_ok = 0, valid_n = 0, mismatch_ok = 0, mismatch_n = 0, malformed_ok = 0, malformed_n = 0;
    std::vector<std::string> want_retained;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto& t = truth[i];
        const auto& a = assessed[i];
        if (t.kind == "malformed") {
            ++malformed_n;
            bool threw = false;
            try {
                parse_report(fixtures[t.name]);
            } catch (const ParseError&) {
                threw = true;
            }
            malformed_ok += threw && !a.report && a.error.rfind("parse_error", 0) == 0;
            continue;
        }
        if (t.final_score() > 90) want_retained.push_back(t.name);
        if (!a.report) continue;
        const auto& r = *a.report;
        const auto v = verify_arithmetic(r);
        const bool scores = std::vector<int>{r.clarity, r.stability, r.lighting, r.artifacts, r.occlusion} == t.scores &&
                            r.final_score() == t.final_score() && to_string(v.tier) == oracle_tier(t.final_score());
        if (t.kind == "valid") {
            ++valid_n;
            valid_ok += scores && v.ok;
        } else {
            ++mismatch_n;
            mismatch_ok += scores && !v.ok && v.expected_final == t.final_score() && v.stated_final == t.stated_final;
        }
    }
    std::sort(want_retained.begin(), want_retained.end());
    auto got_retained = filter_manifest(assessed, 90).retained_ids();
    std::sort(got_retained.begin(), got_retained.end());

    bool tiers = true;
    for (int s = 0; s <= 100; ++s) tiers = tiers && to_string(tier_for(s)) == oracle_tier(s);

    const bool ok = valid_n == 12 && valid_ok == 12 && mismatch_n == 4 && mismatch_ok == 4 && malformed_n == 4 &&
                    malformed_ok == 4 && got_retained == want_retained && tiers;
    std::ostringstream o;
    o << "valid " << valid_ok << "/" << valid_n << ", mismatches detected " << mismatch_ok << "/" << mismatch_n
      << ", malformed rejected " << malformed_ok << "/" << malformed_n << ", retained " << got_retained.size()
      << " (expected " << want_retained.size() << (got_retained == want_retained ? ", same set" : ", DIFFERENT set")
      << "), tier boundaries " << (tiers ? "ok" : "wrong");
    return {ok, o.str()};
}

// -- 9 ----------------------------------------------------------------------

Outcome degradation_sanity() {
    auto [v, m] = synth_clip(909, 9, 64);
    DegradeParams id;
    id.sigma = 0.1;
    id.scale = 1.0;
    id.noise = 0.0;
    id.bypass_compression = true;
    const Video out = degrade_clip(v, id);
    double worst = 0.0;
    for (std::size_t i = 0; i < v.data.size(); ++i) worst = std::max(worst, std::abs(out.data[i] - v.data[i]));

    DegradeParams noisy = id;
    noisy.noise = 10.0;
    noisy.seed = 99;
    const Video flat(9, 64, 64, 0.5);
    const Video n = degrade_clip(flat, noisy);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n.data.size(); ++i) {
        const double d = n.data[i] - 0.5;
        s += d;
        s2 += d * d;
    }
    const double cnt = static_cast<double>(n.data.size());
    const double sd = std::sqrt(s2 / cnt - (s / cnt) * (s / cnt));
    const double sd_err = std::abs(sd - 10.0 / 255.0) / (10.0 / 255.0);

    bool monotone = true;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto [frame_clip, unused] = synth_clip(seed, 1, 64);
        double prev = -1.0;
        for (double crf = 18.0; crf <= 25.0; crf += 0.5) {
            const auto c = compress_proxy(frame_clip.frame(0), 64, 64, crf);
            double e = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i) e += (c[i] - frame_clip.data[i]) * (c[i] - frame_clip.data[i]);
            monotone = monotone && e >= prev;
            prev = e;
        }
    }
    return {worst <= 2e-3 && sd_err <= 0.05 && monotone,
            "identity max error " + fmt_g(worst) + " (<=2e-3), noise std relative error " + fmt_g(sd_err) +
                " (<=0.05), compression MSE monotone in crf: " + (monotone ? "yes" : "no")};
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    int failures = 0;
    auto report = [&](int id, const char* name, const Outcome& o) {
        std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    };
    auto guarded = [](const std::function<Outcome()>& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            return Outcome{false, std::string("threw: ") + e.what()};
        }
    };

    report(1, "mask-alignment oracle", guarded(mask_oracle));
    report(2, "gradient audit", guarded(gradient_audit));
    report(3, "codec contract", guarded(codec_contract));
    report(4, "loss expectation", guarded(loss_expectation));

    TempDir run_a("vf_accept_a"), run_b("vf_accept_b");
    std::optional<EndToEnd> first, second;
    report(5, "end-to-end toy run", guarded([&] {
               first = run_end_to_end(run_a.path());
               return end_to_end_verdict(*first);
           }));
    if (first) {
        std::printf("       codec-only restore %.4g dB; held-out latent MSE %.4g -> %.4g; stage-1 trailing-100 loss "
                    "%.4g at step 100, %.4g at step 2000 (ratio %.3g)\n",
                    first->codec_only_psnr, first->latent_mse_before, first->latent_mse_after, first->trailing_100,
                    first->trailing_2000, first->trailing_2000 / first->trailing_100);
    }
    report(6, "one-step contract", guarded([&] {
               if (!first) return Outcome{false, "end-to-end run did not complete"};
               bool ok = !first->forwards_per_restore.empty();
               for (auto n : first->forwards_per_restore) ok = ok && n == 1;
               return Outcome{ok, std::to_string(first->forwards_per_restore.size()) + " clips restored, " +
                                      (ok ? "exactly 1 forward each" : "forward count differs from 1")};
           }));
    report(7, "determinism", guarded([&] {
               if (!first) return Outcome{false, "end-to-end run did not complete"};
               second = run_end_to_end(run_b.path());
               const bool ck = first->stage1_bytes == second->stage1_bytes && first->stage2_bytes == second->stage2_bytes;
               const bool rep = first->restored_report == second->restored_report &&
                                first->degraded_report == second->degraded_report;
               return Outcome{ck && rep, std::string("checkpoints ") + (ck ? "bit-identical" : "DIFFER") +
                                             ", metric reports " + (rep ? "bit-identical" : "DIFFER")};
           }));
    report(8, "curation suite", guarded(curation_suite));
    report(9, "degradation sanity", guarded(degradation_sanity));

    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
