#include "vividforge/cli.hpp"

#include "vividforge/archive.hpp"
#include "vividforge/curate.hpp"
#include "vividforge/degrade.hpp"
#include "vividforge/errors.hpp"
#include "vividforge/mask_align.hpp"
#include "vividforge/metrics.hpp"
#include "vividforge/random.hpp"
#include "vividforge/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vividforge {

namespace {

void setup_logging() {
    static bool done = false;
    if (done) return;
    done = true;
    auto logger = spdlog::stderr_color_mt("vividforge");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S] [%l] %v");
    const char* env = std::getenv("VIVIDFORGE_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
}

std::string clip_id_of(const fs::path& p) {
    fs::path c = p;
    if (c.filename().empty()) c = c.parent_path();
    return c.filename().string();
}

std::vector<std::pair<std::string, fs::path>> clip_dirs(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
    std::vector<std::pair<std::string, fs::path>> out;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::is_directory(frames_dir(e.path())))
            out.emplace_back(e.path().filename().string(), e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> dims_of(const LatentGrid& z) {
    return {static_cast<std::uint32_t>(z.channels), static_cast<std::uint32_t>(z.frames),
            static_cast<std::uint32_t>(z.height), static_cast<std::uint32_t>(z.width)};
}

// -- synth -------------------------------------------------------------------

struct SynthArgs {
    fs::path out;
    int clips = 1;
    int frames = 9;
    int size = 64;
    std::uint64_t seed = 0;
};

void cmd_synth(const SynthArgs& a) {
    spdlog::info("synth: out={} clips={} frames={} size={} seed={}", a.out.string(), a.clips, a.frames, a.size, a.seed);
    if (a.clips < 1) throw ValidationError("--clips must be positive");
    for (int i = 0; i < a.clips; ++i) {
        auto [video, masks] = synth_clip(mix_seed(a.seed, static_cast<std::uint64_t>(i)), a.frames, a.size);
        char name[32];
        std::snprintf(name, sizeof name, "clip_%04d", i);
        write_clip(video, frames_dir(a.out / name));
        write_masks(masks, masks_dir(a.out / name));
    }
}

// -- degrade -----------------------------------------------------------------

struct DegradeArgs {
    fs::path in, out;
    std::uint64_t seed = 0;
    std::optional<double> sigma, scale, noise, crf;
};

void cmd_degrade(const DegradeArgs& a) {
    DegradeParams p = sample_params(a.seed);
    if (a.sigma) p.sigma = *a.sigma;
    if (a.scale) p.scale = *a.scale;
    if (a.noise) p.noise = *a.noise;
    if (a.crf) p.crf = *a.crf;
    p.validate();
    spdlog::info("degrade: in={} out={} seed={} sigma={} scale={} noise={} crf={}", a.in.string(), a.out.string(),
                 a.seed, p.sigma, p.scale, p.noise, p.crf);
    const Video hq = read_clip(frames_dir(a.in));
    write_clip(degrade_clip(hq, p), frames_dir(a.out));
    if (fs::is_directory(masks_dir(a.in))) write_masks(read_masks(masks_dir(a.in), &hq), masks_dir(a.out));
}

// -- encode / maskalign ------------------------------------------------------

void cmd_encode(const fs::path& in, const fs::path& out) {
    spdlog::info("encode: in={} out={}", in.string(), out.string());
    const Video v = read_clip(frames_dir(in));
    const LatentGrid z = encode(v, make_basis());
    TensorArchive a;
    a.add("z/" + clip_id_of(in), dims_of(z), z.data);
    a.save(out);
}

void cmd_maskalign(const fs::path& masks_path, const fs::path& out) {
    spdlog::info("maskalign: masks={} out={}", masks_path.string(), out.string());
    fs::path dir = masks_path;
    if (dir.filename().empty()) dir = dir.parent_path();
    const std::string id = dir.filename() == "masks" ? clip_id_of(dir.parent_path()) : clip_id_of(dir);
    const MaskStack m = read_masks(dir);
    check_clip_geometry(m.frames, m.height, m.width);
    const LatentMask ml = latent_mask(m);
    TensorArchive a;
    a.add("Mp/" + id,
          {static_cast<std::uint32_t>(m.frames), static_cast<std::uint32_t>(m.height),
           static_cast<std::uint32_t>(m.width)},
          std::vector<float>(m.data.begin(), m.data.end()));
    a.add("Ml/" + id, dims_of(ml), ml.data);
    a.save(out);
}

// -- train -------------------------------------------------------------------

struct TrainArgs {
    std::optional<fs::path> config;
    std::optional<int> stage, batch, steps, checkpoint_every;
    std::optional<double> lr, p, lambda;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> data_dir, cache, out, init;
};

std::vector<ClipPair> load_pairs(const fs::path& data_dir, const std::vector<std::string>& roster) {
    std::vector<ClipPair> pairs;
    for (const auto& [id, hq_dir] : clip_dirs(data_dir / "hq")) {
        if (!roster.empty() && std::find(roster.begin(), roster.end(), id) == roster.end()) continue;
        ClipPair c;
        c.id = id;
        c.high = read_clip(frames_dir(hq_dir));
        c.masks = read_masks(masks_dir(hq_dir), &c.high);
        const fs::path lq = data_dir / "lq" / id;
        if (!fs::is_directory(frames_dir(lq))) throw ValidationError("no low-quality clip for " + id);
        c.low = read_clip(frames_dir(lq));
        pairs.push_back(std::move(c));
    }
    return pairs;
}

void cmd_train(const TrainArgs& a) {
    json cfg = {{"stage", 1},    {"lr", 1e-4},         {"batch", 4},   {"steps", 2000},
                {"seed", 0},     {"p", 0.5},           {"lambda", 0.1}, {"data_dir", ""},
                {"cache", ""},   {"out", "checkpoint.vvt"}, {"init", ""}, {"checkpoint_every", 0},
                {"clips", json::array()}};
    if (a.config) {
        std::ifstream in(*a.config);
        if (!in) throw IoError("cannot open config " + a.config->string());
        const json file = json::parse(in, nullptr, false);
        if (file.is_discarded() || !file.is_object()) throw ValidationError("config is not a JSON object");
        for (const auto& [k, v] : file.items()) {
            if (!cfg.contains(k)) throw ValidationError("unknown config key '" + k + "'");
            cfg[k] = v;
        }
    }
    if (a.stage) cfg["stage"] = *a.stage;
    if (a.batch) cfg["batch"] = *a.batch;
    if (a.steps) cfg["steps"] = *a.steps;
    if (a.checkpoint_every) cfg["checkpoint_every"] = *a.checkpoint_every;
    if (a.lr) cfg["lr"] = *a.lr;
    if (a.p) cfg["p"] = *a.p;
    if (a.lambda) cfg["lambda"] = *a.lambda;
    if (a.seed) cfg["seed"] = *a.seed;
    if (a.data_dir) cfg["data_dir"] = *a.data_dir;
    if (a.cache) cfg["cache"] = *a.cache;
    if (a.out) cfg["out"] = *a.out;
    if (a.init) cfg["init"] = *a.init;
    spdlog::info("train: resolved config {}", cfg.dump());

    TrainConfig tc;
    LossConfig lc;
    try {
        tc.stage = cfg["stage"].get<int>();
        tc.lr = cfg["lr"].get<double>();
        tc.batch = cfg["batch"].get<int>();
        tc.steps = cfg["steps"].get<int>();
        tc.seed = cfg["seed"].get<std::uint64_t>();
        tc.checkpoint_every = cfg["checkpoint_every"].get<int>();
        tc.clips = cfg["clips"].get<std::vector<std::string>>();
        lc.p = cfg["p"].get<double>();
        lc.lambda_percep = cfg["lambda"].get<double>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad config value: ") + e.what());
    }
    tc.validate();
    lc.validate();
    const fs::path data_dir = cfg["data_dir"].get<std::string>();
    const std::string cache_path = cfg["cache"].get<std::string>();
    const fs::path out = cfg["out"].get<std::string>();
    const std::string init_path = cfg["init"].get<std::string>();
    if (tc.stage == 2 && init_path.empty()) throw ValidationError("stage 2 requires a stage-1 checkpoint (init)");

    const PatchBasis basis = make_basis();
    TensorArchive cache_archive;
    if (!cache_path.empty() && fs::exists(cache_path)) {
        cache_archive = TensorArchive::load(cache_path);
    } else {
        if (data_dir.empty()) throw ValidationError("either an existing cache or data_dir is required");
        cache_archive = cache_latents(load_pairs(data_dir, tc.clips), basis);
        if (!cache_path.empty()) cache_archive.save(cache_path);
    }
    const auto cache = load_cache(cache_archive, tc.clips);
    spdlog::info("train: {} cached clips", cache.size());

    const CheckpointSink sink = [&](const Checkpoint& ck) {
        ck.to_archive().save(out);
        spdlog::info("checkpoint: step {} -> {}", ck.step, out.string());
    };

    TrainResult result;
    if (tc.stage == 1) {
        std::optional<Checkpoint> init;
        if (!init_path.empty()) init = Checkpoint::from_archive(TensorArchive::load(init_path));
        result = train_stage1(tc, lc, cache, init, sink);
    } else {
        if (data_dir.empty()) throw ValidationError("stage 2 needs data_dir for the high-quality pixels");
        std::map<std::string, Video> high;
        for (const auto& c : cache) high[c.id] = read_clip(frames_dir(data_dir / "hq" / c.id));
        const Checkpoint init = Checkpoint::from_archive(TensorArchive::load(init_path));
        result = train_stage2(tc, lc, cache, high, init, basis, sink);
    }
    for (std::size_t i = 99; i < result.losses.size(); i += 100) {
        double m = 0.0;
        for (std::size_t j = i - 99; j <= i; ++j) m += result.losses[j];
        spdlog::info("step {}: trailing-100 loss {:.6g}", i + 1, m / 100.0);
    }
}

// -- restore / eval / curate -------------------------------------------------

struct CurateArgs {
    fs::path clips;
    std::string endpoint;
    std::optional<fs::path> mock;
    std::optional<fs::path> crop_dir;
    int threshold = 90;
    int parallel = 4;
    std::string model = "qwen2.5-vl";
    fs::path out;
};

void cmd_curate(const CurateArgs& a) {
    spdlog::info("curate: clips={} endpoint={} mock={} threshold={} parallel={} out={}", a.clips.string(),
                 a.endpoint, a.mock ? a.mock->string() : "-", a.threshold, a.parallel, a.out.string());
    if (!a.mock && a.endpoint.empty()) throw ValidationError("curate needs --endpoint or --mock");

    std::vector<AssessmentRequest> requests;
    std::map<std::string, std::string> unusable;
    for (const auto& [id, dir] : clip_dirs(a.clips)) {
        AssessmentRequest r;
        r.model = a.model;
        r.prompt = build_prompt();
        r.clip_id = id;
        const Video v = read_clip(frames_dir(dir));
        fs::path ref_dir = frames_dir(dir);
        if (fs::is_directory(masks_dir(dir))) {
            try {
                const Video crop = face_crop(v, read_masks(masks_dir(dir), &v));
                if (a.crop_dir) {
                    ref_dir = frames_dir(*a.crop_dir / id);
                    write_clip(crop, ref_dir);
                }
            } catch (const EmptyFaceError& e) {
                unusable[id] = std::string("empty_face: ") + e.what();
                continue;
            }
        }
        for (int f : {0, v.frames / 2, v.frames - 1}) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%05d.ppm", f);
            const std::string ref = (ref_dir / name).string();
            if (r.frame_refs.empty() || r.frame_refs.back() != ref) r.frame_refs.push_back(ref);
        }
        requests.push_back(std::move(r));
    }

    std::unique_ptr<AssessmentBackend> backend;
    if (a.mock) backend = std::make_unique<MockBackend>(*a.mock);
    else backend = std::make_unique<HttpBackend>(a.endpoint);
    auto assessed = assess_clips(*backend, requests, a.parallel);
    for (const auto& [id, err] : unusable) assessed.push_back({id, std::nullopt, err});
    std::sort(assessed.begin(), assessed.end(), [](const auto& x, const auto& y) { return x.clip_id < y.clip_id; });

    const auto manifest = filter_manifest(assessed, a.threshold);
    write_manifest(manifest, a.out);
    spdlog::info("curate: retained {} of {} clips", manifest.retained_ids().size(), manifest.entries.size());
}

int dispatch(CLI::App& app, int argc, const char* const* argv) {
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate procedural face clips with masks");
    s->add_option("--out", synth.out, "Output root")->required();
    s->add_option("--clips", synth.clips, "Number of clips");
    s->add_option("--frames", synth.frames, "Frames per clip (1+4k)");
    s->add_option("--size", synth.size, "Frame size (multiple of 8)");
    s->add_option("--seed", synth.seed, "Random seed");

    DegradeArgs deg;
    auto* d = app.add_subcommand("degrade", "Synthesize a low-quality clip");
    d->add_option("--in", deg.in, "High-quality clip directory")->required();
    d->add_option("--out", deg.out, "Output clip directory")->required();
    d->add_option("--seed", deg.seed, "Parameter and noise seed");
    d->add_option("--sigma", deg.sigma, "Blur sigma override");
    d->add_option("--scale", deg.scale, "Downsample factor override");
    d->add_option("--noise", deg.noise, "Noise std (0-255 scale) override");
    d->add_option("--crf", deg.crf, "Compression strength override");

    fs::path enc_in, enc_out;
    auto* e = app.add_subcommand("encode", "Encode a clip into latents");
    e->add_option("--in", enc_in, "Clip directory")->required();
    e->add_option("--out", enc_out, "Output .vvt archive")->required();

    fs::path ma_in, ma_out;
    auto* m = app.add_subcommand("maskalign", "Build latent-aligned masks");
    m->add_option("--masks", ma_in, "Mask directory")->required();
    m->add_option("--out", ma_out, "Output .vvt archive")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the one-step restorer");
    t->add_option("--config", tr.config, "JSON config file");
    t->add_option("--stage", tr.stage, "1 (latent) or 2 (pixel)");
    t->add_option("--lr", tr.lr);
    t->add_option("--batch", tr.batch);
    t->add_option("--steps", tr.steps);
    t->add_option("--seed", tr.seed);
    t->add_option("--p", tr.p, "Face-focused branch probability");
    t->add_option("--lambda", tr.lambda, "Gradient-structure loss weight");
    t->add_option("--data-dir", tr.data_dir, "Root with hq/ and lq/ clip directories");
    t->add_option("--cache", tr.cache, "Latent cache archive");
    t->add_option("--out", tr.out, "Checkpoint path");
    t->add_option("--init", tr.init, "Checkpoint to start from (required for stage 2)");
    t->add_option("--checkpoint-every", tr.checkpoint_every);

    fs::path rs_ckpt, rs_in, rs_out;
    auto* r = app.add_subcommand("restore", "Restore a low-quality clip in one step");
    r->add_option("--ckpt", rs_ckpt)->required();
    r->add_option("--in", rs_in)->required();
    r->add_option("--out", rs_out)->required();

    fs::path ev_ref, ev_test, ev_report;
    auto* v = app.add_subcommand("eval", "PSNR/SSIM report");
    v->add_option("--ref", ev_ref)->required();
    v->add_option("--test", ev_test)->required();
    v->add_option("--report", ev_report)->required();

    CurateArgs cu;
    auto* c = app.add_subcommand("curate", "Score clips with a multimodal model and filter");
    c->add_option("--clips", cu.clips, "Root of clip directories")->required();
    c->add_option("--endpoint", cu.endpoint, "http:// chat endpoint");
    c->add_option("--mock", cu.mock, "Directory of <clip_id>.txt fixture responses");
    c->add_option("--threshold", cu.threshold, "Retain clips scoring strictly above this");
    c->add_option("--parallel", cu.parallel, "Maximum requests in flight");
    c->add_option("--model", cu.model, "Model name sent to the endpoint");
    c->add_option("--crop-dir", cu.crop_dir, "Write face crops here and reference them");
    c->add_option("--out", cu.out, "Manifest JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        std::cerr << app.help();
        return 1;
    }

    if (s->parsed()) cmd_synth(synth);
    else if (d->parsed()) cmd_degrade(deg);
    else if (e->parsed()) cmd_encode(enc_in, enc_out);
    else if (m->parsed()) cmd_maskalign(ma_in, ma_out);
    else if (t->parsed()) cmd_train(tr);
    else if (r->parsed()) {
        spdlog::info("restore: ckpt={} in={} out={}", rs_ckpt.string(), rs_in.string(), rs_out.string());
        restore_clip(rs_ckpt, rs_in, rs_out);
    } else if (v->parsed()) {
        spdlog::info("eval: ref={} test={} report={}", ev_ref.string(), ev_test.string(), ev_report.string());
        const auto report = eval_pair(ev_ref, ev_test);
        write_report(report, ev_report);
        spdlog::info("eval: mean PSNR {:.3f} dB, mean SSIM {:.4f}", report.mean_psnr_db, report.mean_ssim);
    } else if (c->parsed()) cmd_curate(cu);
    return 0;
}

} // namespace

Video restore_video(const VelocityNet& net, const Video& low, const PatchBasis& basis, const FlowConfig& flow) {
    return decode(one_step_restore(net, encode(low, basis), flow), basis);
}

RestoreStats restore_clip(const fs::path& ckpt, const fs::path& lq_dir, const fs::path& out_dir) {
    const Checkpoint ck = Checkpoint::from_archive(TensorArchive::load(ckpt));
    const Video low = read_clip(frames_dir(lq_dir));
    const auto before = flow_counters().forward_calls.load();
    const Video out = restore_video(ck.net, low, make_basis());
    RestoreStats stats{flow_counters().forward_calls.load() - before};
    write_clip(out, frames_dir(out_dir));
    return stats;
}

int run_cli(int argc, char** argv) {
    setup_logging();
    CLI::App app{"vividforge: one-step latent flow restoration for face clips"};
    try {
        return dispatch(app, argc, argv);
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.push_back("vividforge");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace vividforge
