#include "curation_oracle.hpp"
#include "support.hpp"

#include "vividforge/archive.hpp"
#include "vividforge/cli.hpp"
#include "vividforge/degrade.hpp"
#include "vividforge/train.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>

using namespace vividforge;
using namespace testsupport;

namespace {

int cli(std::vector<std::string> args) {
    static const bool quiet = [] { return ::setenv("VIVIDFORGE_LOG", "error", 1) == 0; }();
    (void)quiet;
    return run_cli(args);
}

std::vector<std::string> listing(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

// hq/<id> and lq/<id> clip directories for the train subcommand.
void make_dataset(const fs::path& root, int n) {
    for (int i = 0; i < n; ++i) {
        const std::string id = "s" + std::to_string(i);
        auto [v, m] = synth_clip(mix_seed(5, i), 5, 16);
        write_clip(v, frames_dir(root / "hq" / id));
        write_masks(m, masks_dir(root / "hq" / id));
        write_clip(degrade_clip(v, sample_params(i)), frames_dir(root / "lq" / id));
    }
}

} // namespace

TEST_CASE("synth writes clip directories with frames and masks") {
    TempDir tmp;
    REQUIRE(cli({"synth", "--out", (tmp / "d").string(), "--clips", "2", "--frames", "9", "--size", "64", "--seed", "7"}) == 0);
    CHECK(listing(tmp / "d") == std::vector<std::string>{"clip_0000", "clip_0001"});
    for (const char* id : {"clip_0000", "clip_0001"}) {
        const Video v = read_clip(frames_dir(tmp / "d" / id));
        CHECK(v.frames == 9);
        CHECK(v.height == 64);
        CHECK(read_masks(masks_dir(tmp / "d" / id), &v).count_ones() > 0);
    }
    CHECK(cli({"synth", "--out", (tmp / "bad").string(), "--frames", "8"}) == 1);
}

TEST_CASE("usage errors exit 1, runtime errors exit 2") {
    CHECK(cli({}) == 1);
    CHECK(cli({"frobnicate"}) == 1);
    CHECK(cli({"synth", "--out", "/tmp/x", "--bogus", "1"}) == 1);
    CHECK(cli({"eval", "--ref", "/nonexistent/a", "--test", "/nonexistent/b", "--report", "/tmp/r.json"}) == 2);
    CHECK(cli({"--help"}) == 0);
}

TEST_CASE("degrade, encode and maskalign produce their artifacts") {
    TempDir tmp;
    REQUIRE(cli({"synth", "--out", (tmp / "hq").string(), "--clips", "1", "--frames", "5", "--size", "32", "--seed", "3"}) == 0);
    const fs::path clip = tmp / "hq" / "clip_0000";
    REQUIRE(cli({"degrade", "--in", clip.string(), "--out", (tmp / "lq").string(), "--seed", "9", "--sigma", "2",
                 "--scale", "2", "--noise", "3", "--crf", "20"}) == 0);
    const Video hq = read_clip(frames_dir(clip));
    DegradeParams p = sample_params(9);
    p.sigma = 2;
    p.scale = 2;
    p.noise = 3;
    p.crf = 20;
    const Video expect = degrade_clip(hq, p);
    const Video got = read_clip(frames_dir(tmp / "lq"));
    for (std::size_t i = 0; i < got.data.size(); ++i) REQUIRE(std::abs(got.data[i] - expect.data[i]) <= 1.0 / 510.0 + 1e-9);
    CHECK(cli({"degrade", "--in", clip.string(), "--out", (tmp / "x").string(), "--sigma", "20"}) == 1);

    REQUIRE(cli({"encode", "--in", clip.string(), "--out", (tmp / "z.vvt").string()}) == 0);
    const auto za = TensorArchive::load(tmp / "z.vvt");
    CHECK(za.get("z/clip_0000").dims == std::vector<std::uint32_t>{16, 2, 4, 4});

    REQUIRE(cli({"maskalign", "--masks", masks_dir(clip).string(), "--out", (tmp / "m.vvt").string()}) == 0);
    const auto ma = TensorArchive::load(tmp / "m.vvt");
    CHECK(ma.get("Ml/clip_0000").dims == std::vector<std::uint32_t>{16, 2, 4, 4});
    CHECK(ma.get("Mp/clip_0000").dims == std::vector<std::uint32_t>{5, 32, 32});
}

TEST_CASE("train: config file, flag overrides, stage 2 requirements") {
    TempDir tmp;
    make_dataset(tmp / "data", 3);
    const fs::path cfg = tmp / "cfg.json";
    write_text(cfg, nlohmann::json{{"stage", 1}, {"steps", 500}, {"batch", 2}, {"seed", 4},
                                   {"data_dir", (tmp / "data").string()}, {"cache", (tmp / "cache.vvt").string()},
                                   {"out", (tmp / "s1.vvt").string()}}
                        .dump());
    REQUIRE(cli({"train", "--config", cfg.string(), "--steps", "6"}) == 0);
    const Checkpoint s1 = Checkpoint::from_archive(TensorArchive::load(tmp / "s1.vvt"));
    CHECK(s1.step == 6);
    CHECK(s1.stage == 1);
    CHECK(fs::exists(tmp / "cache.vvt"));

    // same run from the cache alone reproduces the checkpoint
    REQUIRE(cli({"train", "--config", cfg.string(), "--steps", "6", "--data-dir", "", "--out", (tmp / "s1b.vvt").string()}) == 0);
    CHECK(read_text(tmp / "s1.vvt") == read_text(tmp / "s1b.vvt"));

    CHECK(cli({"train", "--config", cfg.string(), "--stage", "2", "--steps", "2", "--out", (tmp / "s2.vvt").string()}) == 1);
    REQUIRE(cli({"train", "--config", cfg.string(), "--stage", "2", "--steps", "3", "--init", (tmp / "s1.vvt").string(),
                 "--out", (tmp / "s2.vvt").string()}) == 0);
    const Checkpoint s2 = Checkpoint::from_archive(TensorArchive::load(tmp / "s2.vvt"));
    CHECK(s2.stage == 2);

    write_text(tmp / "bad.json", R"({"stage": 1, "colour": "blue"})");
    CHECK(cli({"train", "--config", (tmp / "bad.json").string()}) == 1);
    write_text(tmp / "bad2.json", R"({"stage": "one"})");
    CHECK(cli({"train", "--config", (tmp / "bad2.json").string()}) == 1);
    CHECK(cli({"train", "--steps", "1"}) == 1);
}

TEST_CASE("restore with an untrained checkpoint is the codec round trip") {
    TempDir tmp;
    auto [v, m] = synth_clip(21, 9, 32);
    write_clip(degrade_clip(v, sample_params(21)), frames_dir(tmp / "lq"));
    Checkpoint ck;
    ck.net = VelocityNet::initialized(1);
    ck.to_archive().save(tmp / "ck.vvt");

    REQUIRE(cli({"restore", "--ckpt", (tmp / "ck.vvt").string(), "--in", (tmp / "lq").string(), "--out",
                 (tmp / "out").string()}) == 0);
    const Video lq = read_clip(frames_dir(tmp / "lq"));
    const auto basis = make_basis();
    const Video expect = decode(encode(lq, basis), basis);
    const Video got = read_clip(frames_dir(tmp / "out"));
    REQUIRE(got.same_shape(lq));
    for (std::size_t i = 0; i < got.data.size(); ++i) REQUIRE(std::abs(got.data[i] - expect.data[i]) <= 1.0 / 510.0 + 1e-9);
    CHECK(listing(tmp / "out") == std::vector<std::string>{"frames"});

    const auto stats = restore_clip(tmp / "ck.vvt", tmp / "lq", tmp / "out2");
    CHECK(stats.forward_calls == 1);
    CHECK(read_text(frames_dir(tmp / "out") / "frame_00004.ppm") == read_text(frames_dir(tmp / "out2") / "frame_00004.ppm"));
}

TEST_CASE("eval subcommand writes the report") {
    TempDir tmp;
    auto [v, m] = synth_clip(2, 5, 16);
    write_clip(v, frames_dir(tmp / "ref" / "a"));
    write_clip(v, frames_dir(tmp / "test" / "a"));
    REQUIRE(cli({"eval", "--ref", (tmp / "ref").string(), "--test", (tmp / "test").string(), "--report",
                 (tmp / "r.json").string()}) == 0);
    const auto j = nlohmann::json::parse(read_text(tmp / "r.json"));
    CHECK(j.at("a").at("psnr") == 99.0);
}

TEST_CASE("curate with mock fixtures writes a manifest") {
    TempDir tmp;
    const std::vector<std::string> ids = {"valid_01", "valid_05", "mismatch_03", "malformed_02", "valid_09"};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto [v, m] = synth_clip(i, 5, 16);
        write_clip(v, frames_dir(tmp / "clips" / ids[i]));
        write_masks(m, masks_dir(tmp / "clips" / ids[i]));
    }
    // a clip whose masks are empty is reported, not assessed
    write_clip(Video(5, 16, 16, 0.5), frames_dir(tmp / "clips" / "blank"));
    write_masks(MaskStack(5, 16, 16), masks_dir(tmp / "clips" / "blank"));

    REQUIRE(cli({"curate", "--clips", (tmp / "clips").string(), "--mock", fixture_dir().string(), "--out",
                 (tmp / "manifest.json").string(), "--crop-dir", (tmp / "crops").string()}) == 0);
    const auto j = nlohmann::json::parse(read_text(tmp / "manifest.json"));
    CHECK(j.at("threshold") == 90);
    std::vector<std::string> retained;
    std::map<std::string, nlohmann::json> by_id;
    for (const auto& e : j.at("clips")) {
        by_id[e.at("clip_id")] = e;
        if (e.at("retained").get<bool>()) retained.push_back(e.at("clip_id"));
    }
    CHECK(retained == std::vector<std::string>{"mismatch_03", "valid_01"});
    CHECK(by_id.size() == 6);
    CHECK(by_id.at("malformed_02").at("error").get<std::string>().rfind("parse_error", 0) == 0);
    CHECK(by_id.at("blank").at("error").get<std::string>().rfind("empty_face", 0) == 0);
    CHECK(fs::exists(frames_dir(tmp / "crops" / "valid_01") / "frame_00000.ppm"));

    CHECK(cli({"curate", "--clips", (tmp / "clips").string(), "--out", (tmp / "m2.json").string()}) == 1);
}
