#include <doctest.h>

#include <phaco/config.hpp>
#include <phaco/error.hpp>
#include <phaco/io.hpp>
#include <phaco/rng.hpp>

#include "testutil.hpp"

#include <cmath>
#include <filesystem>
#include <string>

using phaco::BinaryMask;
using phaco::Config;
using phaco::Error;
using phaco::ErrorCode;
using phaco::GrayFrame;
using phaco::Mat;

namespace {

namespace fs = std::filesystem;

std::string scratch(const std::string& name) {
    fs::create_directories("io_scratch");
    return "io_scratch/" + name;
}

} // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("atomic write and read round-trip") {
    const std::string path = scratch("blob.bin");
    const std::string payload = std::string("abc\0def\n", 8) + "tail";
    phaco::io::atomic_write(path, payload);
    CHECK(phaco::io::read_file(path) == payload);
    CHECK_FALSE(fs::exists(path + ".tmp"));

    // Overwrite in place.
    phaco::io::atomic_write(path, "second");
    CHECK(phaco::io::read_file(path) == "second");

    CHECK_THROWS_AS(phaco::io::read_file(scratch("missing.bin")), Error);
    try {
        phaco::io::read_file(scratch("missing.bin"));
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoFailure);
    }
}

TEST_CASE("mask PGM round-trip and parsing") {
    phaco::rng::Xoshiro256pp g(71);
    BinaryMask m(33, 17);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) m.at(x, y) = g.uniform() < 0.4 ? 1 : 0;

    const std::string path = scratch("mask.pgm");
    phaco::io::write_mask_pgm(path, m);
    const BinaryMask back = phaco::io::read_mask_pgm(path);
    REQUIRE(back.width == m.width);
    REQUIRE(back.height == m.height);
    CHECK(back.bits == m.bits);

    // Comments and odd whitespace in the header are fine.
    const std::string crafted = scratch("crafted.pgm");
    std::string doc = "P5 # binary gray\n# a comment line\n 3\n2 # dims\n255\n";
    doc += std::string("\x00\xff\x10\x80\x7f\x01", 6);
    phaco::io::atomic_write(crafted, doc);
    const BinaryMask cm = phaco::io::read_mask_pgm(crafted);
    REQUIRE(cm.width == 3);
    REQUIRE(cm.height == 2);
    CHECK(cm.at(0, 0) == 0);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.at(0, 1) == 1); // 0x80 = 128 > 127
    CHECK(cm.at(1, 1) == 0); // 0x7f = 127

    const std::string bad = scratch("bad.pgm");
    phaco::io::atomic_write(bad, "P2\n3 2\n255\n0 0 0 0 0 0");
    CHECK_THROWS_AS(phaco::io::read_mask_pgm(bad), Error);
    phaco::io::atomic_write(bad, "P5\n3 2\n255\nab"); // truncated
    CHECK_THROWS_AS(phaco::io::read_mask_pgm(bad), Error);
    phaco::io::atomic_write(bad, "P5\n3 2\n65535\n......");
    CHECK_THROWS_AS(phaco::io::read_mask_pgm(bad), Error);
    try {
        phaco::io::read_mask_pgm(bad);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidFormat);
    }
}

TEST_CASE("gray PGM quantization round-trip") {
    GrayFrame f(16, 9);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            f.at(x, y) = static_cast<float>((x + y * f.width) % 256) / 255.0f;

    const std::string path = scratch("gray.pgm");
    phaco::io::write_gray_pgm(path, f);
    const GrayFrame back = phaco::io::read_gray_pgm(path);
    REQUIRE(back.width == f.width);
    REQUIRE(back.height == f.height);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            CHECK(back.at(x, y) == doctest::Approx(f.at(x, y)).epsilon(1e-7));

    // Arbitrary intensities survive within half a quantization step.
    GrayFrame g(8, 8);
    phaco::rng::Xoshiro256pp rng(72);
    for (auto& v : g.v) v = static_cast<float>(rng.uniform());
    phaco::io::write_gray_pgm(path, g);
    const GrayFrame gb = phaco::io::read_gray_pgm(path);
    for (size_t i = 0; i < g.v.size(); ++i)
        CHECK(std::abs(gb.v[i] - g.v[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("feature container round-trip and CSV fallback") {
    Mat rows(3, 4);
    for (size_t i = 0; i < rows.a.size(); ++i)
        rows.a[i] = static_cast<double>(static_cast<float>(0.25 * static_cast<double>(i) - 1.5));

    const std::string path = scratch("feat.bin");
    phaco::io::write_features(path, rows);
    const Mat back = phaco::io::read_features(path);
    REQUIRE(back.rows == 3);
    REQUIRE(back.cols == 4);
    CHECK(back.a == rows.a); // all values exactly representable in f32

    // CSV fallback.
    const std::string csv = scratch("feat.csv");
    phaco::io::atomic_write(csv, "1.5,2,-3\n4,5.25,6\n");
    const Mat tex = phaco::io::read_features(csv);
    REQUIRE(tex.rows == 2);
    REQUIRE(tex.cols == 3);
    CHECK(tex.at(0, 0) == 1.5);
    CHECK(tex.at(1, 2) == 6.0);

    phaco::io::atomic_write(csv, "1,2\n3\n");
    CHECK_THROWS_AS(phaco::io::read_features(csv), Error);

    // Corrupted binary payload length.
    std::string bytes = phaco::io::read_file(path);
    bytes.pop_back();
    phaco::io::atomic_write(path, bytes);
    CHECK_THROWS_AS(phaco::io::read_features(path), Error);
    try {
        phaco::io::read_features(path);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidFormat);
    }
}

TEST_CASE("config defaults, parsing, and round-trip") {
    const Config d = phaco::parse_config("");
    CHECK(d.d_raw == 2048);
    CHECK(d.kappa == 16);
    CHECK(d.tau == 20);
    CHECK(d.n_self == 4);
    CHECK(d.n_cross == 8);
    CHECK(d.heads == 8);
    CHECK(d.alpha == 0.6);
    CHECK(d.beta == 0.5);
    CHECK(d.k_s == 10);
    CHECK(d.curvature_threshold == 0.7);
    CHECK(d.curvature_norm_threshold == 2.0);
    CHECK(d.angular_bins == 720);
    CHECK(d.hysteresis_m == 3);
    CHECK(d.n_stale == 15);
    CHECK(d.cue.guideline_angle_primary == 95.0);
    CHECK(d.cue_colors.size() == 7);

    const std::string text =
        "# overrides\n"
        "kappa = 32\n"
        "tau=8\n"
        "  curvature_mode = exclude_below  \n"
        "ncc_floor = 0.35\n"
        "cue_color_rrl = #ff0000\n"
        "cue_map_2 = FLC , CCR , RRL\n"
        "guideline_ccw = 0\n";
    const Config c = phaco::parse_config(text);
    CHECK(c.kappa == 32);
    CHECK(c.tau == 8);
    CHECK(c.curvature_mode == "exclude_below");
    CHECK(c.ncc_floor == 0.35);
    CHECK(c.cue_colors[6] == "#ff0000");
    CHECK_FALSE(c.cue.guideline_ccw);
    const phaco::PhaseCueMap map = c.resolved_cue_map();
    CHECK(map.kinds[2] ==
          std::vector<phaco::CueKind>{phaco::CueKind::FLC, phaco::CueKind::CCR,
                                      phaco::CueKind::RRL});
    CHECK(map.kinds[0].size() == 6); // default incision entry untouched

    // Full round-trip through the text form.
    const Config rt = phaco::parse_config(phaco::config_to_text(c));
    CHECK(rt.kappa == c.kappa);
    CHECK(rt.tau == c.tau);
    CHECK(rt.alpha == c.alpha);
    CHECK(rt.fit.cost_tol == c.fit.cost_tol);
    CHECK(rt.ncc_floor == c.ncc_floor);
    CHECK(rt.cue_colors == c.cue_colors);
    CHECK(rt.resolved_cue_map().kinds == c.resolved_cue_map().kinds);

    CHECK_THROWS_AS(phaco::parse_config("no_such_key = 1\n"), Error);
    CHECK_THROWS_AS(phaco::parse_config("tau = soon\n"), Error);
    CHECK_THROWS_AS(phaco::parse_config("curvature_mode = sideways\n"), Error);
    CHECK_THROWS_AS(phaco::parse_config("kappa = 3\n"), Error); // does not divide 2048
    CHECK_THROWS_AS(phaco::parse_config("cue_map_99 = FLC\n"), Error);
    CHECK_THROWS_AS(phaco::parse_config("cue_map_1 = FLC,XYZ\n"), Error);
    CHECK_THROWS_AS(phaco::parse_config("just a line\n"), Error);
    try {
        phaco::parse_config("no_such_key = 1\n");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidConfig);
    }

    const std::string cfg_path = scratch("good.cfg");
    phaco::io::atomic_write(cfg_path, text);
    CHECK(phaco::load_config(cfg_path).kappa == 32);
    CHECK_THROWS_AS(phaco::load_config(scratch("nope.cfg")), Error);
}

TEST_CASE("manifest round-trip and validation") {
    // Real files so the existence check passes.
    const BinaryMask m = testutil::disk_mask(24, 24, 12, 12, 8);
    GrayFrame g(24, 24);
    phaco::io::write_mask_pgm(scratch("f0_mask.pgm"), m);
    phaco::io::write_mask_pgm(scratch("f1_mask.pgm"), m);
    phaco::io::write_gray_pgm(scratch("f0_gray.pgm"), g);
    phaco::io::write_gray_pgm(scratch("f1_gray.pgm"), g);

    phaco::io::Manifest man;
    man.k_s = 10;
    man.width = 24;
    man.height = 24;
    man.seed = 1234567890123ULL;
    phaco::io::ManifestFrame f0;
    f0.index = 0;
    f0.mask = "f0_mask.pgm";
    f0.gray = "f0_gray.pgm";
    f0.gt_phase = 2;
    f0.gt_theta = -12.5;
    phaco::io::ManifestFrame f1;
    f1.index = 1;
    f1.mask = "f1_mask.pgm";
    f1.gray = "f1_gray.pgm";
    man.frames = {f0, f1};

    const std::string path = scratch("session.json");
    phaco::io::save_manifest(man, path);
    const phaco::io::Manifest back = phaco::io::load_manifest(path);
    CHECK(back.k_s == 10);
    CHECK(back.width == 24);
    CHECK(back.seed == man.seed);
    REQUIRE(back.frames.size() == 2);
    CHECK(back.frames[0].mask == "f0_mask.pgm");
    REQUIRE(back.frames[0].gt_phase.has_value());
    CHECK(*back.frames[0].gt_phase == 2);
    REQUIRE(back.frames[0].gt_theta.has_value());
    CHECK(*back.frames[0].gt_theta == -12.5);
    CHECK_FALSE(back.frames[1].gt_phase.has_value());
    CHECK(back.frames[1].feature.empty());

    // Missing referenced file: rejected unless checks are off.
    phaco::io::Manifest ghost = man;
    ghost.frames[1].mask = "ghost.pgm";
    const std::string ghost_path = scratch("ghost.json");
    phaco::io::save_manifest(ghost, ghost_path);
    CHECK_THROWS_AS(phaco::io::load_manifest(ghost_path), Error);
    try {
        phaco::io::load_manifest(ghost_path);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoFailure);
        CHECK(std::string(e.what()).find("ghost.pgm") != std::string::npos);
    }
    CHECK(phaco::io::load_manifest(ghost_path, false).frames.size() == 2);

    // Non-increasing indices are rejected.
    phaco::io::Manifest bad = man;
    bad.frames[1].index = 0;
    const std::string bad_path = scratch("bad.json");
    phaco::io::save_manifest(bad, bad_path);
    CHECK_THROWS_AS(phaco::io::load_manifest(bad_path), Error);

    // Not JSON at all, and JSON with a missing section.
    phaco::io::atomic_write(bad_path, "not json");
    CHECK_THROWS_AS(phaco::io::load_manifest(bad_path), Error);
    phaco::io::atomic_write(bad_path, "{\"frames\": []}");
    CHECK_THROWS_AS(phaco::io::load_manifest(bad_path), Error);
    try {
        phaco::io::load_manifest(bad_path);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidFormat);
    }
}

TEST_SUITE_END();
