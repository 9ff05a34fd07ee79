#include <doctest.h>

#include <phaco/error.hpp>
#include <phaco/metrics.hpp>
#include <phaco/rng.hpp>
#include <phaco/svg.hpp>

#include "testutil.hpp"

#include <algorithm>
#include <string>
#include <vector>

using phaco::BinaryMask;
using phaco::ConfusionMatrix;
using phaco::Error;
using phaco::ErrorCode;
using phaco::PhaseMetrics;

namespace {

int count_occurrences(const std::string& hay, const std::string& needle) {
    int n = 0;
    for (size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

} // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("phase metrics on hand-checked confusion cases") {
    // Perfect agreement.
    const std::vector<int> gt = {0, 1, 2, 2, 1, 0};
    const PhaseMetrics perfect = phaco::phase_metrics(gt, gt, 3);
    CHECK(perfect.acc == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(perfect.pre == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(perfect.rec == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(perfect.jac == doctest::Approx(100.0).epsilon(1e-12));

    // The worked two-phase example.
    const PhaseMetrics m = phaco::phase_metrics({0, 1, 1, 1}, {0, 0, 1, 1}, 2);
    CHECK(m.acc == doctest::Approx(75.0).epsilon(1e-12));
    CHECK(m.pre == doctest::Approx(100.0 * (1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(m.rec == doctest::Approx(75.0).epsilon(1e-12));
    CHECK(m.jac == doctest::Approx(100.0 * (0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-12));

    // Constant prediction over balanced binary truth.
    const PhaseMetrics half = phaco::phase_metrics({0, 0, 0, 0}, {0, 1, 0, 1}, 2);
    CHECK(half.acc == doctest::Approx(50.0).epsilon(1e-12));

    // Phases absent from the ground truth do not enter the macro averages.
    const PhaseMetrics sub = phaco::phase_metrics({0, 1, 1, 1}, {0, 0, 1, 1}, 7);
    CHECK(sub.pre == doctest::Approx(m.pre).epsilon(1e-12));
    CHECK(sub.rec == doctest::Approx(m.rec).epsilon(1e-12));
    CHECK(sub.jac == doctest::Approx(m.jac).epsilon(1e-12));

    CHECK_THROWS_AS(phaco::phase_metrics({0, 1}, {0}, 2), Error);
    try {
        phaco::phase_metrics({0, 1}, {0}, 2);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LengthMismatch);
    }
    CHECK_THROWS_AS(phaco::phase_metrics({0, 5}, {0, 1}, 2), Error);
}

TEST_CASE("phase metrics are invariant under relabeling bijections") {
    phaco::rng::Xoshiro256pp g(404);
    std::vector<int> pred(400), gt(400);
    for (size_t i = 0; i < pred.size(); ++i) {
        gt[i] = static_cast<int>(g.below(5));
        pred[i] = g.uniform() < 0.7 ? gt[i] : static_cast<int>(g.below(5));
    }
    const PhaseMetrics base = phaco::phase_metrics(pred, gt, 5);

    const int relabel[5] = {3, 0, 4, 1, 2};
    std::vector<int> pred2(pred.size()), gt2(gt.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        pred2[i] = relabel[pred[i]];
        gt2[i] = relabel[gt[i]];
    }
    const PhaseMetrics shuffled = phaco::phase_metrics(pred2, gt2, 5);
    CHECK(shuffled.acc == doctest::Approx(base.acc).epsilon(1e-12));
    CHECK(shuffled.pre == doctest::Approx(base.pre).epsilon(1e-12));
    CHECK(shuffled.rec == doctest::Approx(base.rec).epsilon(1e-12));
    CHECK(shuffled.jac == doctest::Approx(base.jac).epsilon(1e-12));
}

TEST_CASE("metrics are recoverable from the confusion matrix alone") {
    phaco::rng::Xoshiro256pp g(405);
    std::vector<int> pred(200), gt(200);
    for (size_t i = 0; i < pred.size(); ++i) {
        gt[i] = static_cast<int>(g.below(4));
        pred[i] = g.uniform() < 0.6 ? gt[i] : static_cast<int>(g.below(4));
    }
    const ConfusionMatrix cm = phaco::confusion_matrix(pred, gt, 4);
    CHECK(cm.total() == 200);

    const PhaseMetrics direct = phaco::phase_metrics(pred, gt, 4);
    const PhaseMetrics via_cm = phaco::phase_metrics(cm);
    CHECK(direct.acc == via_cm.acc);
    CHECK(direct.pre == via_cm.pre);
    CHECK(direct.rec == via_cm.rec);
    CHECK(direct.jac == via_cm.jac);

    // CSV export: header + one row per phase, entries sum to the total.
    const std::string csv = cm.to_csv();
    CHECK(count_occurrences(csv, "\n") == 5);
    CHECK(csv.rfind("gt\\pred,0,1,2,3\n", 0) == 0);
}

TEST_CASE("dice overlap percentage") {
    const BinaryMask a = testutil::rect_mask(40, 40, 5, 5, 10, 10);
    CHECK(phaco::dice(a, a) == 100.0);

    // Disjoint squares.
    const BinaryMask b = testutil::rect_mask(40, 40, 20, 20, 10, 10);
    CHECK(phaco::dice(a, b) < 1e-6);

    // 100 px each, 50 px shared.
    const BinaryMask c = testutil::rect_mask(40, 40, 0, 0, 10, 10);
    const BinaryMask d = testutil::rect_mask(40, 40, 5, 0, 10, 10);
    CHECK(phaco::dice(c, d) == doctest::Approx(50.0).epsilon(1e-7));
    CHECK(phaco::dice(d, c) == doctest::Approx(phaco::dice(c, d)).epsilon(1e-15));

    // Both empty: perfect by convention.
    const BinaryMask e1(40, 40), e2(40, 40);
    CHECK(phaco::dice(e1, e2) == 100.0);

    CHECK_THROWS_AS(phaco::dice(a, BinaryMask(10, 10)), Error);
    try {
        phaco::dice(a, BinaryMask(10, 10));
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("rotation error statistics are wrap-aware") {
    const phaco::MeanSd zero = phaco::rotation_error({10, -20, 111}, {10, -20, 111});
    CHECK(zero.mean == 0.0);
    CHECK(zero.sd == 0.0);

    const phaco::MeanSd one = phaco::rotation_error({11, -19, 112}, {10, -20, 111});
    CHECK(one.mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(one.sd == doctest::Approx(0.0).epsilon(1e-9));

    // Circular wrap: 179 vs -179 differs by 2 degrees, not 358.
    const phaco::MeanSd wrap = phaco::rotation_error({-179}, {179});
    CHECK(wrap.mean == doctest::Approx(2.0).epsilon(1e-12));

    // Hand-computed mixed series: errors {1, 3}.
    const phaco::MeanSd mixed = phaco::rotation_error({1, 3}, {0, 0});
    CHECK(mixed.mean == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(mixed.sd == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(phaco::rotation_error({1.0}, {}), Error);
}

TEST_CASE("ribbon export run-length encodes both sequences") {
    const std::vector<std::string> palette = {"#111111", "#222222", "#333333"};

    // Single phase: exactly one rect per ribbon.
    const phaco::RibbonExport solo = phaco::ribbon_export({1, 1, 1, 1}, {1, 1, 1, 1}, palette);
    CHECK(count_occurrences(solo.svg, "<rect") == 2);
    CHECK(count_occurrences(solo.csv, "gt,0,4,1") == 1);
    CHECK(count_occurrences(solo.csv, "pred,0,4,1") == 1);

    // Alternating labels: one rect per frame.
    const std::vector<int> alt = {0, 1, 0, 1, 0};
    const phaco::RibbonExport ping = phaco::ribbon_export(alt, alt, palette);
    CHECK(count_occurrences(ping.svg, "<rect") == 10);

    // Random sequence against a direct run-count oracle.
    phaco::rng::Xoshiro256pp g(406);
    std::vector<int> pred(120), gt(120);
    for (size_t i = 0; i < pred.size(); ++i) {
        pred[i] = static_cast<int>(g.below(3));
        gt[i] = static_cast<int>(g.below(3));
    }
    int runs = 2; // first run of each sequence
    for (size_t i = 1; i < pred.size(); ++i) {
        runs += pred[i] != pred[i - 1] ? 1 : 0;
        runs += gt[i] != gt[i - 1] ? 1 : 0;
    }
    const phaco::RibbonExport r = phaco::ribbon_export(pred, gt, palette);
    CHECK(count_occurrences(r.svg, "<rect") == runs);
    CHECK(count_occurrences(r.csv, "\n") == runs + 1); // runs + header

    // A used phase without a color is an error.
    CHECK_THROWS_AS(phaco::ribbon_export({0, 2}, {0, 0}, {"#111111", ""}), Error);
    try {
        phaco::ribbon_export({0, 1}, {0, 0}, {"#111111", ""});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingColor);
    }
    CHECK_THROWS_AS(phaco::ribbon_export({0}, {0, 0}, palette), Error);
}

TEST_CASE("cue overlays render to SVG primitives") {
    const phaco::PhaseCueMap map = phaco::default_cue_map(10);
    phaco::CueInputs in;
    in.ellipse = phaco::EllipseParams{128, 128, 60, 48, 0.3};
    in.theta_deg = 12.0;

    const auto cues = phaco::cues_for_phase(0, map, in);
    const std::string doc =
        phaco::svg::render_cues(256, 256, cues, phaco::svg::default_palette());
    CHECK(doc.rfind("<svg", 0) == 0);
    CHECK(count_occurrences(doc, "<ellipse") == 1); // FLC
    CHECK(count_occurrences(doc, "<path") == 2);    // PIC + SIC
    CHECK(count_occurrences(doc, "<line") == 3);    // PIG + SIG + RRL

    const auto rhexis = phaco::cues_for_phase(2, map, in);
    const std::string doc2 =
        phaco::svg::render_cues(256, 256, rhexis, phaco::svg::default_palette());
    CHECK(count_occurrences(doc2, "<circle") == 1); // CCR

    CHECK_THROWS_AS(phaco::svg::render_cues(256, 256, cues, {"#fff"}), Error);
    try {
        phaco::svg::render_cues(256, 256, cues, {"#fff"});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingColor);
    }

    // Determinism: same inputs, same bytes.
    CHECK(phaco::svg::render_cues(256, 256, cues, phaco::svg::default_palette()) == doc);
}

TEST_SUITE_END();
