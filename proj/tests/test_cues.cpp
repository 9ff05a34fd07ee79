#include <doctest.h>

#include <phaco/cues.hpp>
#include <phaco/error.hpp>

#include <cmath>
#include <vector>

using phaco::CueConfig;
using phaco::CueInputs;
using phaco::CueKind;
using phaco::EllipseParams;
using phaco::EllipticalArc;
using phaco::Error;
using phaco::ErrorCode;
using phaco::GuidelineSide;
using phaco::LineSegment;
using phaco::Vec2;
using phaco::VisualCue;

namespace {

constexpr double kPi = 3.14159265358979323846;

double seg_len(const LineSegment& s) { return std::hypot(s.b.x - s.a.x, s.b.y - s.a.y); }

double seg_dir_deg(const LineSegment& s) {
    return std::atan2(s.b.y - s.a.y, s.b.x - s.a.x) * 180.0 / kPi;
}

double wrap_deg(double d) {
    while (d > 180.0) d -= 360.0;
    while (d <= -180.0) d += 360.0;
    return d;
}

// Independent arc-length oracle: dense polyline over the arc's parameter
// interval.
double polyline_arc_length(const EllipticalArc& arc, int samples = 20000) {
    double len = 0;
    Vec2 prev = phaco::arc_point(arc, 0.0);
    for (int i = 1; i <= samples; ++i) {
        const Vec2 p = phaco::arc_point(arc, static_cast<double>(i) / samples);
        len += std::hypot(p.x - prev.x, p.y - prev.y);
        prev = p;
    }
    return len;
}

// Point halfway along the arc by accumulated length, not by parameter.
Vec2 arc_length_midpoint(const EllipticalArc& arc, int samples = 20000) {
    std::vector<double> cum(samples + 1, 0.0);
    std::vector<Vec2> pts(samples + 1);
    pts[0] = phaco::arc_point(arc, 0.0);
    for (int i = 1; i <= samples; ++i) {
        pts[i] = phaco::arc_point(arc, static_cast<double>(i) / samples);
        cum[i] = cum[i - 1] + std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
    }
    const double half = 0.5 * cum[samples];
    for (int i = 1; i <= samples; ++i)
        if (cum[i] >= half) {
            const double f = (half - cum[i - 1]) / (cum[i] - cum[i - 1]);
            return Vec2{pts[i - 1].x + f * (pts[i].x - pts[i - 1].x),
                        pts[i - 1].y + f * (pts[i].y - pts[i - 1].y)};
        }
    return pts[samples];
}

double implicit_residual(const EllipseParams& e, const Vec2& p) {
    const double c = std::cos(e.phi), s = std::sin(e.phi);
    const double ux = c * (p.x - e.ox) + s * (p.y - e.oy);
    const double uy = -s * (p.x - e.ox) + c * (p.y - e.oy);
    return std::abs((ux / e.l_major) * (ux / e.l_major) + (uy / e.l_minor) * (uy / e.l_minor) -
                    1.0);
}

bool has_kind(const std::vector<VisualCue>& cues, CueKind k) {
    for (const VisualCue& c : cues)
        if (c.kind == k) return true;
    return false;
}

} // namespace

TEST_SUITE_BEGIN("cues");

TEST_CASE("rotation reference line geometry") {
    const EllipseParams e{320, 240, 100, 80, 0};
    const LineSegment flat = phaco::rrl(e, 0.0);
    CHECK(flat.a.x == doctest::Approx(260).epsilon(1e-12));
    CHECK(flat.a.y == doctest::Approx(240).epsilon(1e-12));
    CHECK(flat.b.x == doctest::Approx(380).epsilon(1e-12));
    CHECK(flat.b.y == doctest::Approx(240).epsilon(1e-12));

    const LineSegment vert = phaco::rrl(e, 90.0);
    CHECK(vert.a.x == doctest::Approx(320).epsilon(1e-12));
    CHECK(vert.a.y == doctest::Approx(180).epsilon(1e-9));
    CHECK(vert.b.y == doctest::Approx(300).epsilon(1e-9));

    for (double th : {-171.0, -45.0, 12.5, 33.0, 88.0, 179.0})
        CHECK(seg_len(phaco::rrl(e, th)) == doctest::Approx(120.0).epsilon(1e-9));
}

TEST_CASE("incision guidelines branch off the rotation line") {
    const EllipseParams e{320, 240, 100, 80, 0.3};
    const LineSegment rot = phaco::rrl(e, 20.0);
    const LineSegment pig = phaco::incision_guideline(e, rot, GuidelineSide::Primary);
    const LineSegment sig = phaco::incision_guideline(e, rot, GuidelineSide::Secondary);

    CHECK(pig.a.x == doctest::Approx(320).epsilon(1e-12));
    CHECK(pig.a.y == doctest::Approx(240).epsilon(1e-12));
    CHECK(seg_len(pig) == doctest::Approx(54.0).epsilon(1e-9)); // 0.3 * 180
    CHECK(seg_len(sig) == doctest::Approx(54.0).epsilon(1e-9));
    CHECK(wrap_deg(seg_dir_deg(pig) - 20.0) == doctest::Approx(95.0).epsilon(1e-9));
    CHECK(wrap_deg(seg_dir_deg(sig) - seg_dir_deg(pig)) == doctest::Approx(80.0).epsilon(1e-9));

    // Flipping the convention mirrors the offset.
    CueConfig cw;
    cw.guideline_ccw = false;
    const LineSegment mirrored = phaco::incision_guideline(e, rot, GuidelineSide::Primary, cw);
    CHECK(wrap_deg(seg_dir_deg(mirrored) - 20.0) == doctest::Approx(-95.0).epsilon(1e-9));

    CHECK_THROWS_AS(phaco::incision_guideline(e, LineSegment{{1, 1}, {1, 1}},
                                              GuidelineSide::Primary),
                    Error);
    try {
        phaco::incision_guideline(e, LineSegment{{1, 1}, {1, 1}}, GuidelineSide::Primary);
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::NoIntersection);
    }
}

TEST_CASE("incision curve on a circle has exact angular extent") {
    const EllipseParams e{0, 0, 100, 100, 0};
    const double az = 30.0 * kPi / 180.0;
    const LineSegment guide{{0, 0}, {std::cos(az), std::sin(az)}};
    const EllipticalArc arc = phaco::incision_curve(e, guide, 40.0);
    CHECK(arc.t_end - arc.t_start == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(0.5 * (arc.t_start + arc.t_end) == doctest::Approx(az).epsilon(1e-9));
}

TEST_CASE("incision curve arc length and centering on an ellipse") {
    const EllipseParams e{50, -20, 100, 80, 0.7};
    for (double az_deg : {10.0, 95.0, 200.0, 281.0}) {
        const double az = az_deg * kPi / 180.0;
        const LineSegment guide{{e.ox, e.oy}, {e.ox + std::cos(az), e.oy + std::sin(az)}};
        const EllipticalArc arc = phaco::incision_curve(e, guide, 70.0);
        CHECK(arc.t_end > arc.t_start);

        // Recovered length within 0.5% of the request (dense polyline oracle).
        CHECK(polyline_arc_length(arc) == doctest::Approx(70.0).epsilon(5e-3));

        // The halfway-by-length point sits on the guideline ray.
        const Vec2 mid = arc_length_midpoint(arc);
        const double rx = mid.x - e.ox, ry = mid.y - e.oy;
        const double cross = rx * std::sin(az) - ry * std::cos(az);
        CHECK(std::abs(cross) <= 1e-4);
        CHECK(rx * std::cos(az) + ry * std::sin(az) > 0.0);

        // Every sampled arc point satisfies the ellipse equation.
        for (int i = 0; i <= 50; ++i)
            CHECK(implicit_residual(e, phaco::arc_point(arc, i / 50.0)) <= 1e-6);
    }

    const LineSegment guide{{e.ox, e.oy}, {e.ox + 1, e.oy}};
    CHECK_THROWS_AS(phaco::incision_curve(e, guide, 1e9), Error);
    CHECK_THROWS_AS(phaco::incision_curve(e, guide, 0.0), Error);
    try {
        phaco::incision_curve(e, guide, 1e9);
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::InvalidConfig);
    }
}

TEST_CASE("rhexis circle") {
    const EllipseParams e{320, 240, 100, 80, 0.4};
    const phaco::Circle c = phaco::ccr(e);
    CHECK(c.radius == doctest::Approx(45.0).epsilon(1e-12));
    CHECK(c.center.x == 320.0);
    CHECK(c.center.y == 240.0);

    const EllipseParams round{10, 10, 64, 64, 0};
    CHECK(phaco::ccr(round).radius == doctest::Approx(32.0).epsilon(1e-12));
}

TEST_CASE("default cue map and phase names") {
    const phaco::PhaseCueMap map = phaco::default_cue_map(10);
    REQUIRE(map.kinds.size() == 10);
    CHECK(map.kinds[0].size() == 6);
    CHECK(map.kinds[2] == std::vector<CueKind>{CueKind::FLC, CueKind::CCR});
    CHECK(map.kinds[7] == std::vector<CueKind>{CueKind::FLC, CueKind::RRL});
    for (int p : {1, 3, 4, 5, 6, 8, 9})
        CHECK(map.kinds[static_cast<size_t>(p)] == std::vector<CueKind>{CueKind::FLC});

    const phaco::PhaseCueMap small = phaco::default_cue_map(4);
    for (const auto& entry : small.kinds) CHECK(entry == std::vector<CueKind>{CueKind::FLC});

    CHECK(phaco::phase_name(0, 10) == "incision");
    CHECK(phaco::phase_name(2, 10) == "capsulorhexis");
    CHECK(phaco::phase_name(7, 10) == "lens implant");
    CHECK(phaco::phase_name(9, 10) == "tonifying");
    CHECK(phaco::phase_name(1, 3) == "phase 1");
    CHECK_THROWS_AS(phaco::phase_name(10, 10), Error);
}

TEST_CASE("cues_for_phase emits the mapped kinds in canonical order") {
    const phaco::PhaseCueMap map = phaco::default_cue_map(10);
    CueInputs in;
    in.ellipse = EllipseParams{320, 240, 100, 80, 0.2};
    in.theta_deg = 14.0;

    const std::vector<VisualCue> incision = phaco::cues_for_phase(0, map, in);
    REQUIRE(incision.size() == 6);
    const CueKind order[] = {CueKind::FLC, CueKind::PIC, CueKind::SIC,
                             CueKind::PIG, CueKind::SIG, CueKind::RRL};
    for (size_t i = 0; i < incision.size(); ++i) {
        CHECK(incision[i].kind == order[i]);
        CHECK(incision[i].color_id == static_cast<int>(incision[i].kind));
    }
    CHECK(std::holds_alternative<EllipseParams>(incision[0].geometry));
    CHECK(std::holds_alternative<EllipticalArc>(incision[1].geometry));
    CHECK(std::holds_alternative<EllipticalArc>(incision[2].geometry));
    CHECK(std::holds_alternative<LineSegment>(incision[3].geometry));
    CHECK(std::holds_alternative<LineSegment>(incision[4].geometry));
    CHECK(std::holds_alternative<LineSegment>(incision[5].geometry));

    // Kinds equal the map entry as a set, for every phase.
    for (int p = 0; p < 10; ++p) {
        const auto cues = phaco::cues_for_phase(p, map, in);
        REQUIRE(cues.size() == map.kinds[static_cast<size_t>(p)].size());
        for (CueKind k : map.kinds[static_cast<size_t>(p)]) CHECK(has_kind(cues, k));
    }

    // Capsulorhexis needs no rotation estimate and includes the circle.
    CueInputs no_theta;
    no_theta.ellipse = in.ellipse;
    const auto rhexis = phaco::cues_for_phase(2, map, no_theta);
    CHECK(has_kind(rhexis, CueKind::CCR));
    CHECK(std::holds_alternative<phaco::Circle>(rhexis[1].geometry));

    // Theta-dependent phases without an estimate are refused.
    CHECK_THROWS_AS(phaco::cues_for_phase(7, map, no_theta), Error);
    try {
        phaco::cues_for_phase(7, map, no_theta);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingInput);
    }

    // An empty map entry yields an empty list; a missing one is an error.
    phaco::PhaseCueMap custom;
    custom.kinds = {{}};
    CHECK(phaco::cues_for_phase(0, custom, no_theta).empty());
    CHECK_THROWS_AS(phaco::cues_for_phase(1, custom, in), Error);
}

TEST_CASE("cue geometry is translation-equivariant") {
    const phaco::PhaseCueMap map = phaco::default_cue_map(10);
    CueInputs base;
    base.ellipse = EllipseParams{300, 200, 90, 70, 0.5};
    base.theta_deg = 27.0;
    CueInputs moved = base;
    const double dx = 13.5, dy = -7.25;
    moved.ellipse.ox += dx;
    moved.ellipse.oy += dy;

    const auto a = phaco::cues_for_phase(0, map, base);
    const auto b = phaco::cues_for_phase(0, map, moved);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].kind == b[i].kind);
        if (const auto* s = std::get_if<LineSegment>(&a[i].geometry)) {
            const auto& t = std::get<LineSegment>(b[i].geometry);
            CHECK(t.a.x - s->a.x == doctest::Approx(dx).epsilon(1e-9));
            CHECK(t.a.y - s->a.y == doctest::Approx(dy).epsilon(1e-9));
            CHECK(t.b.x - s->b.x == doctest::Approx(dx).epsilon(1e-9));
            CHECK(t.b.y - s->b.y == doctest::Approx(dy).epsilon(1e-9));
        } else if (const auto* arc = std::get_if<EllipticalArc>(&a[i].geometry)) {
            const auto& t = std::get<EllipticalArc>(b[i].geometry);
            CHECK(t.t_start == doctest::Approx(arc->t_start).epsilon(1e-9));
            CHECK(t.t_end == doctest::Approx(arc->t_end).epsilon(1e-9));
            CHECK(t.ellipse.ox - arc->ellipse.ox == doctest::Approx(dx).epsilon(1e-12));
        }
    }
}

TEST_CASE("adding delta to theta rotates the line cues by exactly delta") {
    const EllipseParams e{320, 240, 100, 80, 0.2};
    const phaco::PhaseCueMap map = phaco::default_cue_map(10);
    for (double delta : {5.0, 33.0, -40.0}) {
        CueInputs in0, in1;
        in0.ellipse = in1.ellipse = e;
        in0.theta_deg = 10.0;
        in1.theta_deg = 10.0 + delta;
        const auto a = phaco::cues_for_phase(0, map, in0);
        const auto b = phaco::cues_for_phase(0, map, in1);
        for (size_t i = 0; i < a.size(); ++i) {
            const auto* s0 = std::get_if<LineSegment>(&a[i].geometry);
            if (!s0) continue;
            const auto& s1 = std::get<LineSegment>(b[i].geometry);
            CHECK(wrap_deg(seg_dir_deg(s1) - seg_dir_deg(*s0)) ==
                  doctest::Approx(delta).epsilon(1e-9));
        }
    }
}

TEST_SUITE_END();
