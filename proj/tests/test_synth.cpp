#include <doctest.h>

#include <phaco/error.hpp>
#include <phaco/geometry.hpp>
#include <phaco/polar.hpp>
#include <phaco/synth.hpp>

#include "testutil.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace phaco;

namespace {

// Independent re-derivation of the boundary distance used for the
// rasterization bound: first-order distance from the implicit equation.
double outline_distance(const EllipseParams& e, double x, double y) {
    const double c = std::cos(e.phi), s = std::sin(e.phi);
    const double dx = x - e.ox, dy = y - e.oy;
    const double px = c * dx + s * dy, py = -s * dx + c * dy;
    const double rho = std::hypot(px / e.l_major, py / e.l_minor);
    const double grad = std::hypot(px / (e.l_major * e.l_major),
                                   py / (e.l_minor * e.l_minor)) /
                        std::max(rho, 1e-12);
    return (rho - 1.0) / grad;
}

synth::SceneSpec base_spec() {
    synth::SceneSpec spec;
    spec.width = 128;
    spec.height = 128;
    spec.ellipse = EllipseParams{64.0, 64.0, 38.0, 38.0, 0.0};
    spec.seed = 42;
    return spec;
}

} // namespace

TEST_SUITE_BEGIN("synth");

TEST_CASE("clean scene: mask matches the ellipse within a pixel") {
    synth::SceneSpec spec = base_spec();
    spec.ellipse = EllipseParams{66.0, 61.0, 41.0, 33.0, 0.5};
    const synth::Scene scene = synth::gen_scene(spec, 1);

    REQUIRE(scene.frames.size() == 1);
    CHECK(scene.frames[0].mask.bits == scene.gt_mask.bits);

    const BinaryMask comp = largest_component(scene.frames[0].mask, 8);
    const Contour contour = trace_contour(comp);
    REQUIRE(contour.points.size() > 100);
    double worst = 0.0;
    for (const Pt& p : contour.points)
        worst = std::max(worst,
                         std::abs(outline_distance(spec.ellipse, double(p.x), double(p.y))));
    CHECK(worst <= 1.0);
}

TEST_CASE("same seed renders identical bytes; different seed differs") {
    synth::SceneSpec spec = base_spec();
    spec.sigma_mask = 1.0;
    spec.theta_deg = {0.0, 3.0, -2.0};
    const synth::Scene s1 = synth::gen_scene(spec, 3);
    const synth::Scene s2 = synth::gen_scene(spec, 3);
    REQUIRE(s1.frames.size() == s2.frames.size());
    for (size_t t = 0; t < s1.frames.size(); ++t) {
        CHECK(s1.frames[t].mask.bits == s2.frames[t].mask.bits);
        CHECK(s1.frames[t].gray.v == s2.frames[t].gray.v);
    }
    spec.seed = 43;
    const synth::Scene s3 = synth::gen_scene(spec, 3);
    CHECK(s3.frames[0].gray.v != s1.frames[0].gray.v);
}

TEST_CASE("scheduled rotation shows up as a circular shift in the polar patch") {
    synth::SceneSpec spec = base_spec(); // circular limbus: rotation == shift
    spec.theta_deg = {0.0, 7.0};
    const synth::Scene scene = synth::gen_scene(spec, 2);

    const AnnulusSpec ann = make_annulus(scene.gt_ellipse);
    const PolarPatch p0 = polar_unwrap(scene.frames[0].gray, ann, 720);
    const PolarPatch p1 = polar_unwrap(scene.frames[1].gray, ann, 720);
    REQUIRE(p0.deg_per_bin == doctest::Approx(0.5));

    // Frame-1 column a holds frame-0 content from column a - 14.
    const int shift = 14;
    double err = 0.0;
    long cnt = 0;
    for (int r = 0; r < p0.radial_bins; ++r)
        for (int a = 0; a < p0.angular_bins; ++a) {
            const int a0 = (a - shift + p0.angular_bins) % p0.angular_bins;
            if (!p0.is_valid(r, a0) || !p1.is_valid(r, a)) continue;
            err += std::abs(p1.at(r, a) - p0.at(r, a0));
            ++cnt;
        }
    REQUIRE(cnt > 1000);
    CHECK(err / double(cnt) <= 0.02); // bilinear interpolation error only

    const RotationEstimate est = estimate_rotation(p0, p1);
    CHECK(est.theta_deg == doctest::Approx(7.0).epsilon(0.05));
    CHECK_FALSE(est.low_confidence);
}

TEST_CASE("rotation oracle: identity, scripted angle, antisymmetry") {
    synth::SceneSpec spec = base_spec();
    spec.theta_deg = {0.0, 7.0};
    const synth::Scene scene = synth::gen_scene(spec, 2);
    const Vec2 c{spec.ellipse.ox, spec.ellipse.oy};
    const double mean_r = 0.5 * (spec.ellipse.l_major + spec.ellipse.l_minor);
    const double r_in = mean_r - mean_r / 3.0, r_out = mean_r + mean_r / 3.0;

    CHECK(synth::oracle_rotation(scene.frames[0].gray, scene.frames[0].gray, c, 0.5,
                                 r_in, r_out, 20.0) == doctest::Approx(0.0).epsilon(1e-12));

    const double fwd = synth::oracle_rotation(scene.frames[0].gray, scene.frames[1].gray,
                                              c, 0.1, r_in, r_out, 20.0);
    CHECK(std::abs(fwd - 7.0) <= 0.1 + 1e-9);
    const double bwd = synth::oracle_rotation(scene.frames[1].gray, scene.frames[0].gray,
                                              c, 0.1, r_in, r_out, 20.0);
    CHECK(std::abs(fwd + bwd) <= 0.1 + 1e-9);

    CHECK_THROWS_AS(synth::oracle_rotation(scene.frames[0].gray, scene.frames[1].gray,
                                           c, -1.0, r_in, r_out),
                    Error);
}

TEST_CASE("occluders and blur") {
    synth::SceneSpec spec = base_spec();
    spec.occluders.push_back({60, 20, 90, 70, 1, 2});
    const synth::Scene scene = synth::gen_scene(spec, 4);

    // Active frames: hole in the mask, dark gray inside the rect.
    CHECK(scene.frames[1].mask.at(75, 45) == 0);
    CHECK(scene.frames[2].mask.at(75, 45) == 0);
    CHECK(scene.frames[1].gray.at(75, 45) == doctest::Approx(0.15).epsilon(0.01));
    // Inactive frames untouched.
    CHECK(scene.frames[0].mask.at(75, 45) == 1);
    CHECK(scene.frames[3].mask.at(75, 45) == 1);

    synth::SceneSpec bspec = base_spec();
    bspec.blur = true;
    const synth::Scene blurred = synth::gen_scene(bspec, 1);
    const synth::Scene sharp = synth::gen_scene(base_spec(), 1);
    // Blur must reduce the gradient energy of the gray channel.
    auto grad_energy = [](const GrayFrame& f) {
        double acc = 0.0;
        for (int y = 0; y < f.height; ++y)
            for (int x = 0; x + 1 < f.width; ++x) {
                const double d = double(f.at(x + 1, y)) - double(f.at(x, y));
                acc += d * d;
            }
        return acc;
    };
    CHECK(grad_energy(blurred.frames[0].gray) < 0.75 * grad_energy(sharp.frames[0].gray));
    CHECK(blurred.frames[0].mask.bits == sharp.frames[0].mask.bits);
}

TEST_CASE("spiked contours mark their outliers") {
    const EllipseParams e{100.0, 90.0, 80.0, 62.0, 0.3};
    const synth::ContourSample cs = synth::spiked_contour(e, 200, 1.0, 5, 4, 20.0, 7);
    REQUIRE(cs.points.size() == 200);
    REQUIRE(cs.outlier.size() == 200);

    const long n_out = std::count(cs.outlier.begin(), cs.outlier.end(), char(1));
    CHECK(n_out <= 20);
    CHECK(n_out >= 12); // overlapping bursts may merge

    for (size_t i = 0; i < cs.points.size(); ++i) {
        const double d = outline_distance(e, cs.points[i].x, cs.points[i].y);
        if (cs.outlier[i])
            CHECK(d > 2.0); // displaced outward well beyond the noise
        else
            CHECK(std::abs(d) <= 5.0); // ~5 sigma
    }

    // Clean request reproduces the ellipse exactly.
    const synth::ContourSample clean = synth::spiked_contour(e, 64, 0.0, 0, 1, 0.0, 1);
    for (const Vec2& p : clean.points)
        CHECK(std::abs(outline_distance(e, p.x, p.y)) <= 1e-9);
    CHECK_THROWS_AS(synth::spiked_contour(e, 0, 0.0, 0, 1, 0.0, 1), Error);
}

TEST_CASE("feature generator: durations, separability, boundary noise") {
    synth::FeatureGenSpec spec;
    spec.k_s = 5;
    spec.d = 32;
    spec.seed = 11;
    spec.sigma = 0.0;
    spec.min_duration = 4;
    spec.max_duration = 9;
    const synth::FeatureDataset ds = synth::gen_features(spec, 3);
    REQUIRE(ds.sequences.size() == 3);
    REQUIRE(ds.labels.size() == 3);

    for (size_t i = 0; i < ds.sequences.size(); ++i) {
        const auto& lab = ds.labels[i];
        REQUIRE(int(ds.sequences[i].rows) == int(lab.size()));
        CHECK(ds.sequences[i].cols == 32);
        // Labels walk 0..k_s-1 in order with durations inside the range.
        int expect = 0, run = 0;
        for (size_t t = 0; t < lab.size(); ++t) {
            if (lab[t] != expect) {
                CHECK(lab[t] == expect + 1);
                CHECK(run >= spec.min_duration);
                CHECK(run <= spec.max_duration);
                expect = lab[t];
                run = 0;
            }
            ++run;
        }
        CHECK(run >= spec.min_duration);
        CHECK(run <= spec.max_duration);
        CHECK(expect == spec.k_s - 1);
    }

    // Zero sigma: every frame equals its phase center exactly, across
    // sequences. Capture centers from the first occurrences in sequence 0.
    std::vector<std::vector<double>> center(size_t(spec.k_s));
    for (size_t t = 0; t < ds.labels[0].size(); ++t) {
        auto& c = center[size_t(ds.labels[0][t])];
        if (!c.empty()) continue;
        c.resize(size_t(spec.d));
        for (int k = 0; k < spec.d; ++k) c[size_t(k)] = ds.sequences[0].at(int(t), k);
    }
    long mismatch = 0;
    for (size_t i = 0; i < ds.sequences.size(); ++i)
        for (size_t t = 0; t < ds.labels[i].size(); ++t)
            for (int k = 0; k < spec.d; ++k)
                if (ds.sequences[i].at(int(t), k) !=
                    center[size_t(ds.labels[i][t])][size_t(k)])
                    ++mismatch;
    CHECK(mismatch == 0);

    // Separable spec: 1-NN against another sequence's frames is >= 99%.
    synth::FeatureGenSpec sep = spec;
    sep.sigma = 0.1;
    const synth::FeatureDataset d2 = synth::gen_features(sep, 2);
    long hit = 0, total = 0;
    const Mat& train = d2.sequences[0];
    for (int t = 0; t < d2.sequences[1].rows; ++t) {
        double best = 1e300;
        int arg = -1;
        for (int u = 0; u < train.rows; ++u) {
            double dist = 0.0;
            for (int k = 0; k < sep.d; ++k) {
                const double dd = d2.sequences[1].at(t, k) - train.at(u, k);
                dist += dd * dd;
            }
            if (dist < best) {
                best = dist;
                arg = u;
            }
        }
        hit += d2.labels[0][size_t(arg)] == d2.labels[1][size_t(t)] ? 1 : 0;
        ++total;
    }
    CHECK(double(hit) / double(total) >= 0.99);

    // Boundary frames carry inflated spread; mid-phase frames do not.
    synth::FeatureGenSpec bd = spec;
    bd.sigma = 0.05;
    bd.boundary_width = 2;
    bd.boundary_sigma = 4.0;
    const synth::FeatureDataset d3 = synth::gen_features(bd, 1);
    const synth::FeatureDataset d3c = synth::gen_features(spec, 1); // same durations (same stream)
    REQUIRE(d3.labels[0] == d3c.labels[0]);
    const auto& lab = d3.labels[0];
    double mid_dev = 0.0, edge_dev = 0.0;
    long mid_n = 0, edge_n = 0;
    for (size_t t = 0; t < lab.size(); ++t) {
        const bool last_phase = lab[t] == bd.k_s - 1;
        const bool pre_boundary =
            t + 2 < lab.size() && (lab[t + 1] != lab[t] || lab[t + 2] != lab[t]);
        double dev = 0.0;
        for (int k = 0; k < bd.d; ++k) {
            const double dd = d3.sequences[0].at(int(t), k) - d3c.sequences[0].at(int(t), k);
            dev += dd * dd;
        }
        if (pre_boundary && !last_phase) {
            edge_dev += dev;
            ++edge_n;
        } else if (!pre_boundary) {
            mid_dev += dev;
            ++mid_n;
        }
    }
    REQUIRE(edge_n > 0);
    REQUIRE(mid_n > 0);
    CHECK(edge_dev / double(edge_n) > 25.0 * (mid_dev / double(mid_n) + 1e-9));

    synth::FeatureGenSpec bad = spec;
    bad.max_duration = 1;
    CHECK_THROWS_AS(synth::gen_features(bad, 1), Error);
}

TEST_CASE("ellipse oracle recovers exact points within the finest cell") {
    const EllipseParams truth{80.0, 75.0, 52.0, 40.0, 0.4};
    const synth::ContourSample cs = synth::spiked_contour(truth, 90, 0.0, 0, 1, 0.0, 1);

    synth::ParamBox box;
    box.lo = {72.0, 67.0, 44.0, 32.0, 0.1};
    box.hi = {88.0, 83.0, 60.0, 48.0, 0.7};
    const int g = 5;
    const EllipseParams est = synth::oracle_ellipse(cs.points, box, g);

    // Cell size at the third (finest) level: two shrinks of 2.4 cells each.
    auto final_cell = [&](int i) {
        double range = box.hi[size_t(i)] - box.lo[size_t(i)];
        for (int l = 0; l < 2; ++l) range = std::min(range, 2.4 * range / double(g - 1));
        return range / double(g - 1);
    };
    CHECK(std::abs(est.ox - truth.ox) <= final_cell(0));
    CHECK(std::abs(est.oy - truth.oy) <= final_cell(1));
    CHECK(std::abs(est.l_major - truth.l_major) <= final_cell(2));
    CHECK(std::abs(est.l_minor - truth.l_minor) <= final_cell(3));
    CHECK(std::abs(est.phi - truth.phi) <= final_cell(4));

    // The polyline cost at the estimate cannot beat the truth by much, and
    // both sit near zero for exact points.
    CHECK(synth::polyline_cost(cs.points, est) <= 0.02);
    CHECK(synth::polyline_cost(cs.points, truth) <= 0.01);

    // Circle degenerates to equal axes.
    const EllipseParams circle{60.0, 60.0, 30.0, 30.0, 0.0};
    const synth::ContourSample cc = synth::spiked_contour(circle, 80, 0.0, 0, 1, 0.0, 1);
    synth::ParamBox cbox;
    cbox.lo = {55.0, 55.0, 26.0, 26.0, -0.4};
    cbox.hi = {65.0, 65.0, 34.0, 34.0, 0.4};
    const EllipseParams cest = synth::oracle_ellipse(cc.points, cbox, 5);
    CHECK(std::abs(cest.l_major - cest.l_minor) <=
          final_cell(2) + final_cell(3));

    synth::ParamBox badbox = box;
    badbox.hi[0] = box.lo[0] - 1.0;
    CHECK_THROWS_AS(synth::oracle_ellipse(cs.points, badbox, 5), Error);
    CHECK_THROWS_AS(synth::oracle_ellipse(cs.points, box, 1), Error);
}

TEST_SUITE_END();
