#include <phaco/synth.hpp>

#include <phaco/error.hpp>
#include <phaco/rng.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace phaco::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Seed sub-streams. Per-frame streams leave room for 2^20 frames.
constexpr std::uint64_t kStreamTexture = 0;
constexpr std::uint64_t kStreamSpikes = 1;
constexpr std::uint64_t kStreamWobbleBase = 1u << 20;
constexpr std::uint64_t kStreamNoiseBase = 2u << 20;

double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

double wrap_pm_pi(double a) {
    a = std::fmod(a, kTwoPi);
    if (a > kPi) a -= kTwoPi;
    if (a < -kPi) a += kTwoPi;
    return a;
}

// Rotation-invariant iris/sclera texture stored as a polar lookup table so
// rendering a rotated frame is just a lookup at (r, alpha - theta). The
// table *is* the texture definition; every frame samples the same function.
struct PolarTexture {
    int n_rad = 0;
    int n_ang = 0;
    double r_max = 1.0;
    std::vector<float> v; // n_rad x n_ang, row = radius

    double sample(double r, double ang) const {
        double rr = r / r_max * double(n_rad - 1);
        rr = std::clamp(rr, 0.0, double(n_rad - 1));
        double aa = ang / kTwoPi * double(n_ang);
        aa -= std::floor(aa / double(n_ang)) * double(n_ang);
        const int r0 = std::min(int(rr), n_rad - 2);
        const int a0 = int(aa) % n_ang;
        const int a1 = (a0 + 1) % n_ang;
        const double fr = rr - r0;
        const double fa = aa - std::floor(aa);
        const double top = v[size_t(r0) * n_ang + a0] * (1.0 - fa) +
                           v[size_t(r0) * n_ang + a1] * fa;
        const double bot = v[size_t(r0 + 1) * n_ang + a0] * (1.0 - fa) +
                           v[size_t(r0 + 1) * n_ang + a1] * fa;
        return top * (1.0 - fr) + bot * fr;
    }
};

struct Streak {
    double angle;     // center, radians
    double width;     // Gaussian sigma, radians
    double amp;       // signed intensity bump
    double r0, r1;    // radial extent, px
};

PolarTexture build_texture(const SceneSpec& spec) {
    rng::Xoshiro256pp g(rng::sub_seed(spec.seed, kStreamTexture));
    const double mean_r = 0.5 * (spec.ellipse.l_major + spec.ellipse.l_minor);

    const int n_streaks = 24 + int(g.below(25));
    std::vector<Streak> streaks(n_streaks);
    for (auto& s : streaks) {
        s.angle = g.uniform(0.0, kTwoPi);
        s.width = g.uniform(0.5, 3.0) * kPi / 180.0;
        s.amp = g.uniform(-0.25, 0.35);
        s.r0 = g.uniform(0.60, 0.90) * mean_r;
        s.r1 = g.uniform(1.00, 1.45) * mean_r;
    }

    // Low-frequency cloudiness; integer angular frequency keeps the table
    // continuous across the wrap.
    struct Cloud {
        int m;
        double rq, pa, pr, amp;
    };
    std::array<Cloud, 4> clouds;
    for (auto& c : clouds) {
        c.m = g.range_int(1, 5);
        c.rq = g.uniform(0.5, 2.5);
        c.pa = g.uniform(0.0, kTwoPi);
        c.pr = g.uniform(0.0, kTwoPi);
        c.amp = 0.04;
    }

    PolarTexture t;
    t.n_rad = 512;
    t.n_ang = 2048;
    t.r_max = 0.5 * std::hypot(double(spec.width), double(spec.height)) + 2.0;
    t.v.resize(size_t(t.n_rad) * t.n_ang);

    for (int ri = 0; ri < t.n_rad; ++ri) {
        const double r = double(ri) / double(t.n_rad - 1) * t.r_max;
        // pupil -> iris -> sclera with a dark limbus ring at the rim
        double base = 0.15 + 0.30 * smoothstep(0.55 * mean_r - 2.0, 0.55 * mean_r + 2.0, r) +
                      0.35 * smoothstep(mean_r - 2.0, mean_r + 2.0, r);
        base -= 0.22 * std::exp(-0.5 * ((r - mean_r) / 3.5) * ((r - mean_r) / 3.5));
        for (int ai = 0; ai < t.n_ang; ++ai) {
            const double ang = double(ai) / double(t.n_ang) * kTwoPi;
            double val = base;
            for (const auto& s : streaks) {
                if (r < s.r0 - 3.0 || r > s.r1 + 3.0) continue;
                const double da = wrap_pm_pi(ang - s.angle);
                if (std::abs(da) > 4.0 * s.width) continue;
                const double win = smoothstep(s.r0 - 3.0, s.r0, r) *
                                   (1.0 - smoothstep(s.r1, s.r1 + 3.0, r));
                val += s.amp * win * std::exp(-0.5 * (da / s.width) * (da / s.width));
            }
            for (const auto& c : clouds)
                val += c.amp * std::cos(c.m * ang + c.pa) *
                       std::cos(c.rq * r / mean_r + c.pr);
            t.v[size_t(ri) * t.n_ang + ai] = float(std::clamp(val, 0.02, 0.98));
        }
    }
    return t;
}

// First-order signed distance to the ellipse outline in px (negative inside).
double signed_distance(const EllipseParams& e, double x, double y) {
    const double c = std::cos(e.phi), s = std::sin(e.phi);
    const double dx = x - e.ox, dy = y - e.oy;
    const double px = c * dx + s * dy;
    const double py = -s * dx + c * dy;
    const double qx = px / e.l_major, qy = py / e.l_minor;
    const double rho = std::hypot(qx, qy);
    if (rho < 1e-9) return -std::min(e.l_major, e.l_minor);
    const double grad = std::hypot(px / (e.l_major * e.l_major),
                                   py / (e.l_minor * e.l_minor)) /
                        rho;
    return (rho - 1.0) / grad;
}

struct RimSpike {
    double angle;
    double half_width; // radians
    double height;     // px, apex
};

double rim_offset(const std::vector<RimSpike>& spikes, double h1, double p1,
                  double h2, double p2, double sigma, double ang) {
    double d = sigma * (0.65 * std::sin(3.0 * ang + p1) * h1 +
                        0.35 * std::sin(7.0 * ang + p2) * h2);
    for (const auto& sp : spikes) {
        const double da = std::abs(wrap_pm_pi(ang - sp.angle));
        if (da < sp.half_width) d += sp.height * (1.0 - da / sp.half_width);
    }
    return d;
}

void box_blur_3x3(GrayFrame& f) {
    GrayFrame src = f;
    for (int y = 0; y < f.height; ++y) {
        for (int x = 0; x < f.width; ++x) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = std::clamp(y + dy, 0, f.height - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = std::clamp(x + dx, 0, f.width - 1);
                    acc += src.at(xx, yy);
                }
            }
            f.at(x, y) = float(acc / 9.0);
        }
    }
}

float quantize255(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return float(std::round(v * 255.0) / 255.0);
}

} // namespace

BinaryMask fill_ellipse_mask(int width, int height, const EllipseParams& e) {
    BinaryMask m(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            m.at(x, y) = signed_distance(e, double(x), double(y)) <= 0.0 ? 1 : 0;
    return m;
}

Scene gen_scene(const SceneSpec& spec, int frame_count) {
    if (frame_count < 0 || spec.width < 4 || spec.height < 4)
        throw Error(ErrorCode::InvalidConfig, "gen_scene: bad dimensions or frame count");
    if (!spec.theta_deg.empty() && int(spec.theta_deg.size()) != frame_count)
        throw Error(ErrorCode::InvalidConfig, "gen_scene: theta schedule length mismatch");
    if (!spec.phase.empty() && int(spec.phase.size()) != frame_count)
        throw Error(ErrorCode::InvalidConfig, "gen_scene: phase schedule length mismatch");
    if (spec.sigma_mask < 0.0 || spec.gray_noise < 0.0 || spec.spike_count < 0)
        throw Error(ErrorCode::InvalidConfig, "gen_scene: negative noise parameter");

    Scene out;
    out.gt_ellipse = spec.ellipse;
    out.gt_mask = fill_ellipse_mask(spec.width, spec.height, spec.ellipse);
    out.gt_theta_deg =
        spec.theta_deg.empty() ? std::vector<double>(size_t(frame_count), 0.0) : spec.theta_deg;
    out.gt_phase = spec.phase.empty() ? std::vector<int>(size_t(frame_count), 0) : spec.phase;

    const PolarTexture tex = build_texture(spec);

    rng::Xoshiro256pp sg(rng::sub_seed(spec.seed, kStreamSpikes));
    std::vector<RimSpike> spikes(size_t(spec.spike_count));
    for (auto& sp : spikes) {
        sp.angle = sg.uniform(0.0, kTwoPi);
        sp.half_width = spec.spike_half_width_deg * kPi / 180.0;
        sp.height = spec.spike_height * sg.uniform(0.75, 1.0);
    }

    out.frames.reserve(size_t(frame_count));
    for (int t = 0; t < frame_count; ++t) {
        rng::Xoshiro256pp wg(rng::sub_seed(spec.seed, kStreamWobbleBase + std::uint64_t(t)));
        const double h1 = wg.uniform(0.6, 1.0), p1 = wg.uniform(0.0, kTwoPi);
        const double h2 = wg.uniform(0.6, 1.0), p2 = wg.uniform(0.0, kTwoPi);
        const double theta = out.gt_theta_deg[size_t(t)] * kPi / 180.0;

        SceneFrame fr{BinaryMask(spec.width, spec.height), GrayFrame(spec.width, spec.height)};
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const double dx = double(x) - spec.ellipse.ox;
                const double dy = double(y) - spec.ellipse.oy;
                const double r = std::hypot(dx, dy);
                const double ang = std::atan2(dy, dx);
                fr.gray.at(x, y) = float(tex.sample(r, ang - theta));
                const double off =
                    rim_offset(spikes, h1, p1, h2, p2, spec.sigma_mask, ang);
                fr.mask.at(x, y) =
                    signed_distance(spec.ellipse, double(x), double(y)) <= off ? 1 : 0;
            }
        }

        for (const auto& oc : spec.occluders) {
            if (t < oc.first_frame || t > oc.last_frame) continue;
            const int x0 = std::max(0, oc.x0), x1 = std::min(spec.width, oc.x1);
            const int y0 = std::max(0, oc.y0), y1 = std::min(spec.height, oc.y1);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    fr.mask.at(x, y) = 0;
                    fr.gray.at(x, y) = 0.15f;
                }
        }

        if (spec.blur) box_blur_3x3(fr.gray);
        if (spec.gray_noise > 0.0) {
            rng::Xoshiro256pp ng(
                rng::sub_seed(spec.seed, kStreamNoiseBase + std::uint64_t(t)));
            for (auto& v : fr.gray.v) v += float(spec.gray_noise * ng.gaussian());
        }
        for (auto& v : fr.gray.v) v = quantize255(v);
        out.frames.push_back(std::move(fr));
    }
    return out;
}

ContourSample spiked_contour(const EllipseParams& e, int n, double sigma,
                             int spike_count, int spike_points,
                             double spike_height, std::uint64_t seed) {
    if (n < 1 || spike_points < 1 || spike_count < 0)
        throw Error(ErrorCode::InvalidConfig, "spiked_contour: bad counts");
    rng::Xoshiro256pp g(seed);
    ContourSample out;
    out.points.resize(size_t(n));
    out.outlier.assign(size_t(n), 0);
    const double c = std::cos(e.phi), s = std::sin(e.phi);
    for (int i = 0; i < n; ++i) {
        const double t = kTwoPi * double(i) / double(n);
        const double ex = e.l_major * std::cos(t), ey = e.l_minor * std::sin(t);
        out.points[size_t(i)] =
            Vec2{e.ox + c * ex - s * ey + sigma * g.gaussian(),
                 e.oy + s * ex + c * ey + sigma * g.gaussian()};
    }
    // One spike per equal slot of the contour, jittered within the slot's
    // front half: crowded spike pairs merge into wide humps whose interior
    // looks locally smooth, which defeats curvature-based screening and
    // makes the contamination rate unpredictable.
    const int slot = spike_count > 0 ? std::max(1, n / spike_count) : n;
    for (int k = 0; k < spike_count; ++k) {
        const int jitter = int(g.below(std::uint64_t(std::max(1, slot / 2))));
        const int start = (k * slot + jitter) % n;
        const double mid = 0.5 * (spike_points - 1);
        for (int j = 0; j < spike_points; ++j) {
            const int i = (start + j) % n;
            const double tri = 1.0 - std::abs(double(j) - mid) / (mid + 1.0);
            Vec2& p = out.points[size_t(i)];
            const double ux = p.x - e.ox, uy = p.y - e.oy;
            const double len = std::hypot(ux, uy);
            if (len < 1e-9) continue;
            p.x += spike_height * tri * ux / len;
            p.y += spike_height * tri * uy / len;
            out.outlier[size_t(i)] = 1;
        }
    }
    return out;
}

FeatureDataset gen_features(const FeatureGenSpec& spec, int sequence_count) {
    if (spec.k_s < 2 || spec.d < 1 || sequence_count < 1 || spec.min_duration < 1 ||
        spec.max_duration < spec.min_duration || spec.sigma < 0.0 ||
        spec.boundary_sigma < 0.0 || spec.boundary_width < 0)
        throw Error(ErrorCode::InvalidConfig, "gen_features: invalid spec");

    rng::Xoshiro256pp cg(rng::sub_seed(spec.seed, 0));
    Mat centers(spec.k_s, spec.d);
    for (auto& v : centers.a) v = spec.center_scale * cg.gaussian();

    FeatureDataset out;
    for (int si = 0; si < sequence_count; ++si) {
        rng::Xoshiro256pp g(rng::sub_seed(spec.seed, 16 + std::uint64_t(si)));
        std::vector<int> dur(size_t(spec.k_s));
        int total = 0;
        for (auto& d : dur) {
            d = g.range_int(spec.min_duration, spec.max_duration);
            total += d;
        }
        Mat seq(total, spec.d);
        std::vector<int> lab(static_cast<size_t>(total));
        int t = 0;
        for (int s = 0; s < spec.k_s; ++s) {
            for (int j = 0; j < dur[size_t(s)]; ++j, ++t) {
                const int remain = dur[size_t(s)] - 1 - j;
                double extra = 0.0;
                if (spec.boundary_width > 0 && remain < spec.boundary_width &&
                    s + 1 < spec.k_s)
                    extra = spec.boundary_sigma *
                            double(spec.boundary_width - remain) /
                            double(spec.boundary_width);
                const double sd = spec.sigma + extra;
                for (int k = 0; k < spec.d; ++k)
                    seq.at(t, k) = centers.at(s, k) + sd * g.gaussian();
                lab[size_t(t)] = s;
            }
        }
        out.sequences.push_back(std::move(seq));
        out.labels.push_back(std::move(lab));
    }
    return out;
}

double oracle_rotation(const GrayFrame& a, const GrayFrame& b, Vec2 center,
                       double step_deg, double r_in, double r_out,
                       double range_deg) {
    if (step_deg <= 0.0 || r_out <= r_in || range_deg <= 0.0)
        throw Error(ErrorCode::InvalidConfig, "oracle_rotation: bad search parameters");
    if (a.width != b.width || a.height != b.height)
        throw Error(ErrorCode::ShapeMismatch, "oracle_rotation: frame sizes differ");

    struct Px {
        double dx, dy;
        float ref;
    };
    std::vector<Px> ring;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            const double dx = double(x) - center.x, dy = double(y) - center.y;
            const double r = std::hypot(dx, dy);
            if (r >= r_in && r <= r_out) ring.push_back({dx, dy, a.at(x, y)});
        }
    if (ring.empty())
        throw Error(ErrorCode::DegenerateAnnulus, "oracle_rotation: empty annulus");

    double best_theta = 0.0, best_cost = std::numeric_limits<double>::infinity();
    const int steps = int(std::floor(2.0 * range_deg / step_deg));
    for (int i = 0; i < steps; ++i) {
        const double theta = -range_deg + double(i) * step_deg;
        const double cc = std::cos(theta * kPi / 180.0);
        const double ss = std::sin(theta * kPi / 180.0);
        double ssd = 0.0;
        long cnt = 0;
        for (const auto& p : ring) {
            const double sx = center.x + cc * p.dx - ss * p.dy;
            const double sy = center.y + ss * p.dx + cc * p.dy;
            double v;
            if (!bilinear_sample(b, sx, sy, v)) continue;
            const double d = v - double(p.ref);
            ssd += d * d;
            ++cnt;
        }
        if (cnt == 0) continue;
        const double cost = ssd / double(cnt);
        if (cost < best_cost) {
            best_cost = cost;
            best_theta = theta;
        }
    }
    return best_theta;
}

namespace {

double seg_dist2(const Vec2& p, const Vec2& a, const Vec2& b) {
    const double abx = b.x - a.x, aby = b.y - a.y;
    const double l2 = abx * abx + aby * aby;
    double u = 0.0;
    if (l2 > 0.0) u = std::clamp(((p.x - a.x) * abx + (p.y - a.y) * aby) / l2, 0.0, 1.0);
    const double dx = p.x - (a.x + u * abx), dy = p.y - (a.y + u * aby);
    return dx * dx + dy * dy;
}

constexpr int kOutlineVerts = 64;

struct UnitRing {
    std::array<double, kOutlineVerts> ct{}, st{};
    UnitRing() {
        for (int i = 0; i < kOutlineVerts; ++i) {
            ct[size_t(i)] = std::cos(kTwoPi * double(i) / kOutlineVerts);
            st[size_t(i)] = std::sin(kTwoPi * double(i) / kOutlineVerts);
        }
    }
};

} // namespace

double polyline_cost(const std::vector<Vec2>& points, const EllipseParams& e) {
    static const UnitRing ring;
    std::array<double, kOutlineVerts> vx{}, vy{};
    const double c = std::cos(e.phi), s = std::sin(e.phi);
    for (int i = 0; i < kOutlineVerts; ++i) {
        const double ex = e.l_major * ring.ct[size_t(i)];
        const double ey = e.l_minor * ring.st[size_t(i)];
        vx[size_t(i)] = e.ox + c * ex - s * ey;
        vy[size_t(i)] = e.oy + s * ex + c * ey;
    }
    if (points.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& p : points) {
        const double dx = p.x - e.ox, dy = p.y - e.oy;
        const double px = c * dx + s * dy, py = -s * dx + c * dy;
        const double t = std::atan2(e.l_major * py, e.l_minor * px);
        int i0 = int(std::lround(t / kTwoPi * kOutlineVerts));
        i0 = ((i0 % kOutlineVerts) + kOutlineVerts) % kOutlineVerts;
        double best = std::numeric_limits<double>::infinity();
        for (int w = -4; w < 4; ++w) {
            const int i = ((i0 + w) % kOutlineVerts + kOutlineVerts) % kOutlineVerts;
            const int j = (i + 1) % kOutlineVerts;
            best = std::min(best, seg_dist2(p, Vec2{vx[size_t(i)], vy[size_t(i)]},
                                            Vec2{vx[size_t(j)], vy[size_t(j)]}));
        }
        acc += best;
    }
    return acc / double(points.size());
}

EllipseParams oracle_ellipse(const std::vector<Vec2>& points,
                             const ParamBox& bounds, int grid_per_dim) {
    if (grid_per_dim < 2)
        throw Error(ErrorCode::InvalidConfig, "oracle_ellipse: grid_per_dim < 2");
    for (int i = 0; i < 5; ++i)
        if (!(bounds.lo[size_t(i)] <= bounds.hi[size_t(i)]))
            throw Error(ErrorCode::InvalidConfig, "oracle_ellipse: inverted bounds");

    std::array<double, 5> lo = bounds.lo, hi = bounds.hi, best{};
    for (int i = 0; i < 5; ++i) best[size_t(i)] = 0.5 * (lo[size_t(i)] + hi[size_t(i)]);
    double best_cost = std::numeric_limits<double>::infinity();

    std::array<std::vector<double>, 5> axis;
    for (int level = 0; level < 3; ++level) {
        for (int i = 0; i < 5; ++i) {
            axis[size_t(i)].clear();
            for (int k = 0; k < grid_per_dim; ++k)
                axis[size_t(i)].push_back(
                    lo[size_t(i)] + (hi[size_t(i)] - lo[size_t(i)]) * double(k) /
                                        double(grid_per_dim - 1));
        }
        for (double cx : axis[0])
            for (double cy : axis[1])
                for (double la : axis[2])
                    for (double lb : axis[3])
                        for (double ph : axis[4]) {
                            if (la <= 1e-3 || lb <= 1e-3) continue;
                            const double cost = polyline_cost(
                                points, EllipseParams{cx, cy, la, lb, ph});
                            if (cost < best_cost) {
                                best_cost = cost;
                                best = {cx, cy, la, lb, ph};
                            }
                        }
        for (int i = 0; i < 5; ++i) {
            const double cell =
                (hi[size_t(i)] - lo[size_t(i)]) / double(grid_per_dim - 1);
            const double half = 1.2 * cell;
            lo[size_t(i)] = std::max(bounds.lo[size_t(i)], best[size_t(i)] - half);
            hi[size_t(i)] = std::min(bounds.hi[size_t(i)], best[size_t(i)] + half);
        }
    }
    return EllipseParams{best[0], best[1], best[2], best[3], best[4]};
}

} // namespace phaco::synth
