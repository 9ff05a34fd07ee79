#include <phaco/cues.hpp>

#include <phaco/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>

namespace phaco {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr int kArcTableSize = 8192;

// Cumulative arc length of e(t) over [0, 2pi], trapezoid rule. Monotone by
// construction, so inversion is an upper_bound plus a linear interpolation.
struct ArcTable {
    double dt;
    double total;
    std::vector<double> s; // s[i] = length over [0, i*dt]

    explicit ArcTable(const EllipseParams& e) {
        const double a = e.l_major, b = e.l_minor;
        auto speed = [&](double t) {
            const double st = std::sin(t), ct = std::cos(t);
            return std::sqrt(a * a * st * st + b * b * ct * ct);
        };
        dt = 2.0 * kPi / kArcTableSize;
        s.resize(kArcTableSize + 1);
        s[0] = 0.0;
        double prev = speed(0.0);
        for (int i = 1; i <= kArcTableSize; ++i) {
            const double cur = speed(i * dt);
            s[i] = s[i - 1] + 0.5 * dt * (prev + cur);
            prev = cur;
        }
        total = s.back();
    }

    double length_at(double t) const {
        const double u = t / dt;
        const int i = std::clamp(static_cast<int>(u), 0, kArcTableSize - 1);
        return s[i] + (u - i) * (s[i + 1] - s[i]);
    }

    // Parameter t (possibly outside [0, 2pi]) with cumulative length target.
    double param_at(double target) const {
        const double k = std::floor(target / total);
        double rem = target - k * total;
        rem = std::clamp(rem, 0.0, total);
        const auto it = std::upper_bound(s.begin(), s.end(), rem);
        const int i = std::clamp(static_cast<int>(it - s.begin()) - 1, 0, kArcTableSize - 1);
        const double seg = s[i + 1] - s[i];
        const double frac = seg > 0.0 ? (rem - s[i]) / seg : 0.0;
        return (i + frac) * dt + k * 2.0 * kPi;
    }
};

void require_valid_ellipse(const EllipseParams& e) {
    if (!(e.l_major > 0.0) || !(e.l_minor > 0.0))
        throw Error(ErrorCode::DegenerateGeometry, "cue geometry needs positive axes");
}

double segment_direction(const LineSegment& s) {
    const double dx = s.b.x - s.a.x, dy = s.b.y - s.a.y;
    if (dx * dx + dy * dy <= 0.0)
        throw Error(ErrorCode::NoIntersection, "zero-length guideline has no direction");
    return std::atan2(dy, dx);
}

// Parameter of the point where the ray from the ellipse center along dir
// crosses the ellipse.
double ray_param(const EllipseParams& e, double dir_x, double dir_y) {
    const double c = std::cos(e.phi), s = std::sin(e.phi);
    const double ex = c * dir_x + s * dir_y;  // R(-phi) * dir
    const double ey = -s * dir_x + c * dir_y;
    return std::atan2(ey / e.l_minor, ex / e.l_major);
}

} // namespace

PhaseCueMap default_cue_map(int k_s) {
    if (k_s < 1) throw Error(ErrorCode::InvalidConfig, "phase count must be positive");
    PhaseCueMap map;
    map.kinds.assign(k_s, {CueKind::FLC});
    if (k_s == 10) {
        map.kinds[0] = {CueKind::FLC, CueKind::PIG, CueKind::PIC,
                        CueKind::SIG, CueKind::SIC, CueKind::RRL}; // incision
        map.kinds[2] = {CueKind::FLC, CueKind::CCR};               // capsulorhexis
        map.kinds[7] = {CueKind::FLC, CueKind::RRL};               // lens implant
    }
    return map;
}

std::string phase_name(int id, int k_s) {
    static const std::array<const char*, 10> names = {
        "incision",           "VA injection", "capsulorhexis", "hydrodissection",
        "phacoemulsification", "irrigation",   "capsule polishing", "lens implant",
        "VA removal",         "tonifying"};
    if (id < 0 || id >= k_s) throw Error(ErrorCode::InvalidConfig, "phase id out of range");
    if (k_s == 10) return names[static_cast<size_t>(id)];
    return "phase " + std::to_string(id);
}

LineSegment rrl(const EllipseParams& e, double theta_deg) {
    require_valid_ellipse(e);
    const double t = theta_deg * kDegToRad;
    const double hx = 0.6 * e.l_major * std::cos(t);
    const double hy = 0.6 * e.l_major * std::sin(t);
    return {Vec2{e.ox - hx, e.oy - hy}, Vec2{e.ox + hx, e.oy + hy}};
}

LineSegment incision_guideline(const EllipseParams& e, const LineSegment& rotation_line,
                               GuidelineSide which, const CueConfig& cfg) {
    require_valid_ellipse(e);
    const double base = segment_direction(rotation_line);
    const double offset_deg = which == GuidelineSide::Primary ? cfg.guideline_angle_primary
                                                              : cfg.guideline_angle_secondary;
    const double dir = base + (cfg.guideline_ccw ? 1.0 : -1.0) * offset_deg * kDegToRad;
    const double len = 0.3 * (e.l_major + e.l_minor);
    return {Vec2{e.ox, e.oy}, Vec2{e.ox + len * std::cos(dir), e.oy + len * std::sin(dir)}};
}

EllipticalArc incision_curve(const EllipseParams& e, const LineSegment& guideline,
                             double arc_len_px) {
    require_valid_ellipse(e);
    const double dir = segment_direction(guideline);
    const ArcTable table(e);
    if (!(arc_len_px > 0.0) || arc_len_px >= table.total)
        throw Error(ErrorCode::InvalidConfig, "arc length must be in (0, perimeter)");
    double t0 = ray_param(e, std::cos(dir), std::sin(dir));
    if (t0 < 0.0) t0 += 2.0 * kPi;
    const double mid = table.length_at(t0);
    EllipticalArc arc;
    arc.ellipse = e;
    arc.t_start = table.param_at(mid - 0.5 * arc_len_px);
    arc.t_end = table.param_at(mid + 0.5 * arc_len_px);
    return arc;
}

Circle ccr(const EllipseParams& e) {
    require_valid_ellipse(e);
    return {Vec2{e.ox, e.oy}, 0.25 * (e.l_major + e.l_minor)};
}

Vec2 arc_point(const EllipticalArc& arc, double u) {
    return ellipse_point(arc.ellipse, arc.t_start + u * (arc.t_end - arc.t_start));
}

std::vector<VisualCue> cues_for_phase(int phase_id, const PhaseCueMap& map,
                                      const CueInputs& inputs, const CueConfig& cfg) {
    if (phase_id < 0 || phase_id >= static_cast<int>(map.kinds.size()))
        throw Error(ErrorCode::InvalidConfig, "cue map does not cover the phase");
    const std::vector<CueKind>& wanted = map.kinds[static_cast<size_t>(phase_id)];
    auto has = [&](CueKind k) { return std::find(wanted.begin(), wanted.end(), k) != wanted.end(); };

    const bool needs_theta = has(CueKind::RRL) || has(CueKind::PIG) || has(CueKind::SIG) ||
                             has(CueKind::PIC) || has(CueKind::SIC);
    if (needs_theta && !inputs.theta_deg)
        throw Error(ErrorCode::MissingInput, "phase cues need a rotation estimate");
    if (!wanted.empty()) require_valid_ellipse(inputs.ellipse);

    const EllipseParams& e = inputs.ellipse;
    const double axis_sum = e.l_major + e.l_minor;
    LineSegment rot_line{};
    LineSegment pig{}, sig{};
    if (needs_theta) {
        rot_line = rrl(e, *inputs.theta_deg);
        if (has(CueKind::PIG) || has(CueKind::PIC))
            pig = incision_guideline(e, rot_line, GuidelineSide::Primary, cfg);
        if (has(CueKind::SIG) || has(CueKind::SIC))
            sig = incision_guideline(e, rot_line, GuidelineSide::Secondary, cfg);
    }

    std::vector<VisualCue> out;
    auto emit = [&](CueKind k, CueGeometry g) {
        out.push_back(VisualCue{k, std::move(g), static_cast<int>(k)});
    };
    if (has(CueKind::FLC)) emit(CueKind::FLC, e);
    if (has(CueKind::CCR)) emit(CueKind::CCR, ccr(e));
    if (has(CueKind::PIC))
        emit(CueKind::PIC, incision_curve(e, pig, cfg.arc_fraction_primary * axis_sum));
    if (has(CueKind::SIC))
        emit(CueKind::SIC, incision_curve(e, sig, cfg.arc_fraction_secondary * axis_sum));
    if (has(CueKind::PIG)) emit(CueKind::PIG, pig);
    if (has(CueKind::SIG)) emit(CueKind::SIG, sig);
    if (has(CueKind::RRL)) emit(CueKind::RRL, rot_line);
    return out;
}

} // namespace phaco
