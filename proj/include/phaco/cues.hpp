#pragma once

#include <phaco/ellipse.hpp>
#include <phaco/image.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace phaco {

// The seven overlay cue kinds. Enum order doubles as the stable color-palette
// index; emission order inside a frame is canonical (see cues_for_phase).
enum class CueKind { FLC = 0, PIG, PIC, SIG, SIC, CCR, RRL };

struct LineSegment {
    Vec2 a{};
    Vec2 b{};
};

struct Circle {
    Vec2 center{};
    double radius = 0.0;
};

// Arc on an ellipse, parametric interval [t_start, t_end] of
// e(t) = c + R(phi) (a cos t, b sin t), t_end > t_start.
struct EllipticalArc {
    EllipseParams ellipse{};
    double t_start = 0.0;
    double t_end = 0.0;
};

using CueGeometry = std::variant<EllipseParams, LineSegment, EllipticalArc, Circle>;

struct VisualCue {
    CueKind kind = CueKind::FLC;
    CueGeometry geometry;
    int color_id = 0; // palette slot, equal to the kind index
};

// Operator-tunable cue parameters. Angles in degrees, lengths as fractions of
// (l_major + l_minor).
struct CueConfig {
    double guideline_angle_primary = 95.0;
    double guideline_angle_secondary = 175.0;
    bool guideline_ccw = true; // offset sign relative to the rotation line
    double arc_fraction_primary = 0.25;
    double arc_fraction_secondary = 0.12;
};

enum class GuidelineSide { Primary, Secondary };

// Per-phase cue selection, indexed by phase id.
struct PhaseCueMap {
    std::vector<std::vector<CueKind>> kinds;
};

// The stock ten-phase map: incision gets the full incision set, capsulorhexis
// adds the rhexis circle, lens implant adds the rotation line; everything
// else shows the fitted limbus only. Other phase counts map every phase to
// the fitted limbus.
PhaseCueMap default_cue_map(int k_s);

// Canonical phase names for the ten-phase protocol; "phase N" otherwise.
std::string phase_name(int id, int k_s);

// Rotation reference line: through the ellipse center at theta_deg from the
// image horizontal, total length 1.2 * l_major.
LineSegment rrl(const EllipseParams& e, double theta_deg);

// Guideline ray from the center at the rotation line's direction plus the
// configured offset (95 deg primary, 175 deg secondary), length
// 0.3 * (l_major + l_minor).
LineSegment incision_guideline(const EllipseParams& e, const LineSegment& rotation_line,
                               GuidelineSide which, const CueConfig& cfg = {});

// Arc on the fitted ellipse, centered by arc length on the point where the
// guideline ray leaves the ellipse, total length arc_len_px, symmetric about
// the guideline. Throws NoIntersection for a degenerate guideline and
// InvalidConfig when arc_len_px is not in (0, perimeter).
EllipticalArc incision_curve(const EllipseParams& e, const LineSegment& guideline,
                             double arc_len_px);

// Rhexis reference circle: centered with the ellipse, radius
// (l_major + l_minor) / 4.
Circle ccr(const EllipseParams& e);

// Point on an arc at fraction u in [0, 1] of its parameter interval.
Vec2 arc_point(const EllipticalArc& arc, double u);

struct CueInputs {
    EllipseParams ellipse{};
    std::optional<double> theta_deg; // absent until a rotation estimate exists
};

// Build exactly the mapped kinds for the phase, in the canonical order FLC,
// CCR, PIC, SIC, PIG, SIG, RRL. Throws MissingInput when a theta-dependent
// kind is requested without a rotation estimate, InvalidConfig when the map
// does not cover the phase.
std::vector<VisualCue> cues_for_phase(int phase_id, const PhaseCueMap& map,
                                      const CueInputs& inputs, const CueConfig& cfg = {});

} // namespace phaco
