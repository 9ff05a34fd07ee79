#pragma once

#include <phaco/image.hpp>

#include <vector>

namespace phaco {

struct Contour {
    std::vector<Pt> points;
    bool closed = false;
};

struct CurvatureProfile {
    std::vector<double> values; // 1/pixels, >= 0
    int spacing = 1;
};

enum class CurvatureMode { ExcludeAbove, ExcludeBelow };
enum class CurvatureNorm { Raw, Median };

// Keep only the foreground pixels of the largest connected component
// (foreground connectivity 8 or 4). Ties broken by the component containing
// the smallest row-major pixel index. Throws EmptyMask.
BinaryMask largest_component(const BinaryMask& mask, int connectivity = 8);

// Outer boundary of the single connected component as a closed ordered pixel
// chain, oriented so the shoelace signed area in stored (x right, y down)
// coordinates is positive. Every emitted pixel is foreground with at least
// one background 4-neighbour. Throws EmptyMask / MultipleComponents.
Contour trace_contour(const BinaryMask& mask);

// Menger curvature of the circle through three points; exact 0 for collinear
// or coincident input (integer points make the collinearity test exact).
double menger_curvature(Vec2 a, Vec2 b, Vec2 c);

// Per-point Menger curvature of the cyclic triple (p[i-k], p[i], p[i+k]).
// Requires a closed contour of length >= 2k+1 (ContourTooShort otherwise).
CurvatureProfile curvature(const Contour& contour, int spacing);

// Order-preserving outlier rejection on the contour points. Median
// normalization divides each curvature by the profile median before the
// threshold comparison (falls back to raw values when the median is zero).
// Throws AllPointsRejected when nothing survives.
std::vector<Pt> filter_by_curvature(const Contour& contour, const CurvatureProfile& profile,
                                    double threshold, CurvatureMode mode,
                                    CurvatureNorm norm = CurvatureNorm::Raw);

} // namespace phaco
