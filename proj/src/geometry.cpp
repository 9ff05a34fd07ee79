#include <phaco/geometry.hpp>
#include <phaco/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace phaco {
namespace {

// Flood-fills the component containing seed into label, returns its area.
long flood(const BinaryMask& mask, std::vector<std::uint32_t>& label, std::uint32_t id,
           std::size_t seed, int connectivity) {
    static constexpr int dx8[] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int dy8[] = {0, 0, 1, -1, 1, -1, 1, -1};
    const int w = mask.width;
    std::vector<std::size_t> stack{seed};
    label[seed] = id;
    long area = 0;
    while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        ++area;
        const int x = int(p % w), y = int(p / w);
        for (int k = 0; k < connectivity; ++k) {
            const int nx = x + dx8[k], ny = y + dy8[k];
            if (!mask.in_bounds(nx, ny)) continue;
            const std::size_t q = std::size_t(ny) * w + nx;
            if (mask.bits[q] && label[q] == 0) {
                label[q] = id;
                stack.push_back(q);
            }
        }
    }
    return area;
}

} // namespace

BinaryMask largest_component(const BinaryMask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw Error(ErrorCode::InvalidConfig, "connectivity must be 4 or 8");
    std::vector<std::uint32_t> label(mask.bits.size(), 0);
    std::uint32_t next = 0;
    long best_area = 0;
    std::uint32_t best_id = 0; // component of the smallest row-major seed wins ties
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (!mask.bits[i] || label[i] != 0) continue;
        const long area = flood(mask, label, ++next, i, connectivity);
        if (area > best_area) {
            best_area = area;
            best_id = next;
        }
    }
    if (next == 0) throw Error(ErrorCode::EmptyMask, "no foreground pixel");
    BinaryMask out(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.bits.size(); ++i)
        out.bits[i] = label[i] == best_id ? 1 : 0;
    return out;
}

Contour trace_contour(const BinaryMask& mask) {
    // Precondition check: exactly one 8-connected component.
    std::vector<std::uint32_t> label(mask.bits.size(), 0);
    std::size_t first = mask.bits.size();
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i]) {
            first = i;
            break;
        }
    }
    if (first == mask.bits.size()) throw Error(ErrorCode::EmptyMask, "no foreground pixel");
    const long area = flood(mask, label, 1, first, 8);
    if (area != mask.foreground_count())
        throw Error(ErrorCode::MultipleComponents, "mask has more than one component");

    // Crack following along pixel edges with foreground on the walking left
    // (y-down frame). Crack vertices live on the integer corner lattice; the
    // crack from vertex v in direction d has exactly one adjacent foreground
    // pixel, which is emitted. This guarantees every contour pixel owns a
    // boundary edge, i.e. has a background 4-neighbour.
    const auto fg = [&](int x, int y) { return mask.in_bounds(x, y) && mask.at(x, y) != 0; };
    // Direction order R, D, L, U; left turn = (d+3)&3, right turn = (d+1)&3.
    static constexpr int vx[] = {1, 0, -1, 0};
    static constexpr int vy[] = {0, 1, 0, -1};
    // Pixels sharing vertex (x, y) ahead-left / ahead-right of direction d.
    const auto ahead_left = [](int x, int y, int d) -> Pt {
        switch (d) {
        case 0: return {x, y - 1};
        case 1: return {x, y};
        case 2: return {x - 1, y};
        default: return {x - 1, y - 1};
        }
    };
    const auto ahead_right = [](int x, int y, int d) -> Pt {
        switch (d) {
        case 0: return {x, y};
        case 1: return {x - 1, y};
        case 2: return {x - 1, y - 1};
        default: return {x, y - 1};
        }
    };

    const int sx = int(first % mask.width), sy = int(first / mask.width);
    // The start pixel is topmost-leftmost, so its top edge is outer boundary;
    // walking it leftward keeps the foreground below-left.
    int x = sx + 1, y = sy, d = 2;
    const int x0 = x, y0 = y, d0 = d;
    std::vector<Pt> pts;
    do {
        const Pt p = ahead_left(x, y, d);
        if (pts.empty() || pts.back() != p) pts.push_back(p);
        x += vx[d];
        y += vy[d];
        const Pt pl = ahead_left(x, y, d);
        const Pt pr = ahead_right(x, y, d);
        if (!fg(pl.x, pl.y))
            d = (d + 3) & 3;
        else if (fg(pr.x, pr.y))
            d = (d + 1) & 3;
    } while (!(x == x0 && y == y0 && d == d0));
    if (pts.size() > 1 && pts.front() == pts.back()) pts.pop_back();

    // Normalize orientation: positive shoelace area in stored coordinates.
    long shoelace2 = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Pt& a = pts[i];
        const Pt& b = pts[(i + 1) % pts.size()];
        shoelace2 += long(a.x) * b.y - long(b.x) * a.y;
    }
    if (shoelace2 < 0) std::reverse(pts.begin() + 1, pts.end());

    Contour c;
    c.points = std::move(pts);
    c.closed = true;
    return c;
}

double menger_curvature(Vec2 a, Vec2 b, Vec2 c) {
    const double abx = b.x - a.x, aby = b.y - a.y;
    const double acx = c.x - a.x, acy = c.y - a.y;
    const double cross = abx * acy - aby * acx;
    if (cross == 0.0) return 0.0;
    const double lab = std::hypot(abx, aby);
    const double lbc = std::hypot(c.x - b.x, c.y - b.y);
    const double lac = std::hypot(acx, acy);
    return 2.0 * std::abs(cross) / (lab * lbc * lac);
}

CurvatureProfile curvature(const Contour& contour, int spacing) {
    if (spacing < 1) throw Error(ErrorCode::InvalidConfig, "curvature spacing must be >= 1");
    const std::size_t n = contour.points.size();
    if (!contour.closed || n < std::size_t(2 * spacing + 1))
        throw Error(ErrorCode::ContourTooShort,
                    "need a closed contour of length >= " + std::to_string(2 * spacing + 1));
    CurvatureProfile prof;
    prof.spacing = spacing;
    prof.values.resize(n);
    const auto at = [&](std::size_t i) {
        const Pt& p = contour.points[i % n];
        return Vec2{double(p.x), double(p.y)};
    };
    for (std::size_t i = 0; i < n; ++i)
        prof.values[i] = menger_curvature(at(i + n - spacing), at(i), at(i + spacing));
    return prof;
}

std::vector<Pt> filter_by_curvature(const Contour& contour, const CurvatureProfile& profile,
                                    double threshold, CurvatureMode mode, CurvatureNorm norm) {
    const std::size_t n = contour.points.size();
    if (profile.values.size() != n)
        throw Error(ErrorCode::LengthMismatch, "curvature profile does not match contour");
    double scale = 1.0;
    if (norm == CurvatureNorm::Median && n > 0) {
        std::vector<double> sorted(profile.values);
        std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
        const double med = sorted[n / 2];
        if (med > 0.0) scale = 1.0 / med;
    }
    std::vector<Pt> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = profile.values[i] * scale;
        const bool keep = mode == CurvatureMode::ExcludeAbove ? v <= threshold : v >= threshold;
        if (keep) kept.push_back(contour.points[i]);
    }
    if (kept.empty())
        throw Error(ErrorCode::AllPointsRejected, "curvature filter rejected every point");
    return kept;
}

} // namespace phaco
