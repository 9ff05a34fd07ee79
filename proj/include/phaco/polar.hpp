#pragma once

#include <phaco/ellipse.hpp>
#include <phaco/image.hpp>

#include <cstdint>
#include <vector>

namespace phaco {

// Circular band around the fitted limbus: points whose distance to the
// ellipse centre lies within [mean_radius - d_in, mean_radius + d_out],
// where mean_radius = (l_major + l_minor) / 2 and d = mean_radius / lambda.
struct AnnulusSpec {
    EllipseParams ellipse;
    double d_in = 0.0;  // px inward of the mean radius
    double d_out = 0.0; // px outward of it
    double lambda_in = 3.0;
    double lambda_out = 3.0;
};

AnnulusSpec make_annulus(const EllipseParams& ellipse, double lambda_in = 3.0,
                         double lambda_out = 3.0);

bool annulus_membership(const AnnulusSpec& spec, const Vec2& point);

// Polar resampling of the annulus: rows sweep radius (inner to outer),
// columns sweep angle from +x toward +y. Cells that fall outside the frame
// carry value 0 and valid = 0; mean/sigma/valid_count summarize the valid
// cells only.
struct PolarPatch {
    int radial_bins = 0;
    int angular_bins = 0;
    double deg_per_bin = 0.0;
    std::vector<double> values;      // row-major [radial][angular]
    std::vector<std::uint8_t> valid; // same layout, 1 = inside the frame
    double mean = 0.0;
    double sigma = 0.0;
    int valid_count = 0;

    double at(int r, int a) const { return values[static_cast<size_t>(r) * angular_bins + a]; }
    bool is_valid(int r, int a) const {
        return valid[static_cast<size_t>(r) * angular_bins + a] != 0;
    }
};

// radial_bins = 0 picks max(8, round(d_in + d_out)). Throws DegenerateAnnulus
// when the band is thinner than one pixel and InvalidConfig for bin counts
// < 1.
PolarPatch polar_unwrap(const GrayFrame& frame, const AnnulusSpec& spec, int angular_bins = 720,
                        int radial_bins = 0);

// Zero-mean normalized cross-correlation between ref and the shifted cur:
// ref cell (r, a) pairs with cur cell (r + v, (a + u) mod n). Statistics run
// over jointly valid cell pairs; fewer than 8 of them, or a constant overlap,
// scores 0. Throws ZeroVariance when either whole patch is constant.
double ncc_score(const PolarPatch& ref, const PolarPatch& cur, int u, int v);

struct RotationEstimate {
    double theta_deg = 0.0;   // refined, in (-180, 180], positive toward +angle
    double peak_score = 0.0;  // correlation at the unrefined argmax
    bool low_confidence = false;
    int peak_u = 0; // unrefined angular argmax in [0, angular_bins)
    int peak_v = 0; // radial shift at the peak
};

// Exhaustive search over all angular shifts x radial shifts in [-v_max,
// v_max], then parabolic sub-bin refinement over the angular neighbours of
// the peak. Ties resolve to the smallest v, then smallest u. Throws
// ZeroVariance when either patch is constant; a peak below score_floor only
// sets low_confidence.
RotationEstimate estimate_rotation(const PolarPatch& ref, const PolarPatch& cur, int v_max = 2,
                                   double score_floor = 0.2);

} // namespace phaco
