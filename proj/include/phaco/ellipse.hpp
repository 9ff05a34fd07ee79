#pragma once

#include <phaco/image.hpp>

#include <array>
#include <vector>

namespace phaco {

// Parametric ellipse e(t) = center + R(phi) * (l_major cos t, l_minor sin t),
// with R(phi) the active rotation in stored (x right, y down) coordinates.
struct EllipseParams {
    double ox = 0.0; // centre, pixels
    double oy = 0.0;
    double l_major = 0.0; // semi-axis along the phi direction, pixels
    double l_minor = 0.0; // semi-axis perpendicular to it, pixels
    double phi = 0.0;     // tilt, radians in [0, pi)
};

struct FitDiagnostics {
    double final_cost = 0.0;   // sum of squared point-to-ellipse distances, px^2
    int iterations = 0;        // accepted + rejected trial steps
    bool converged = false;    // hit cost_tol or param_tol (not max_iter)
    double rms_residual = 0.0; // sqrt(final_cost / point count)
};

struct FitConfig {
    int max_iter = 100;
    double cost_tol = 1e-8;   // relative cost decrease per accepted step
    double param_tol = 1e-10; // accepted step norm
    double lambda0 = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 0.1;
    double lambda_max = 1e10;
};

struct FitResult {
    EllipseParams params;
    FitDiagnostics diag;
};

// Point on the ellipse at curve parameter t.
Vec2 ellipse_point(const EllipseParams& p, double t);

// Enforce l_major >= l_minor (swapping axes rotates phi by pi/2) and wrap
// phi into [0, pi). Negative axis lengths are folded to their magnitudes,
// which describes the same point set.
void normalize_axes(EllipseParams& p);

// Initial guess: centre at the centroid, both semi-axes at half the mean
// point-to-centroid distance, tilt 0. Throws TooFewPoints (< 5) and
// DegenerateGeometry when the points are collinear or coincident (relative
// second-moment determinant <= 1e-9).
EllipseParams init_guess(const std::vector<Vec2>& points);

// Second-moment (PCA) guess: semi-axes sqrt(2 * eigenvalue), tilt from the
// major eigenvector. Same preconditions and errors as init_guess.
EllipseParams init_guess_moments(const std::vector<Vec2>& points);

// Curve parameter of the ellipse point nearest to q: 64-sample coarse scan,
// golden-section refine, short Newton polish. Result in [0, 2*pi).
double nearest_param(const EllipseParams& p, const Vec2& q);

// Euclidean distance from q to the nearest ellipse point.
double point_residual(const EllipseParams& p, const Vec2& q);

// Levenberg-Marquardt fit minimizing the sum of squared orthogonal
// distances, starting from init. Marquardt damping scales the J^T J
// diagonal; rejected steps raise lambda by lambda_up, accepted steps lower
// it by lambda_down. The returned cost never exceeds the cost at init.
// Throws TooFewPoints, and NumericalFailure if lambda climbs past
// lambda_max before any step is accepted.
FitResult fit_lm(const std::vector<Vec2>& points, const EllipseParams& init,
                 const FitConfig& cfg = {});

namespace detail {

// Signed orthogonal distance: positive outside the ellipse, negative inside.
// Squares to the point_residual; its analytic gradient is what fit_lm uses.
double signed_residual(const EllipseParams& p, const Vec2& q);

// Signed residual plus its gradient with respect to (ox, oy, l_major,
// l_minor, phi), via the envelope theorem at the nearest curve parameter.
void residual_jacobian(const EllipseParams& p, const Vec2& q, double& r,
                       std::array<double, 5>& grad);

} // namespace detail

} // namespace phaco
