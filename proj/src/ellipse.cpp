#include <phaco/ellipse.hpp>

#include <phaco/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace phaco {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kCoarseSamples = 64;

struct UnitSample {
    double c, s;
};

// cos/sin of the fixed coarse-scan angles; independent of the ellipse.
const std::array<UnitSample, kCoarseSamples>& coarse_table() {
    static const auto table = [] {
        std::array<UnitSample, kCoarseSamples> t{};
        for (int k = 0; k < kCoarseSamples; ++k) {
            const double a = 2.0 * kPi * k / kCoarseSamples;
            t[k] = {std::cos(a), std::sin(a)};
        }
        return t;
    }();
    return table;
}

struct Frame {
    double cphi, sphi;
    explicit Frame(const EllipseParams& p) : cphi(std::cos(p.phi)), sphi(std::sin(p.phi)) {}
};

inline Vec2 curve_point(const EllipseParams& p, const Frame& f, double ct, double st) {
    const double vx = p.l_major * ct;
    const double vy = p.l_minor * st;
    return {p.ox + f.cphi * vx - f.sphi * vy, p.oy + f.sphi * vx + f.cphi * vy};
}

inline double dist2(const EllipseParams& p, const Frame& f, const Vec2& q, double ct, double st) {
    const Vec2 e = curve_point(p, f, ct, st);
    const double dx = q.x - e.x;
    const double dy = q.y - e.y;
    return dx * dx + dy * dy;
}

double nearest_param_impl(const EllipseParams& p, const Frame& f, const Vec2& q) {
    const auto& tab = coarse_table();
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kCoarseSamples; ++k) {
        const double d = dist2(p, f, q, tab[k].c, tab[k].s);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    const double step = 2.0 * kPi / kCoarseSamples;
    double lo = best * step - step;
    double hi = best * step + step;

    const double inv_golden = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_golden * (hi - lo);
    double x2 = lo + inv_golden * (hi - lo);
    double f1 = dist2(p, f, q, std::cos(x1), std::sin(x1));
    double f2 = dist2(p, f, q, std::cos(x2), std::sin(x2));
    while (hi - lo > 1e-7) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_golden * (hi - lo);
            f1 = dist2(p, f, q, std::cos(x1), std::sin(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_golden * (hi - lo);
            f2 = dist2(p, f, q, std::cos(x2), std::sin(x2));
        }
    }
    double t = 0.5 * (lo + hi);

    // Newton polish on g(t) = (q - e(t)) . e'(t); the golden bracket is well
    // inside the basin of the orthogonality root, so a few steps reach full
    // double precision. Guarded to never leave the coarse cell.
    double t_best = t;
    double d_best = dist2(p, f, q, std::cos(t), std::sin(t));
    for (int it = 0; it < 4; ++it) {
        const double ct = std::cos(t), st = std::sin(t);
        const Vec2 e = curve_point(p, f, ct, st);
        const double dx = q.x - e.x, dy = q.y - e.y;
        const double ex1 = f.cphi * (-p.l_major * st) - f.sphi * (p.l_minor * ct);
        const double ey1 = f.sphi * (-p.l_major * st) + f.cphi * (p.l_minor * ct);
        const double ex2 = f.cphi * (-p.l_major * ct) + f.sphi * (p.l_minor * st);
        const double ey2 = f.sphi * (-p.l_major * ct) - f.cphi * (p.l_minor * st);
        const double g = dx * ex1 + dy * ey1;
        const double gp = -(ex1 * ex1 + ey1 * ey1) + dx * ex2 + dy * ey2;
        if (!(std::abs(gp) > 0.0)) break;
        const double delta = g / gp;
        if (!std::isfinite(delta) || std::abs(delta) > step) break;
        t -= delta;
        const double d = dist2(p, f, q, std::cos(t), std::sin(t));
        if (d <= d_best) {
            d_best = d;
            t_best = t;
        }
    }
    t = std::fmod(t_best, 2.0 * kPi);
    if (t < 0) t += 2.0 * kPi;
    return t;
}

struct Moments {
    double cx, cy;     // centroid
    double sxx, sxy, syy; // mean-centred second moments (averaged)
};

Moments point_moments(const std::vector<Vec2>& points) {
    if (points.size() < 5)
        throw Error(ErrorCode::TooFewPoints,
                    "ellipse needs >= 5 points, got " + std::to_string(points.size()));
    const double n = static_cast<double>(points.size());
    double cx = 0, cy = 0;
    for (const auto& q : points) {
        cx += q.x;
        cy += q.y;
    }
    cx /= n;
    cy /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& q : points) {
        const double dx = q.x - cx, dy = q.y - cy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    sxx /= n;
    sxy /= n;
    syy /= n;
    const double det = sxx * syy - sxy * sxy;
    const double half_trace = 0.5 * (sxx + syy);
    if (det <= 1e-9 * half_trace * half_trace)
        throw Error(ErrorCode::DegenerateGeometry, "points are collinear or coincident");
    return {cx, cy, sxx, sxy, syy};
}

// The residual vector and (optionally) its Jacobian at the current
// parameters. Rows follow the parameter order (ox, oy, l_major, l_minor, phi).
struct Eval {
    std::vector<double> r;
    std::vector<std::array<double, 5>> jac;
    double cost = 0.0;
};

void signed_residual_grad(const EllipseParams& p, const Frame& f, const Vec2& q, double& r_out,
                          std::array<double, 5>* grad) {
    const double t = nearest_param_impl(p, f, q);
    const double ct = std::cos(t), st = std::sin(t);
    const Vec2 e = curve_point(p, f, ct, st);
    const double dx = q.x - e.x, dy = q.y - e.y;
    const double d = std::hypot(dx, dy);

    // Sign from the implicit value in the ellipse frame: >= 1 outside.
    const double rx = q.x - p.ox, ry = q.y - p.oy;
    const double ux = f.cphi * rx + f.sphi * ry;
    const double uy = -f.sphi * rx + f.cphi * ry;
    const double fa = ux / p.l_major, fb = uy / p.l_minor;
    const double sign = (fa * fa + fb * fb >= 1.0) ? 1.0 : -1.0;
    r_out = sign * d;
    if (!grad) return;

    // Outward unit normal at the nearest point. The connecting segment lies
    // along it, so n = sign * (q - e)/d; fall back to the analytic normal
    // direction when the point sits on the curve.
    double nx, ny;
    if (d > 1e-12) {
        nx = sign * dx / d;
        ny = sign * dy / d;
    } else {
        const double mx = p.l_minor * ct, my = p.l_major * st;
        const double wx = f.cphi * mx - f.sphi * my;
        const double wy = f.sphi * mx + f.cphi * my;
        const double norm = std::hypot(wx, wy);
        nx = norm > 0 ? wx / norm : 0.0;
        ny = norm > 0 ? wy / norm : 0.0;
    }

    // Envelope theorem: d residual / d theta = -n . d e / d theta at the
    // fixed nearest parameter (the parameter's own variation is first-order
    // orthogonal to the connecting segment).
    (*grad)[0] = -nx;
    (*grad)[1] = -ny;
    (*grad)[2] = -(nx * f.cphi + ny * f.sphi) * ct;
    (*grad)[3] = -(-nx * f.sphi + ny * f.cphi) * st;
    (*grad)[4] = -(nx * -(e.y - p.oy) + ny * (e.x - p.ox));
}

void evaluate(const EllipseParams& p, const std::vector<Vec2>& points, bool want_jacobian,
              Eval& out) {
    const Frame f(p);
    const size_t n = points.size();
    out.r.resize(n);
    if (want_jacobian) out.jac.resize(n);
    out.cost = 0.0;
    for (size_t i = 0; i < n; ++i) {
        signed_residual_grad(p, f, points[i], out.r[i], want_jacobian ? &out.jac[i] : nullptr);
        out.cost += out.r[i] * out.r[i];
    }
}

// Gaussian elimination with partial pivoting on a 5x5 system. Returns false
// when the matrix is numerically singular.
bool solve5(std::array<std::array<double, 5>, 5> a, std::array<double, 5> b,
            std::array<double, 5>& x) {
    for (int col = 0; col < 5; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 5; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-300) return false;
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        const double inv = 1.0 / a[col][col];
        for (int r = col + 1; r < 5; ++r) {
            const double m = a[r][col] * inv;
            if (m == 0.0) continue;
            for (int c = col; c < 5; ++c) a[r][c] -= m * a[col][c];
            b[r] -= m * b[col];
        }
    }
    for (int r = 4; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < 5; ++c) acc -= a[r][c] * x[c];
        x[r] = acc / a[r][r];
    }
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

std::array<double, 5> as_vector(const EllipseParams& p) {
    return {p.ox, p.oy, p.l_major, p.l_minor, p.phi};
}

EllipseParams from_vector(const std::array<double, 5>& v) {
    return {v[0], v[1], v[2], v[3], v[4]};
}

} // namespace

Vec2 ellipse_point(const EllipseParams& p, double t) {
    const Frame f(p);
    return curve_point(p, f, std::cos(t), std::sin(t));
}

void normalize_axes(EllipseParams& p) {
    p.l_major = std::abs(p.l_major);
    p.l_minor = std::abs(p.l_minor);
    if (p.l_major < p.l_minor) {
        std::swap(p.l_major, p.l_minor);
        p.phi += kPi / 2.0;
    }
    p.phi = std::fmod(p.phi, kPi);
    if (p.phi < 0) p.phi += kPi;
    if (p.phi >= kPi) p.phi = 0.0; // fmod rounding at the boundary
}

EllipseParams init_guess(const std::vector<Vec2>& points) {
    const Moments m = point_moments(points);
    double mean_dist = 0.0;
    for (const auto& q : points) mean_dist += std::hypot(q.x - m.cx, q.y - m.cy);
    mean_dist /= static_cast<double>(points.size());
    const double axis = 0.5 * mean_dist;
    return {m.cx, m.cy, axis, axis, 0.0};
}

EllipseParams init_guess_moments(const std::vector<Vec2>& points) {
    const Moments m = point_moments(points);
    const double half_trace = 0.5 * (m.sxx + m.syy);
    const double spread = std::hypot(0.5 * (m.sxx - m.syy), m.sxy);
    const double l1 = half_trace + spread;
    const double l2 = std::max(half_trace - spread, 1e-12);
    EllipseParams p{m.cx, m.cy, std::sqrt(2.0 * l1), std::sqrt(2.0 * l2),
                    0.5 * std::atan2(2.0 * m.sxy, m.sxx - m.syy)};
    normalize_axes(p);
    return p;
}

double nearest_param(const EllipseParams& p, const Vec2& q) {
    return nearest_param_impl(p, Frame(p), q);
}

double point_residual(const EllipseParams& p, const Vec2& q) {
    const Frame f(p);
    const double t = nearest_param_impl(p, f, q);
    return std::sqrt(dist2(p, f, q, std::cos(t), std::sin(t)));
}

double detail::signed_residual(const EllipseParams& p, const Vec2& q) {
    double r;
    signed_residual_grad(p, Frame(p), q, r, nullptr);
    return r;
}

void detail::residual_jacobian(const EllipseParams& p, const Vec2& q, double& r,
                               std::array<double, 5>& grad) {
    signed_residual_grad(p, Frame(p), q, r, &grad);
}

FitResult fit_lm(const std::vector<Vec2>& points, const EllipseParams& init,
                 const FitConfig& cfg) {
    if (points.size() < 5)
        throw Error(ErrorCode::TooFewPoints,
                    "ellipse fit needs >= 5 points, got " + std::to_string(points.size()));

    std::array<double, 5> theta = as_vector(init);
    Eval cur;
    evaluate(from_vector(theta), points, true, cur);

    double lambda = cfg.lambda0;
    bool accepted_any = false;
    bool converged = false;
    int iterations = 0;
    Eval trial;

    while (iterations < cfg.max_iter && !converged) {
        if (cur.cost <= 1e-24) { // already an exact fit; nothing to improve
            converged = true;
            break;
        }
        // Normal equations from the current linearization.
        std::array<std::array<double, 5>, 5> jtj{};
        std::array<double, 5> jtr{};
        for (size_t i = 0; i < points.size(); ++i) {
            const auto& row = cur.jac[i];
            for (int a = 0; a < 5; ++a) {
                jtr[a] += row[a] * cur.r[i];
                for (int b = a; b < 5; ++b) jtj[a][b] += row[a] * row[b];
            }
        }
        for (int a = 0; a < 5; ++a)
            for (int b = 0; b < a; ++b) jtj[a][b] = jtj[b][a];

        // Retry with increasing damping until a step is accepted.
        while (true) {
            if (lambda > cfg.lambda_max) {
                if (!accepted_any)
                    throw Error(ErrorCode::NumericalFailure,
                                "damping exceeded lambda_max before any accepted step");
                converged = true; // stalled at a minimum; cannot improve further
                break;
            }
            std::array<std::array<double, 5>, 5> damped = jtj;
            for (int a = 0; a < 5; ++a) damped[a][a] *= 1.0 + lambda;
            std::array<double, 5> delta{};
            std::array<double, 5> rhs{};
            for (int a = 0; a < 5; ++a) rhs[a] = -jtr[a];
            ++iterations;
            if (!solve5(damped, rhs, delta)) {
                lambda *= cfg.lambda_up;
                continue;
            }
            std::array<double, 5> next = theta;
            for (int a = 0; a < 5; ++a) next[a] += delta[a];
            evaluate(from_vector(next), points, true, trial);
            if (std::isfinite(trial.cost) && trial.cost <= cur.cost) {
                const double prev_cost = cur.cost;
                theta = next;
                std::swap(cur, trial);
                lambda *= cfg.lambda_down;
                accepted_any = true;
                double step2 = 0.0;
                for (double d : delta) step2 += d * d;
                if (prev_cost - cur.cost <= cfg.cost_tol * prev_cost) converged = true;
                if (std::sqrt(step2) <= cfg.param_tol) converged = true;
                break;
            }
            lambda *= cfg.lambda_up;
            if (iterations >= cfg.max_iter) break;
        }
    }

    FitResult out;
    out.params = from_vector(theta);
    normalize_axes(out.params);
    out.diag.final_cost = cur.cost;
    out.diag.iterations = iterations;
    out.diag.converged = converged;
    out.diag.rms_residual = std::sqrt(cur.cost / static_cast<double>(points.size()));
    return out;
}

} // namespace phaco
