#include <phaco/polar.hpp>

#include <phaco/error.hpp>
#include <phaco/kernels.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace phaco {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMinOverlap = 8; // fewer jointly valid cells scores 0

double score_from_sums(double n, double sr, double sr2, double sc, double sc2, double src) {
    if (n < kMinOverlap) return 0.0;
    const double var_r = sr2 - sr * sr / n;
    const double var_c = sc2 - sc * sc / n;
    if (var_r <= 1e-12 * std::max(1.0, sr2) || var_c <= 1e-12 * std::max(1.0, sc2)) return 0.0;
    const double s = (src - sr * sc / n) / std::sqrt(var_r * var_c);
    return std::clamp(s, -1.0, 1.0);
}

void require_same_grid(const PolarPatch& a, const PolarPatch& b) {
    if (a.radial_bins != b.radial_bins || a.angular_bins != b.angular_bins)
        throw Error(ErrorCode::ShapeMismatch, "polar patches have different grids");
}

void require_texture(const PolarPatch& p, const char* which) {
    if (p.valid_count == 0 || p.sigma <= 0.0)
        throw Error(ErrorCode::ZeroVariance, std::string(which) + " patch is constant");
}

// One value row doubled into a ring of 2n-1 entries so a sliding dot product
// of length n can start at any angular offset without modular indexing.
std::vector<double> doubled_rows(const std::vector<double>& src, int m, int n) {
    if (n < 1) return {};
    std::vector<double> out(static_cast<size_t>(m) * (2 * n - 1));
    for (int r = 0; r < m; ++r) {
        const double* row = src.data() + static_cast<size_t>(r) * n;
        double* dst = out.data() + static_cast<size_t>(r) * (2 * n - 1);
        std::copy(row, row + n, dst);
        std::copy(row, row + n - 1, dst + n);
    }
    return out;
}

} // namespace

AnnulusSpec make_annulus(const EllipseParams& ellipse, double lambda_in, double lambda_out) {
    if (lambda_in <= 0 || lambda_out <= 0)
        throw Error(ErrorCode::InvalidConfig, "annulus scale factors must be positive");
    const double mean_r = 0.5 * (ellipse.l_major + ellipse.l_minor);
    return {ellipse, mean_r / lambda_in, mean_r / lambda_out, lambda_in, lambda_out};
}

bool annulus_membership(const AnnulusSpec& spec, const Vec2& point) {
    const double mean_r = 0.5 * (spec.ellipse.l_major + spec.ellipse.l_minor);
    const double d = std::hypot(point.x - spec.ellipse.ox, point.y - spec.ellipse.oy) - mean_r;
    return d >= -spec.d_in && d <= spec.d_out;
}

PolarPatch polar_unwrap(const GrayFrame& frame, const AnnulusSpec& spec, int angular_bins,
                        int radial_bins) {
    const double width = spec.d_in + spec.d_out;
    if (width < 1.0) throw Error(ErrorCode::DegenerateAnnulus, "annulus thinner than one pixel");
    if (angular_bins < 1) throw Error(ErrorCode::InvalidConfig, "angular_bins must be >= 1");
    if (radial_bins < 0) throw Error(ErrorCode::InvalidConfig, "radial_bins must be >= 0");
    const int m = radial_bins > 0 ? radial_bins : std::max(8, static_cast<int>(std::lround(width)));
    const int n = angular_bins;

    PolarPatch patch;
    patch.radial_bins = m;
    patch.angular_bins = n;
    patch.deg_per_bin = 360.0 / n;
    patch.values.assign(static_cast<size_t>(m) * n, 0.0);
    patch.valid.assign(static_cast<size_t>(m) * n, 0);

    const double mean_r = 0.5 * (spec.ellipse.l_major + spec.ellipse.l_minor);
    const double r0 = mean_r - spec.d_in;
    double sum = 0.0, sum2 = 0.0;
    int count = 0;
    for (int r = 0; r < m; ++r) {
        const double radius = r0 + (r + 0.5) * width / m;
        for (int a = 0; a < n; ++a) {
            const double ang = (a + 0.5) * (2.0 * kPi / n);
            const double x = spec.ellipse.ox + radius * std::cos(ang);
            const double y = spec.ellipse.oy + radius * std::sin(ang);
            double v;
            if (bilinear_sample(frame, x, y, v)) {
                const size_t idx = static_cast<size_t>(r) * n + a;
                patch.values[idx] = v;
                patch.valid[idx] = 1;
                sum += v;
                sum2 += v * v;
                ++count;
            }
        }
    }
    patch.valid_count = count;
    if (count > 0) {
        patch.mean = sum / count;
        const double var = sum2 / count - patch.mean * patch.mean;
        patch.sigma = var > 0 ? std::sqrt(var) : 0.0;
    }
    return patch;
}

double ncc_score(const PolarPatch& ref, const PolarPatch& cur, int u, int v) {
    require_same_grid(ref, cur);
    require_texture(ref, "reference");
    require_texture(cur, "current");
    const int m = ref.radial_bins, n = ref.angular_bins;
    const int uu = ((u % n) + n) % n;
    double cnt = 0, sr = 0, sr2 = 0, sc = 0, sc2 = 0, src = 0;
    for (int r = 0; r < m; ++r) {
        const int rc = r + v;
        if (rc < 0 || rc >= m) continue;
        const size_t ri = static_cast<size_t>(r) * n;
        const size_t ci = static_cast<size_t>(rc) * n;
        for (int a = 0; a < n; ++a) {
            const int ac = a + uu < n ? a + uu : a + uu - n;
            if (!ref.valid[ri + a] || !cur.valid[ci + ac]) continue;
            const double vr = ref.values[ri + a];
            const double vc = cur.values[ci + ac];
            cnt += 1;
            sr += vr;
            sr2 += vr * vr;
            sc += vc;
            sc2 += vc * vc;
            src += vr * vc;
        }
    }
    return score_from_sums(cnt, sr, sr2, sc, sc2, src);
}

RotationEstimate estimate_rotation(const PolarPatch& ref, const PolarPatch& cur, int v_max,
                                   double score_floor) {
    require_same_grid(ref, cur);
    require_texture(ref, "reference");
    require_texture(cur, "current");
    if (v_max < 0) throw Error(ErrorCode::InvalidConfig, "v_max must be >= 0");
    const int m = ref.radial_bins, n = ref.angular_bins;
    const size_t cells = static_cast<size_t>(m) * n;
    const bool fully_valid = ref.valid_count == static_cast<int>(cells) &&
                             cur.valid_count == static_cast<int>(cells);

    // scores[v_max + v] holds the n angular scores at radial shift v.
    std::vector<std::vector<double>> scores(2 * v_max + 1, std::vector<double>(n, 0.0));

    if (fully_valid) {
        // Only the cross term varies with the angular shift; row sums cover
        // the rest.
        std::vector<double> sr_row(m, 0.0), sr2_row(m, 0.0), sc_row(m, 0.0), sc2_row(m, 0.0);
        for (int r = 0; r < m; ++r) {
            const double* rr = ref.values.data() + static_cast<size_t>(r) * n;
            const double* cr = cur.values.data() + static_cast<size_t>(r) * n;
            for (int a = 0; a < n; ++a) {
                sr_row[r] += rr[a];
                sr2_row[r] += rr[a] * rr[a];
                sc_row[r] += cr[a];
                sc2_row[r] += cr[a] * cr[a];
            }
        }
        const std::vector<double> curd = doubled_rows(cur.values, m, n);
        std::vector<double> src(n);
        for (int v = -v_max; v <= v_max; ++v) {
            std::fill(src.begin(), src.end(), 0.0);
            double cnt = 0, sr = 0, sr2 = 0, sc = 0, sc2 = 0;
            for (int r = 0; r < m; ++r) {
                const int rc = r + v;
                if (rc < 0 || rc >= m) continue;
                kernels::corr_accum(ref.values.data() + static_cast<size_t>(r) * n,
                                    curd.data() + static_cast<size_t>(rc) * (2 * n - 1), n,
                                    src.data());
                cnt += n;
                sr += sr_row[r];
                sr2 += sr2_row[r];
                sc += sc_row[rc];
                sc2 += sc2_row[rc];
            }
            auto& row = scores[v + v_max];
            for (int u = 0; u < n; ++u) row[u] = score_from_sums(cnt, sr, sr2, sc, sc2, src[u]);
        }
    } else {
        // Masked case: all six sums vary with the shift, each a sliding
        // correlation of premultiplied rows (invalid cells store value 0).
        std::vector<double> ref_vm(cells), ref_v2(cells), cur_v2(cells), cur_vm(cells);
        for (size_t i = 0; i < cells; ++i) {
            ref_vm[i] = ref.valid[i] ? 1.0 : 0.0;
            ref_v2[i] = ref.values[i] * ref.values[i];
            cur_vm[i] = cur.valid[i] ? 1.0 : 0.0;
            cur_v2[i] = cur.values[i] * cur.values[i];
        }
        const std::vector<double> cd_val = doubled_rows(cur.values, m, n);
        const std::vector<double> cd_val2 = doubled_rows(cur_v2, m, n);
        const std::vector<double> cd_msk = doubled_rows(cur_vm, m, n);
        std::vector<double> cnt(n), sr(n), sr2(n), sc(n), sc2(n), src(n);
        const size_t dn = 2 * n - 1;
        for (int v = -v_max; v <= v_max; ++v) {
            for (auto* vec : {&cnt, &sr, &sr2, &sc, &sc2, &src})
                std::fill(vec->begin(), vec->end(), 0.0);
            for (int r = 0; r < m; ++r) {
                const int rc = r + v;
                if (rc < 0 || rc >= m) continue;
                const size_t ri = static_cast<size_t>(r) * n;
                const size_t ci = static_cast<size_t>(rc) * dn;
                kernels::corr_accum(ref_vm.data() + ri, cd_msk.data() + ci, n, cnt.data());
                kernels::corr_accum(ref.values.data() + ri, cd_msk.data() + ci, n, sr.data());
                kernels::corr_accum(ref_v2.data() + ri, cd_msk.data() + ci, n, sr2.data());
                kernels::corr_accum(ref_vm.data() + ri, cd_val.data() + ci, n, sc.data());
                kernels::corr_accum(ref_vm.data() + ri, cd_val2.data() + ci, n, sc2.data());
                kernels::corr_accum(ref.values.data() + ri, cd_val.data() + ci, n, src.data());
            }
            auto& row = scores[v + v_max];
            for (int u = 0; u < n; ++u)
                row[u] = score_from_sums(cnt[u], sr[u], sr2[u], sc[u], sc2[u], src[u]);
        }
    }

    RotationEstimate best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int v = -v_max; v <= v_max; ++v) {
        const auto& row = scores[v + v_max];
        for (int u = 0; u < n; ++u) {
            if (row[u] > best_score) {
                best_score = row[u];
                best.peak_u = u;
                best.peak_v = v;
            }
        }
    }
    best.peak_score = best_score;
    best.low_confidence = best_score < score_floor;

    const auto& prow = scores[best.peak_v + v_max];
    const double s0 = prow[best.peak_u];
    const double sm = prow[(best.peak_u + n - 1) % n];
    const double sp = prow[(best.peak_u + 1) % n];
    const double denom = sm - 2 * s0 + sp;
    double delta = 0.0;
    if (std::abs(denom) > 1e-15) delta = std::clamp(0.5 * (sm - sp) / denom, -0.5, 0.5);

    double u_signed = best.peak_u + delta;
    if (u_signed > n / 2.0) u_signed -= n;
    best.theta_deg = u_signed * ref.deg_per_bin;
    return best;
}

} // namespace phaco
