#include <phaco/metrics.hpp>

#include <phaco/error.hpp>
#include <phaco/svg.hpp>

#include <cmath>

namespace phaco {

namespace {

struct Run {
    int start;
    int end; // exclusive
    int phase;
};

std::vector<Run> run_lengths(const std::vector<int>& labels) {
    std::vector<Run> runs;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (runs.empty() || runs.back().phase != labels[i])
            runs.push_back({static_cast<int>(i), static_cast<int>(i) + 1, labels[i]});
        else
            runs.back().end = static_cast<int>(i) + 1;
    }
    return runs;
}

double wrapped_abs_diff_deg(double a, double b) {
    double d = std::fmod(std::abs(a - b), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

} // namespace

long ConfusionMatrix::total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
}

std::string ConfusionMatrix::to_csv() const {
    std::string out = "gt\\pred";
    for (int c = 0; c < k_s; ++c) out += "," + std::to_string(c);
    out += "\n";
    for (int r = 0; r < k_s; ++r) {
        out += std::to_string(r);
        for (int c = 0; c < k_s; ++c) out += "," + std::to_string(at(r, c));
        out += "\n";
    }
    return out;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& pred, const std::vector<int>& gt,
                                 int k_s) {
    if (pred.size() != gt.size() || pred.empty())
        throw Error(ErrorCode::LengthMismatch, "need equal, nonempty label sequences");
    ConfusionMatrix cm(k_s);
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= k_s || gt[i] < 0 || gt[i] >= k_s)
            throw Error(ErrorCode::InvalidConfig, "phase label out of range");
        ++cm.at(gt[i], pred[i]);
    }
    return cm;
}

PhaseMetrics phase_metrics(const ConfusionMatrix& cm) {
    const long n = cm.total();
    if (n == 0) throw Error(ErrorCode::LengthMismatch, "empty confusion matrix");
    long diag = 0;
    for (int s = 0; s < cm.k_s; ++s) diag += cm.at(s, s);

    double pre = 0, rec = 0, jac = 0;
    int present = 0;
    for (int s = 0; s < cm.k_s; ++s) {
        long row = 0, col = 0;
        for (int c = 0; c < cm.k_s; ++c) row += cm.at(s, c);
        for (int r = 0; r < cm.k_s; ++r) col += cm.at(r, s);
        if (row == 0) continue; // phase absent from ground truth
        ++present;
        const long tp = cm.at(s, s);
        const long fp = col - tp;
        const long fn = row - tp;
        pre += tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        rec += static_cast<double>(tp) / (tp + fn);
        jac += static_cast<double>(tp) / (tp + fp + fn);
    }
    PhaseMetrics m;
    m.acc = 100.0 * static_cast<double>(diag) / static_cast<double>(n);
    m.pre = 100.0 * pre / present;
    m.rec = 100.0 * rec / present;
    m.jac = 100.0 * jac / present;
    return m;
}

PhaseMetrics phase_metrics(const std::vector<int>& pred, const std::vector<int>& gt, int k_s) {
    return phase_metrics(confusion_matrix(pred, gt, k_s));
}

double dice(const BinaryMask& a, const BinaryMask& b) {
    if (a.width != b.width || a.height != b.height)
        throw Error(ErrorCode::ShapeMismatch, "mask dimensions differ");
    long inter = 0, na = 0, nb = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            const bool va = a.at(x, y), vb = b.at(x, y);
            inter += va && vb;
            na += va;
            nb += vb;
        }
    return 100.0 * (2.0 * static_cast<double>(inter) + 1e-6) /
           (static_cast<double>(na + nb) + 1e-6);
}

MeanSd mean_sd(const std::vector<double>& xs) {
    if (xs.empty()) throw Error(ErrorCode::LengthMismatch, "no samples");
    MeanSd out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(var / static_cast<double>(xs.size()));
    return out;
}

MeanSd rotation_error(const std::vector<double>& pred_deg, const std::vector<double>& gt_deg) {
    if (pred_deg.size() != gt_deg.size() || pred_deg.empty())
        throw Error(ErrorCode::LengthMismatch, "need equal, nonempty angle series");
    std::vector<double> errs(pred_deg.size());
    for (size_t i = 0; i < pred_deg.size(); ++i)
        errs[i] = wrapped_abs_diff_deg(pred_deg[i], gt_deg[i]);
    return mean_sd(errs);
}

RibbonExport ribbon_export(const std::vector<int>& pred, const std::vector<int>& gt,
                           const std::vector<std::string>& palette) {
    if (pred.size() != gt.size())
        throw Error(ErrorCode::LengthMismatch, "ribbon sequences differ in length");
    const std::vector<Run> gt_runs = run_lengths(gt);
    const std::vector<Run> pred_runs = run_lengths(pred);

    constexpr double kFrameW = 4.0, kBandH = 24.0, kGap = 8.0;
    auto color_of = [&](int phase) -> const std::string& {
        if (phase < 0 || phase >= static_cast<int>(palette.size()) ||
            palette[static_cast<size_t>(phase)].empty())
            throw Error(ErrorCode::MissingColor,
                        "no ribbon color for phase " + std::to_string(phase));
        return palette[static_cast<size_t>(phase)];
    };

    RibbonExport out;
    out.csv = "ribbon,start,end,phase\n";
    std::string body;
    for (const Run& r : gt_runs) {
        body += svg::rect(r.start * kFrameW, 0.0, (r.end - r.start) * kFrameW, kBandH,
                          color_of(r.phase));
        out.csv += "gt," + std::to_string(r.start) + "," + std::to_string(r.end) + "," +
                   std::to_string(r.phase) + "\n";
    }
    for (const Run& r : pred_runs) {
        body += svg::rect(r.start * kFrameW, kBandH + kGap, (r.end - r.start) * kFrameW, kBandH,
                          color_of(r.phase));
        out.csv += "pred," + std::to_string(r.start) + "," + std::to_string(r.end) + "," +
                   std::to_string(r.phase) + "\n";
    }
    const int width = static_cast<int>(kFrameW * static_cast<double>(pred.size()));
    out.svg = svg::document(std::max(width, 1), static_cast<int>(2 * kBandH + kGap), body);
    return out;
}

} // namespace phaco
