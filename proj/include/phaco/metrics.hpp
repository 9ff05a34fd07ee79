#pragma once

#include <phaco/image.hpp>

#include <string>
#include <vector>

namespace phaco {

// Phase confusion counts: rows = ground truth, cols = prediction.
struct ConfusionMatrix {
    int k_s = 0;
    std::vector<long> counts; // k_s * k_s, row-major

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int k) : k_s(k), counts(static_cast<size_t>(k) * k, 0) {}

    long at(int gt, int pred) const { return counts[static_cast<size_t>(gt) * k_s + pred]; }
    long& at(int gt, int pred) { return counts[static_cast<size_t>(gt) * k_s + pred]; }
    long total() const;
    std::string to_csv() const;
};

// All four values are percentages. pre/rec/jac are macro averages over the
// phases that appear in the ground truth.
struct PhaseMetrics {
    double acc = 0;
    double pre = 0;
    double rec = 0;
    double jac = 0;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& pred, const std::vector<int>& gt,
                                 int k_s);
PhaseMetrics phase_metrics(const ConfusionMatrix& cm);
PhaseMetrics phase_metrics(const std::vector<int>& pred, const std::vector<int>& gt, int k_s);

// Overlap percentage 2|a n b| / (|a| + |b|), smoothing 1e-6; two empty masks
// count as perfect agreement.
double dice(const BinaryMask& a, const BinaryMask& b);

struct MeanSd {
    double mean = 0;
    double sd = 0; // population standard deviation
};

MeanSd mean_sd(const std::vector<double>& xs);

// Wrap-aware absolute angular differences in degrees, summarized as mean +- sd.
MeanSd rotation_error(const std::vector<double>& pred_deg, const std::vector<double>& gt_deg);

// Two aligned phase ribbons (ground truth above, prediction below), one rect
// per contiguous run, plus a CSV of the runs (ribbon, start, end-exclusive,
// phase). palette is indexed by phase id.
struct RibbonExport {
    std::string svg;
    std::string csv;
};

RibbonExport ribbon_export(const std::vector<int>& pred, const std::vector<int>& gt,
                           const std::vector<std::string>& palette);

} // namespace phaco
