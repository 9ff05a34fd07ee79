#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace phaco {

// Dense row-major matrix of doubles; the only tensor shape the recognizer
// needs.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
};

struct LsSatConfig {
    int d_raw = 2048; // backbone feature width before reduction
    int kappa = 16;   // reduction factor; d_sf = d_raw / kappa
    int k_s = 10;     // phase count
    int tau = 20;     // short-window length
    int n_self = 4;   // self-attention layers in each branch
    int n_cross = 8;  // cross-attention layers in each stack
    int heads = 8;

    int d_sf() const { return d_raw / kappa; }
};

// Bias-free Q/K/V/output projections of one attention layer, each d_sf x d_sf.
struct AttnLayer {
    Mat wq, wk, wv, wo;
};

struct LsSatWeights {
    LsSatConfig cfg;
    Mat reduce_w; // d_raw x d_sf
    Mat reduce_b; // 1 x d_sf
    std::vector<AttnLayer> long_self;  // n_self layers over the full prefix
    std::vector<AttnLayer> short_self; // n_self layers over the tau-window
    std::vector<AttnLayer> ls_cross;   // n_cross long-short cross layers
    std::vector<AttnLayer> st_cross;   // n_cross spatiotemporal cross layers
    Mat head_w; // d_sf x k_s
};

struct PhaseProbabilities {
    std::vector<double> probs;
    int argmax() const;
};

// Gaussian init scaled by 1 / sqrt(fan_in), zero bias, reproducible by seed.
LsSatWeights init_weights(const LsSatConfig& cfg, std::uint64_t seed);

// Apply the same function to every weight tensor, paired with its stable
// serialization name. Shared by the file format, the optimizer, and tests.
void for_each_tensor(LsSatWeights& w,
                     const std::function<void(const std::string&, Mat&)>& fn);

// Affine dimension reduction: out = raw * w + b. Throws ShapeMismatch.
std::vector<double> reduce_dim(const std::vector<double>& raw, const Mat& w, const Mat& b);

// Pre-norm multi-head attention with residual: x + proj(heads(softmax(QK^T /
// sqrt(d_h)) V)). literal = true strips projections, normalization, residual,
// the causal mask, and multi-heading, leaving softmax(S S^T / sqrt(d)) S.
Mat self_attention_block(const Mat& s, const AttnLayer& layer, int heads, bool causal = true,
                         bool literal = false);

// Cross-attention: queries from s_short, keys/values from s_long, never
// causally masked.
Mat long_short_cross(const Mat& s_short, const Mat& s_long, const AttnLayer& layer, int heads,
                     bool literal = false);

// Single-query cross-attention of the current frame feature against the
// long-short output rows.
std::vector<double> spatiotemporal_cross(const std::vector<double>& s_t, const Mat& s_ls,
                                         const AttnLayer& layer, int heads,
                                         bool literal = false);

// Incremental per-frame state: K/V caches for the long branch and the
// long-short context, plus the short feature window. Appending one frame
// costs O(t).
struct StreamState {
    int frames_seen = 0;
    std::vector<Mat> long_k, long_v; // per long_self layer, grown row by row
    std::vector<Mat> ls_k, ls_v;     // per ls_cross layer
    Mat window;                      // last min(tau, t) reduced features
};

// Online prediction for the next frame (raw backbone feature). Appends to
// state; already-returned predictions are never revised.
PhaseProbabilities predict(StreamState& state, const LsSatWeights& w,
                           const std::vector<double>& raw);

// Batch reference path: predictions for every prefix of the sequence
// (row t of raw_frames = frame t). Matches streaming predict to 1e-9.
std::vector<PhaseProbabilities> predict_sequence(const LsSatWeights& w, const Mat& raw_frames);

// Per-frame phase losses.
double phase_ce_loss(const PhaseProbabilities& pred, int gt_phase);
double weighted_ce_loss(const PhaseProbabilities& pred, int gt_phase,
                        const std::vector<double>& class_weights);
std::vector<double> inverse_freq_weights(const std::vector<long>& counts);

// Binary segmentation evaluator: cross-entropy plus alpha * (1 - soft Dice),
// smoothing 1e-6 so empty/empty costs nothing. literal_direction swaps the
// roles of prediction and ground truth inside the cross-entropy.
double seg_hybrid_loss(const std::vector<double>& pred_prob, const std::vector<std::uint8_t>& gt,
                       double alpha, bool literal_direction = false);

// L_sf = L_phase + beta * L_seg.
double combined_loss(double phase_loss, double seg_loss, double beta);

struct TrainConfig {
    double lr = 1e-4;
    int epochs = 30;
    std::uint64_t seed = 1;
};

struct TrainResult {
    LsSatWeights weights;
    std::vector<double> loss_curve; // mean per-sequence loss per epoch
};

// Adam on the mean weighted cross-entropy of online predictions over full
// sequences, batch = one sequence. Class weights come from inverse label
// frequencies over the whole dataset. Deterministic under (cfg, seed).
// Throws DivergenceDetected when the loss leaves the reals.
TrainResult train_toy(const std::vector<Mat>& sequences,
                      const std::vector<std::vector<int>>& labels, const LsSatConfig& cfg,
                      const TrainConfig& train);

// Little-endian container: magic "LSSAT1", then named tensors. Round-trips
// weights exactly.
void save_weights(const LsSatWeights& w, const std::string& path);
LsSatWeights load_weights(const std::string& path);

namespace detail {

// Sequence loss and gradients in one pass; exposed for the finite-difference
// tests. Returns the mean per-frame weighted cross-entropy.
double sequence_loss_grad(const LsSatWeights& w, const Mat& raw_frames,
                          const std::vector<int>& labels,
                          const std::vector<double>& class_weights, LsSatWeights* grad);

} // namespace detail

} // namespace phaco
