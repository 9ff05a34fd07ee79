#pragma once

// Deterministic synthetic eye scenes with exact ground truth, plus
// brute-force oracles that deliberately share no numeric kernels with the
// estimators they check. Everything is reproducible from a single 64-bit
// seed; sub-streams are derived with rng::sub_seed so per-frame work could
// be parallelized without changing output.

#include <phaco/ellipse.hpp>
#include <phaco/image.hpp>
#include <phaco/lssat.hpp>

#include <array>
#include <cstdint>
#include <vector>

namespace phaco::synth {

// Axis-aligned rectangle painted over the scene (simulates an instrument
// blocking the limbus) for frames first_frame..last_frame inclusive.
struct OccluderSpec {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; // half-open pixel rect
    int first_frame = 0;
    int last_frame = -1;
};

struct SceneSpec {
    int width = 256;
    int height = 256;
    EllipseParams ellipse{128.0, 128.0, 70.0, 70.0, 0.0}; // ground truth, fixed per scene
    std::vector<double> theta_deg; // per-frame eye rotation; empty = all zero
    std::vector<int> phase;        // per-frame phase script; empty = all zero
    std::uint64_t seed = 1;
    double sigma_mask = 0.0;   // boundary wobble amplitude in px
    int spike_count = 0;       // triangular rim spikes on the mask
    double spike_height = 0.0; // spike apex height in px
    double spike_half_width_deg = 4.0;
    double gray_noise = 0.0; // per-pixel sensor noise (breaks exact rigidity)
    std::vector<OccluderSpec> occluders;
    bool blur = false; // 3x3 box blur on the gray channel
};

struct SceneFrame {
    BinaryMask mask;
    GrayFrame gray;
};

struct Scene {
    std::vector<SceneFrame> frames;
    EllipseParams gt_ellipse;
    BinaryMask gt_mask; // clean filled ellipse (shared by all frames)
    std::vector<double> gt_theta_deg;
    std::vector<int> gt_phase;
};

// Renders frame_count frames. The gray texture is a seeded radial/streak
// pattern rigidly rotated about the ellipse center by the scheduled angle;
// the mask is the filled ellipse distorted by boundary noise, spikes, and
// occluders. Schedules must be empty or exactly frame_count long.
Scene gen_scene(const SceneSpec& spec, int frame_count);

// Filled ellipse at pixel-center sampling (signed distance <= 0).
BinaryMask fill_ellipse_mask(int width, int height, const EllipseParams& e);

// Ordered contour point set drawn directly in point space: n points evenly
// spaced in parameter angle with isotropic Gaussian noise sigma, plus
// spike_count narrow triangular outlier bursts (spike_points consecutive
// points each, apex spike_height px outward). outlier[i] marks points that
// were displaced by a spike.
struct ContourSample {
    std::vector<Vec2> points;
    std::vector<char> outlier;
};
ContourSample spiked_contour(const EllipseParams& e, int n, double sigma,
                             int spike_count, int spike_points,
                             double spike_height, std::uint64_t seed);

// --- feature generator ------------------------------------------------

struct FeatureGenSpec {
    int k_s = 10;
    int d = 2048;
    std::uint64_t seed = 1;
    double center_scale = 1.0; // per-dim std of the cluster centers
    double sigma = 0.1;        // per-dim noise inside a phase
    int min_duration = 8;      // frames per phase, sampled uniformly
    int max_duration = 40;
    int boundary_width = 0;      // trailing frames of each phase get extra noise
    double boundary_sigma = 0.0; // per-dim noise added near transitions
};

struct FeatureDataset {
    std::vector<Mat> sequences;           // each T x d
    std::vector<std::vector<int>> labels; // phase id per frame
};

// Each sequence walks phases 0..k_s-1 in order with sampled durations.
// Frames within boundary_width of the next transition are drawn with noise
// sigma + boundary_sigma * ramp, so frame-wise classification degrades near
// boundaries while the labels stay clean.
FeatureDataset gen_features(const FeatureGenSpec& spec, int sequence_count);

// --- oracles ----------------------------------------------------------

// Exhaustive image-space rotation search: rotates b back about center by
// every candidate in [-range_deg, range_deg) at step_deg, resamples
// bilinearly, and returns the angle minimizing SSD against a over the
// annulus r_in <= r <= r_out. Positive result means b is a rotated by a
// positive angle (+x toward +y).
double oracle_rotation(const GrayFrame& a, const GrayFrame& b, Vec2 center,
                       double step_deg, double r_in, double r_out,
                       double range_deg = 180.0);

// Coarse-to-fine grid search over (cx, cy, a, b, phi) minimizing the sum of
// squared point-to-outline distances, measured against a 64-segment
// polyline. Three refinement levels; bounds must bracket the truth.
struct ParamBox {
    std::array<double, 5> lo{}; // cx, cy, a, b, phi
    std::array<double, 5> hi{};
};
EllipseParams oracle_ellipse(const std::vector<Vec2>& points,
                             const ParamBox& bounds, int grid_per_dim = 7);

// Mean squared point-to-outline distance used by oracle_ellipse; exposed so
// tests can compare candidate parameter sets under one cost.
double polyline_cost(const std::vector<Vec2>& points, const EllipseParams& e);

} // namespace phaco::synth
