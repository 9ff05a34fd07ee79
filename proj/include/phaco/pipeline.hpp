#pragma once

// Per-frame orchestration: phase prediction, mask-to-ellipse geometry,
// per-phase reference management, rotation estimation, and cue
// construction, with a hold-last-good fallback ladder so a single bad
// frame never aborts a session.

#include <phaco/config.hpp>
#include <phaco/cues.hpp>
#include <phaco/ellipse.hpp>
#include <phaco/image.hpp>
#include <phaco/lssat.hpp>
#include <phaco/polar.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace phaco {

struct FrameBundle {
    long index = 0;
    BinaryMask mask;
    GrayFrame gray;
    std::vector<double> feature;       // empty when running geometry-only
    std::optional<int> external_phase; // supplied phase when no recognizer runs
};

struct PhaseReference {
    PolarPatch patch;
    EllipseParams ellipse;
    long frame_index = 0;
};

struct SessionState {
    const LsSatWeights* recognizer = nullptr; // null = geometry-only
    StreamState recog;

    int stable_phase = -1; // -1 before the first frame
    int pending_phase = -1;
    int pending_count = 0;
    bool needs_fresh_ref = true; // phase (re-)entry wants a new reference

    std::map<int, PhaseReference> refs;
    std::optional<EllipseParams> last_ellipse;
    int staleness = 0; // frames since the ellipse was actually re-fitted
    long last_index = -1;
};

struct FrameFlags {
    bool fallback_ellipse = false;
    bool low_confidence_rotation = false;
    bool no_cues = false;
};

struct FrameResult {
    long index = 0;
    int phase = 0;        // raw per-frame prediction (or external phase)
    int phase_stable = 0; // after hysteresis; drives references and cues
    std::vector<double> probs;
    std::optional<EllipseParams> ellipse;
    std::optional<double> theta_deg;
    std::optional<double> rotation_score;
    std::optional<long> ref_index; // frame the rotation was measured against
    std::vector<VisualCue> cues;
    FrameFlags flags;
    std::map<std::string, double> timings_ms;
};

// Runs one frame through the full chain, mutating the session state.
// Geometry failures never throw: the fallback ladder degrades the result
// and sets flags. Configuration and recognizer input errors still throw.
FrameResult process_frame(SessionState& state, const FrameBundle& bundle, const Config& cfg);

struct StageStats {
    double mean_ms = 0.0;
    double sd_ms = 0.0;
};

struct SessionSummary {
    long frames = 0;
    double total_ms = 0.0;
    double fps = 0.0;
    std::map<std::string, StageStats> stages;
    long fallback_frames = 0;
    long no_cue_frames = 0;
    long low_confidence_frames = 0;
};

// Pulls bundles from next() until it returns nullopt, strictly in order
// (indices must increase; InputExhausted otherwise), forwarding each result
// to sink. An empty stream yields a zero-frame summary.
SessionSummary run_session(const std::function<std::optional<FrameBundle>()>& next,
                           SessionState& state, const Config& cfg,
                           const std::function<void(const FrameResult&)>& sink);

// One-line JSON form ("v":1) of a frame result, without trailing newline.
// Timings are runtime-dependent, so they are opt-in to keep the default
// output byte-reproducible.
std::string to_json_line(const FrameResult& r, bool include_timings = false);
FrameResult frame_result_from_json(const std::string& line);

} // namespace phaco
