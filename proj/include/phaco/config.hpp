#pragma once

#include <phaco/cues.hpp>
#include <phaco/ellipse.hpp>

#include <map>
#include <string>
#include <vector>

namespace phaco {

// Every tunable in one flat bag, loadable from a key = value text file.
// Unknown keys are rejected so typos fail loudly.
struct Config {
    // Recognizer dimensions and loss mixing.
    int d_raw = 2048;
    int kappa = 16;
    int tau = 20;
    int n_self = 4;
    int n_cross = 8;
    int heads = 8;
    double alpha = 0.6;
    double beta = 0.5;
    int k_s = 10;

    // Contour extraction and curvature filtering.
    int connectivity = 8;
    int curvature_spacing = 5;
    double curvature_threshold = 0.7;
    std::string curvature_mode = "exclude_above"; // or "exclude_below"
    std::string curvature_norm = "median";        // or "raw"
    double curvature_norm_threshold = 2.0;

    // Ellipse fitting.
    int fit_max_points = 200;
    std::string init_method = "centroid"; // or "moments"
    bool init_fallback_moments = true;
    FitConfig fit;

    // Rotation estimation.
    double lambda_in = 3.0;
    double lambda_out = 3.0;
    int angular_bins = 720;
    int radial_bins = 0; // 0 = derived from the band width
    int v_max = 2;
    double ncc_floor = 0.2;

    // Pipeline stabilization.
    int hysteresis_m = 3;
    int n_stale = 15;

    // Cue construction and styling.
    CueConfig cue;
    std::vector<std::string> cue_colors; // 7 entries, CueKind order
    std::map<int, std::vector<CueKind>> cue_map_overrides;

    Config();

    // default_cue_map(k_s) with the configured overrides applied.
    PhaseCueMap resolved_cue_map() const;
};

// Parse key = value text ('#' comments, blank lines allowed). Throws
// InvalidConfig on unknown keys, malformed values, or out-of-range settings.
Config parse_config(const std::string& text);

// Read and parse a config file. Throws IoFailure when unreadable.
Config load_config(const std::string& path);

// Render every key; parse_config(config_to_text(c)) reproduces c exactly.
std::string config_to_text(const Config& c);

const char* cue_kind_name(CueKind k);
CueKind cue_kind_from_name(const std::string& name);

} // namespace phaco
