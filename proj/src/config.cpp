#include <phaco/config.hpp>

#include <phaco/error.hpp>
#include <phaco/svg.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace phaco {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const long x = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
        throw Error(ErrorCode::InvalidConfig, key + ": not an integer: '" + v + "'");
    return static_cast<int>(x);
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size())
        throw Error(ErrorCode::InvalidConfig, key + ": not a number: '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw Error(ErrorCode::InvalidConfig, key + ": not a boolean: '" + v + "'");
}

std::vector<CueKind> parse_kind_list(const std::string& key, const std::string& v) {
    std::vector<CueKind> kinds;
    std::string token;
    std::istringstream ss(v);
    while (std::getline(ss, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        try {
            kinds.push_back(cue_kind_from_name(token));
        } catch (const Error&) {
            throw Error(ErrorCode::InvalidConfig, key + ": unknown cue kind '" + token + "'");
        }
    }
    return kinds;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void validate(const Config& c) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    if (c.d_raw < 1 || c.kappa < 1 || c.d_raw % c.kappa != 0)
        fail("kappa must divide d_raw");
    if (c.tau < 1) fail("tau must be >= 1");
    if (c.n_self < 1 || c.n_cross < 1) fail("layer counts must be >= 1");
    if (c.heads < 1 || (c.d_raw / c.kappa) % c.heads != 0)
        fail("heads must divide the reduced width");
    if (c.alpha < 0 || c.beta < 0) fail("loss mixing weights must be >= 0");
    if (c.k_s < 1) fail("k_s must be >= 1");
    if (c.connectivity != 4 && c.connectivity != 8) fail("connectivity must be 4 or 8");
    if (c.curvature_spacing < 1) fail("curvature_spacing must be >= 1");
    if (c.curvature_threshold <= 0) fail("curvature_threshold must be positive");
    if (c.curvature_mode != "exclude_above" && c.curvature_mode != "exclude_below")
        fail("curvature_mode must be exclude_above or exclude_below");
    if (c.curvature_norm != "median" && c.curvature_norm != "raw")
        fail("curvature_norm must be median or raw");
    if (c.curvature_norm_threshold <= 0) fail("curvature_norm_threshold must be positive");
    if (c.fit_max_points < 5) fail("fit_max_points must be >= 5");
    if (c.init_method != "centroid" && c.init_method != "moments")
        fail("init_method must be centroid or moments");
    if (c.fit.max_iter < 1) fail("fit_max_iter must be >= 1");
    if (c.lambda_in <= 0 || c.lambda_out <= 0) fail("band factors must be positive");
    if (c.angular_bins < 8) fail("angular_bins must be >= 8");
    if (c.radial_bins < 0) fail("radial_bins must be >= 0");
    if (c.v_max < 0) fail("v_max must be >= 0");
    if (c.ncc_floor < 0 || c.ncc_floor > 1) fail("ncc_floor must be in [0, 1]");
    if (c.hysteresis_m < 1) fail("hysteresis_m must be >= 1");
    if (c.n_stale < 0) fail("n_stale must be >= 0");
    if (c.cue.arc_fraction_primary <= 0 || c.cue.arc_fraction_secondary <= 0)
        fail("arc fractions must be positive");
    if (c.cue_colors.size() != 7) fail("exactly seven cue colors are required");
    for (const auto& [phase, kinds] : c.cue_map_overrides) {
        (void)kinds;
        if (phase < 0 || phase >= c.k_s) fail("cue_map phase index out of range");
    }
}

} // namespace

Config::Config() : cue_colors(svg::default_palette()) {}

PhaseCueMap Config::resolved_cue_map() const {
    PhaseCueMap map = default_cue_map(k_s);
    for (const auto& [phase, kinds] : cue_map_overrides)
        map.kinds.at(static_cast<size_t>(phase)) = kinds;
    return map;
}

const char* cue_kind_name(CueKind k) {
    static const std::array<const char*, 7> names = {"FLC", "PIG", "PIC", "SIG",
                                                     "SIC", "CCR", "RRL"};
    return names[static_cast<size_t>(k)];
}

CueKind cue_kind_from_name(const std::string& name) {
    for (int i = 0; i < 7; ++i)
        if (name == cue_kind_name(static_cast<CueKind>(i))) return static_cast<CueKind>(i);
    throw Error(ErrorCode::InvalidConfig, "unknown cue kind '" + name + "'");
}

Config parse_config(const std::string& text) {
    Config c;
    using Setter = std::function<void(Config&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"d_raw", [](Config& c, const std::string& k, const std::string& v) { c.d_raw = parse_int(k, v); }},
        {"kappa", [](Config& c, const std::string& k, const std::string& v) { c.kappa = parse_int(k, v); }},
        {"tau", [](Config& c, const std::string& k, const std::string& v) { c.tau = parse_int(k, v); }},
        {"n_self", [](Config& c, const std::string& k, const std::string& v) { c.n_self = parse_int(k, v); }},
        {"n_cross", [](Config& c, const std::string& k, const std::string& v) { c.n_cross = parse_int(k, v); }},
        {"heads", [](Config& c, const std::string& k, const std::string& v) { c.heads = parse_int(k, v); }},
        {"alpha", [](Config& c, const std::string& k, const std::string& v) { c.alpha = parse_double(k, v); }},
        {"beta", [](Config& c, const std::string& k, const std::string& v) { c.beta = parse_double(k, v); }},
        {"k_s", [](Config& c, const std::string& k, const std::string& v) { c.k_s = parse_int(k, v); }},
        {"connectivity", [](Config& c, const std::string& k, const std::string& v) { c.connectivity = parse_int(k, v); }},
        {"curvature_spacing", [](Config& c, const std::string& k, const std::string& v) { c.curvature_spacing = parse_int(k, v); }},
        {"curvature_threshold", [](Config& c, const std::string& k, const std::string& v) { c.curvature_threshold = parse_double(k, v); }},
        {"curvature_mode", [](Config& c, const std::string&, const std::string& v) { c.curvature_mode = v; }},
        {"curvature_norm", [](Config& c, const std::string&, const std::string& v) { c.curvature_norm = v; }},
        {"curvature_norm_threshold", [](Config& c, const std::string& k, const std::string& v) { c.curvature_norm_threshold = parse_double(k, v); }},
        {"fit_max_points", [](Config& c, const std::string& k, const std::string& v) { c.fit_max_points = parse_int(k, v); }},
        {"init_method", [](Config& c, const std::string&, const std::string& v) { c.init_method = v; }},
        {"init_fallback_moments", [](Config& c, const std::string& k, const std::string& v) { c.init_fallback_moments = parse_bool(k, v); }},
        {"fit_max_iter", [](Config& c, const std::string& k, const std::string& v) { c.fit.max_iter = parse_int(k, v); }},
        {"fit_cost_tol", [](Config& c, const std::string& k, const std::string& v) { c.fit.cost_tol = parse_double(k, v); }},
        {"fit_param_tol", [](Config& c, const std::string& k, const std::string& v) { c.fit.param_tol = parse_double(k, v); }},
        {"fit_lambda0", [](Config& c, const std::string& k, const std::string& v) { c.fit.lambda0 = parse_double(k, v); }},
        {"fit_lambda_up", [](Config& c, const std::string& k, const std::string& v) { c.fit.lambda_up = parse_double(k, v); }},
        {"fit_lambda_down", [](Config& c, const std::string& k, const std::string& v) { c.fit.lambda_down = parse_double(k, v); }},
        {"fit_lambda_max", [](Config& c, const std::string& k, const std::string& v) { c.fit.lambda_max = parse_double(k, v); }},
        {"lambda_in", [](Config& c, const std::string& k, const std::string& v) { c.lambda_in = parse_double(k, v); }},
        {"lambda_out", [](Config& c, const std::string& k, const std::string& v) { c.lambda_out = parse_double(k, v); }},
        {"angular_bins", [](Config& c, const std::string& k, const std::string& v) { c.angular_bins = parse_int(k, v); }},
        {"radial_bins", [](Config& c, const std::string& k, const std::string& v) { c.radial_bins = parse_int(k, v); }},
        {"v_max", [](Config& c, const std::string& k, const std::string& v) { c.v_max = parse_int(k, v); }},
        {"ncc_floor", [](Config& c, const std::string& k, const std::string& v) { c.ncc_floor = parse_double(k, v); }},
        {"hysteresis_m", [](Config& c, const std::string& k, const std::string& v) { c.hysteresis_m = parse_int(k, v); }},
        {"n_stale", [](Config& c, const std::string& k, const std::string& v) { c.n_stale = parse_int(k, v); }},
        {"guideline_angle_primary", [](Config& c, const std::string& k, const std::string& v) { c.cue.guideline_angle_primary = parse_double(k, v); }},
        {"guideline_angle_secondary", [](Config& c, const std::string& k, const std::string& v) { c.cue.guideline_angle_secondary = parse_double(k, v); }},
        {"guideline_ccw", [](Config& c, const std::string& k, const std::string& v) { c.cue.guideline_ccw = parse_bool(k, v); }},
        {"arc_fraction_primary", [](Config& c, const std::string& k, const std::string& v) { c.cue.arc_fraction_primary = parse_double(k, v); }},
        {"arc_fraction_secondary", [](Config& c, const std::string& k, const std::string& v) { c.cue.arc_fraction_secondary = parse_double(k, v); }},
        {"cue_color_flc", [](Config& c, const std::string&, const std::string& v) { c.cue_colors[0] = v; }},
        {"cue_color_pig", [](Config& c, const std::string&, const std::string& v) { c.cue_colors[1] = v; }},
        {"cue_color_pic", [](Config& c, const std::string&, const std::string& v) { c.cue_colors[2] = v; }},
        {"cue_color_sig", [](Config& c, const std::string&, const std::string& v) { c.cue_colors[3] = v; }},
        {"cue_color_sic", [](Config& c, const std::string&, const std::string& v) { c.cue_colors[4] = v; }},
        {"cue_color_ccr", [](Config& c, const std::string&, const std::string& v) { c.cue_colors[5] = v; }},
        {"cue_color_rrl", [](Config& c, const std::string&, const std::string& v) { c.cue_colors[6] = v; }},
    };

    std::istringstream lines(text);
    std::string raw_line;
    int line_no = 0;
    while (std::getline(lines, raw_line)) {
        ++line_no;
        const std::string line = trim(raw_line);
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::InvalidConfig,
                        "line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        const auto it = setters.find(key);
        if (it != setters.end()) {
            it->second(c, key, value);
            continue;
        }
        if (key.rfind("cue_map_", 0) == 0) {
            const int phase = parse_int(key, key.substr(8));
            c.cue_map_overrides[phase] = parse_kind_list(key, value);
            continue;
        }
        throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    }
    validate(c);
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot read config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_text(const Config& c) {
    std::ostringstream o;
    o << "# recognizer\n";
    o << "d_raw = " << c.d_raw << "\n";
    o << "kappa = " << c.kappa << "\n";
    o << "tau = " << c.tau << "\n";
    o << "n_self = " << c.n_self << "\n";
    o << "n_cross = " << c.n_cross << "\n";
    o << "heads = " << c.heads << "\n";
    o << "alpha = " << fmt_double(c.alpha) << "\n";
    o << "beta = " << fmt_double(c.beta) << "\n";
    o << "k_s = " << c.k_s << "\n";
    o << "# contour and curvature filter\n";
    o << "connectivity = " << c.connectivity << "\n";
    o << "curvature_spacing = " << c.curvature_spacing << "\n";
    o << "curvature_threshold = " << fmt_double(c.curvature_threshold) << "\n";
    o << "curvature_mode = " << c.curvature_mode << "\n";
    o << "curvature_norm = " << c.curvature_norm << "\n";
    o << "curvature_norm_threshold = " << fmt_double(c.curvature_norm_threshold) << "\n";
    o << "# ellipse fit\n";
    o << "fit_max_points = " << c.fit_max_points << "\n";
    o << "init_method = " << c.init_method << "\n";
    o << "init_fallback_moments = " << (c.init_fallback_moments ? 1 : 0) << "\n";
    o << "fit_max_iter = " << c.fit.max_iter << "\n";
    o << "fit_cost_tol = " << fmt_double(c.fit.cost_tol) << "\n";
    o << "fit_param_tol = " << fmt_double(c.fit.param_tol) << "\n";
    o << "fit_lambda0 = " << fmt_double(c.fit.lambda0) << "\n";
    o << "fit_lambda_up = " << fmt_double(c.fit.lambda_up) << "\n";
    o << "fit_lambda_down = " << fmt_double(c.fit.lambda_down) << "\n";
    o << "fit_lambda_max = " << fmt_double(c.fit.lambda_max) << "\n";
    o << "# rotation\n";
    o << "lambda_in = " << fmt_double(c.lambda_in) << "\n";
    o << "lambda_out = " << fmt_double(c.lambda_out) << "\n";
    o << "angular_bins = " << c.angular_bins << "\n";
    o << "radial_bins = " << c.radial_bins << "\n";
    o << "v_max = " << c.v_max << "\n";
    o << "ncc_floor = " << fmt_double(c.ncc_floor) << "\n";
    o << "# pipeline\n";
    o << "hysteresis_m = " << c.hysteresis_m << "\n";
    o << "n_stale = " << c.n_stale << "\n";
    o << "# cues\n";
    o << "guideline_angle_primary = " << fmt_double(c.cue.guideline_angle_primary) << "\n";
    o << "guideline_angle_secondary = " << fmt_double(c.cue.guideline_angle_secondary) << "\n";
    o << "guideline_ccw = " << (c.cue.guideline_ccw ? 1 : 0) << "\n";
    o << "arc_fraction_primary = " << fmt_double(c.cue.arc_fraction_primary) << "\n";
    o << "arc_fraction_secondary = " << fmt_double(c.cue.arc_fraction_secondary) << "\n";
    static const std::array<const char*, 7> color_keys = {
        "cue_color_flc", "cue_color_pig", "cue_color_pic", "cue_color_sig",
        "cue_color_sic", "cue_color_ccr", "cue_color_rrl"};
    for (size_t i = 0; i < color_keys.size(); ++i)
        o << color_keys[i] << " = " << c.cue_colors[i] << "\n";
    const PhaseCueMap map = c.resolved_cue_map();
    for (int p = 0; p < c.k_s; ++p) {
        o << "cue_map_" << p << " = ";
        const auto& kinds = map.kinds[static_cast<size_t>(p)];
        for (size_t i = 0; i < kinds.size(); ++i)
            o << (i ? "," : "") << cue_kind_name(kinds[i]);
        o << "\n";
    }
    return o.str();
}

} // namespace phaco
