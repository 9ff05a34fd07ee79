#include <phaco/pipeline.hpp>

#include <phaco/error.hpp>
#include <phaco/geometry.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace phaco {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool needs_theta(CueKind k) {
    return k == CueKind::RRL || k == CueKind::PIG || k == CueKind::SIG ||
           k == CueKind::PIC || k == CueKind::SIC;
}

// Phase prediction: recognizer stream when weights are attached, otherwise
// the externally supplied phase as a one-hot.
std::vector<double> predict_probs(SessionState& state, const FrameBundle& bundle,
                                  const Config& cfg) {
    if (state.recognizer != nullptr) {
        if (int(bundle.feature.size()) != cfg.d_raw)
            throw Error(ErrorCode::ShapeMismatch,
                        "process_frame: feature width does not match d_raw");
        return predict(state.recog, *state.recognizer, bundle.feature).probs;
    }
    if (!bundle.external_phase.has_value())
        throw Error(ErrorCode::MissingInput,
                    "process_frame: geometry-only frame without a phase");
    const int p = *bundle.external_phase;
    if (p < 0 || p >= cfg.k_s)
        throw Error(ErrorCode::InvalidConfig, "process_frame: phase id out of range");
    std::vector<double> probs(size_t(cfg.k_s), 0.0);
    probs[size_t(p)] = 1.0;
    return probs;
}

int argmax_prob(const std::vector<double>& probs) {
    return int(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// Mask -> filtered ordered contour points, per the configured curvature
// rejection. Throws the geometry module's errors on failure.
std::vector<Vec2> segment_points(const BinaryMask& mask, const Config& cfg) {
    const BinaryMask comp = largest_component(mask, cfg.connectivity);
    const Contour contour = trace_contour(comp);
    const CurvatureProfile prof = curvature(contour, cfg.curvature_spacing);
    const CurvatureMode mode = cfg.curvature_mode == "exclude_below"
                                   ? CurvatureMode::ExcludeBelow
                                   : CurvatureMode::ExcludeAbove;
    std::vector<Pt> kept;
    if (cfg.curvature_norm == "median")
        kept = filter_by_curvature(contour, prof, cfg.curvature_norm_threshold, mode,
                                   CurvatureNorm::Median);
    else
        kept = filter_by_curvature(contour, prof, cfg.curvature_threshold, mode,
                                   CurvatureNorm::Raw);

    std::vector<Vec2> pts;
    const size_t stride =
        std::max<size_t>(1, (kept.size() + size_t(cfg.fit_max_points) - 1) /
                                size_t(cfg.fit_max_points));
    for (size_t i = 0; i < kept.size(); i += stride)
        pts.push_back(Vec2{double(kept[i].x), double(kept[i].y)});
    return pts;
}

EllipseParams fit_points(const std::vector<Vec2>& pts, const Config& cfg) {
    EllipseParams init;
    if (cfg.init_method == "moments") {
        init = init_guess_moments(pts);
    } else {
        try {
            init = init_guess(pts);
        } catch (const Error&) {
            if (!cfg.init_fallback_moments) throw;
            init = init_guess_moments(pts);
        }
    }
    FitResult fit = fit_lm(pts, init, cfg.fit);
    normalize_axes(fit.params);
    return fit.params;
}

json geometry_to_json(const CueGeometry& g) {
    json j;
    if (const auto* e = std::get_if<EllipseParams>(&g)) {
        j["type"] = "ellipse";
        j["ox"] = e->ox;
        j["oy"] = e->oy;
        j["major"] = e->l_major;
        j["minor"] = e->l_minor;
        j["phi"] = e->phi;
    } else if (const auto* s = std::get_if<LineSegment>(&g)) {
        j["type"] = "segment";
        j["ax"] = s->a.x;
        j["ay"] = s->a.y;
        j["bx"] = s->b.x;
        j["by"] = s->b.y;
    } else if (const auto* a = std::get_if<EllipticalArc>(&g)) {
        j["type"] = "arc";
        j["ox"] = a->ellipse.ox;
        j["oy"] = a->ellipse.oy;
        j["major"] = a->ellipse.l_major;
        j["minor"] = a->ellipse.l_minor;
        j["phi"] = a->ellipse.phi;
        j["t0"] = a->t_start;
        j["t1"] = a->t_end;
    } else {
        const auto& c = std::get<Circle>(g);
        j["type"] = "circle";
        j["cx"] = c.center.x;
        j["cy"] = c.center.y;
        j["r"] = c.radius;
    }
    return j;
}

CueGeometry geometry_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "ellipse")
        return EllipseParams{j.at("ox").get<double>(), j.at("oy").get<double>(),
                             j.at("major").get<double>(), j.at("minor").get<double>(),
                             j.at("phi").get<double>()};
    if (type == "segment")
        return LineSegment{Vec2{j.at("ax").get<double>(), j.at("ay").get<double>()},
                           Vec2{j.at("bx").get<double>(), j.at("by").get<double>()}};
    if (type == "arc")
        return EllipticalArc{EllipseParams{j.at("ox").get<double>(), j.at("oy").get<double>(),
                                           j.at("major").get<double>(),
                                           j.at("minor").get<double>(),
                                           j.at("phi").get<double>()},
                             j.at("t0").get<double>(), j.at("t1").get<double>()};
    if (type == "circle")
        return Circle{Vec2{j.at("cx").get<double>(), j.at("cy").get<double>()},
                      j.at("r").get<double>()};
    throw Error(ErrorCode::InvalidFormat, "unknown cue geometry type: " + type);
}

} // namespace

FrameResult process_frame(SessionState& state, const FrameBundle& bundle, const Config& cfg) {
    if (bundle.mask.width != bundle.gray.width || bundle.mask.height != bundle.gray.height)
        throw Error(ErrorCode::ShapeMismatch, "process_frame: mask/gray size mismatch");

    const auto frame_start = Clock::now();
    FrameResult r;
    r.index = bundle.index;

    // --- phase ---------------------------------------------------------
    auto t0 = Clock::now();
    r.probs = predict_probs(state, bundle, cfg);
    r.phase = argmax_prob(r.probs);
    r.timings_ms["predict"] = ms_since(t0);

    const int prev_stable = state.stable_phase;
    if (state.recognizer == nullptr) {
        state.stable_phase = r.phase; // scripted phases are already clean
    } else if (state.stable_phase < 0) {
        state.stable_phase = r.phase;
    } else if (r.phase == state.stable_phase) {
        state.pending_phase = -1;
        state.pending_count = 0;
    } else {
        if (r.phase == state.pending_phase)
            ++state.pending_count;
        else {
            state.pending_phase = r.phase;
            state.pending_count = 1;
        }
        if (state.pending_count >= cfg.hysteresis_m) {
            state.stable_phase = state.pending_phase;
            state.pending_phase = -1;
            state.pending_count = 0;
        }
    }
    r.phase_stable = state.stable_phase;
    if (state.stable_phase != prev_stable) state.needs_fresh_ref = true;

    // --- geometry: mask -> ellipse --------------------------------------
    t0 = Clock::now();
    std::vector<Vec2> pts;
    bool geom_ok = true;
    try {
        pts = segment_points(bundle.mask, cfg);
    } catch (const Error&) {
        geom_ok = false;
    }
    r.timings_ms["segment"] = ms_since(t0);

    t0 = Clock::now();
    bool new_fit = false;
    if (geom_ok) {
        try {
            const EllipseParams fit = fit_points(pts, cfg);
            state.last_ellipse = fit;
            state.staleness = 0;
            new_fit = true;
        } catch (const Error&) {
        }
    }
    if (!new_fit) {
        ++state.staleness;
        r.flags.fallback_ellipse = true;
    }
    r.ellipse = state.last_ellipse;
    r.timings_ms["fit"] = ms_since(t0);

    // --- reference + rotation -------------------------------------------
    t0 = Clock::now();
    std::optional<PolarPatch> cur;
    if (r.ellipse.has_value()) {
        try {
            cur = polar_unwrap(bundle.gray,
                               make_annulus(*r.ellipse, cfg.lambda_in, cfg.lambda_out),
                               cfg.angular_bins, cfg.radial_bins);
        } catch (const Error&) {
        }
    }

    const int s = state.stable_phase;
    if (new_fit && cur.has_value() &&
        (state.needs_fresh_ref || state.refs.find(s) == state.refs.end())) {
        state.refs[s] = PhaseReference{*cur, *r.ellipse, bundle.index};
        state.needs_fresh_ref = false;
    }

    if (cur.has_value()) {
        const auto it = state.refs.find(s);
        if (it != state.refs.end()) {
            if (it->second.frame_index == bundle.index) {
                r.theta_deg = 0.0; // the frame is its own reference
                r.rotation_score = 1.0;
                r.ref_index = bundle.index;
            } else {
                try {
                    const RotationEstimate est =
                        estimate_rotation(it->second.patch, *cur, cfg.v_max, cfg.ncc_floor);
                    r.theta_deg = est.theta_deg;
                    r.rotation_score = est.peak_score;
                    r.ref_index = it->second.frame_index;
                    r.flags.low_confidence_rotation = est.low_confidence;
                } catch (const Error&) {
                }
            }
        }
    }
    r.timings_ms["rotate"] = ms_since(t0);

    // --- cues ------------------------------------------------------------
    t0 = Clock::now();
    if (r.ellipse.has_value() && state.staleness <= cfg.n_stale) {
        const bool theta_ok = r.theta_deg.has_value() && !r.flags.low_confidence_rotation;
        PhaseCueMap map = cfg.resolved_cue_map();
        if (!theta_ok && s >= 0 && s < int(map.kinds.size())) {
            auto& kinds = map.kinds[size_t(s)];
            kinds.erase(std::remove_if(kinds.begin(), kinds.end(), needs_theta), kinds.end());
        }
        CueInputs in;
        in.ellipse = *r.ellipse;
        if (theta_ok) in.theta_deg = r.theta_deg;
        try {
            r.cues = cues_for_phase(s, map, in, cfg.cue);
        } catch (const Error&) {
            r.cues.clear(); // degenerate fallback geometry: draw nothing
        }
    }
    r.flags.no_cues = r.cues.empty();
    r.timings_ms["cues"] = ms_since(t0);

    r.timings_ms["total"] = ms_since(frame_start);
    state.last_index = bundle.index;
    return r;
}

SessionSummary run_session(const std::function<std::optional<FrameBundle>()>& next,
                           SessionState& state, const Config& cfg,
                           const std::function<void(const FrameResult&)>& sink) {
    SessionSummary sum;
    std::map<std::string, std::pair<double, double>> acc; // sum, sum of squares
    long prev_index = state.last_index;

    const auto wall0 = Clock::now();
    while (true) {
        std::optional<FrameBundle> bundle = next();
        if (!bundle.has_value()) break;
        if (bundle->index <= prev_index)
            throw Error(ErrorCode::InputExhausted,
                        "run_session: frame indices must strictly increase");
        prev_index = bundle->index;

        const FrameResult r = process_frame(state, *bundle, cfg);
        ++sum.frames;
        if (r.flags.fallback_ellipse) ++sum.fallback_frames;
        if (r.flags.no_cues) ++sum.no_cue_frames;
        if (r.flags.low_confidence_rotation) ++sum.low_confidence_frames;
        for (const auto& [name, ms] : r.timings_ms) {
            acc[name].first += ms;
            acc[name].second += ms * ms;
        }
        if (sink) sink(r);
    }
    sum.total_ms = ms_since(wall0);
    sum.fps = sum.frames > 0 ? double(sum.frames) / (sum.total_ms / 1000.0) : 0.0;
    for (const auto& [name, a] : acc) {
        StageStats st;
        st.mean_ms = a.first / double(sum.frames);
        st.sd_ms = std::sqrt(std::max(0.0, a.second / double(sum.frames) -
                                               st.mean_ms * st.mean_ms));
        sum.stages[name] = st;
    }
    return sum;
}

std::string to_json_line(const FrameResult& r, bool include_timings) {
    json j;
    j["v"] = 1;
    j["index"] = r.index;
    j["phase"] = r.phase;
    j["phase_stable"] = r.phase_stable;
    j["probs"] = r.probs;
    if (r.ellipse.has_value()) {
        j["ellipse"] = {{"ox", r.ellipse->ox},
                        {"oy", r.ellipse->oy},
                        {"major", r.ellipse->l_major},
                        {"minor", r.ellipse->l_minor},
                        {"phi", r.ellipse->phi}};
    } else {
        j["ellipse"] = nullptr;
    }
    j["theta_deg"] = r.theta_deg.has_value() ? json(*r.theta_deg) : json(nullptr);
    j["rotation_score"] =
        r.rotation_score.has_value() ? json(*r.rotation_score) : json(nullptr);
    j["ref_index"] = r.ref_index.has_value() ? json(*r.ref_index) : json(nullptr);
    j["flags"] = {{"fallback_ellipse", r.flags.fallback_ellipse},
                  {"low_confidence_rotation", r.flags.low_confidence_rotation},
                  {"no_cues", r.flags.no_cues}};
    json cues = json::array();
    for (const VisualCue& c : r.cues) {
        json cj;
        cj["kind"] = cue_kind_name(c.kind);
        cj["color_id"] = c.color_id;
        cj["geometry"] = geometry_to_json(c.geometry);
        cues.push_back(std::move(cj));
    }
    j["cues"] = std::move(cues);
    if (include_timings) {
        json t;
        for (const auto& [name, ms] : r.timings_ms) t[name] = ms;
        j["timings_ms"] = std::move(t);
    }
    return j.dump();
}

FrameResult frame_result_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::InvalidFormat, std::string("bad result line: ") + e.what());
    }
    try {
        if (j.at("v").get<int>() != 1)
            throw Error(ErrorCode::InvalidFormat, "unsupported result version");
        FrameResult r;
        r.index = j.at("index").get<long>();
        r.phase = j.at("phase").get<int>();
        r.phase_stable = j.at("phase_stable").get<int>();
        r.probs = j.at("probs").get<std::vector<double>>();
        if (!j.at("ellipse").is_null()) {
            const json& e = j.at("ellipse");
            r.ellipse = EllipseParams{e.at("ox").get<double>(), e.at("oy").get<double>(),
                                      e.at("major").get<double>(), e.at("minor").get<double>(),
                                      e.at("phi").get<double>()};
        }
        if (!j.at("theta_deg").is_null()) r.theta_deg = j.at("theta_deg").get<double>();
        if (!j.at("rotation_score").is_null())
            r.rotation_score = j.at("rotation_score").get<double>();
        if (!j.at("ref_index").is_null()) r.ref_index = j.at("ref_index").get<long>();
        const json& f = j.at("flags");
        r.flags.fallback_ellipse = f.at("fallback_ellipse").get<bool>();
        r.flags.low_confidence_rotation = f.at("low_confidence_rotation").get<bool>();
        r.flags.no_cues = f.at("no_cues").get<bool>();
        for (const json& cj : j.at("cues")) {
            VisualCue c;
            c.kind = cue_kind_from_name(cj.at("kind").get<std::string>());
            c.color_id = cj.at("color_id").get<int>();
            c.geometry = geometry_from_json(cj.at("geometry"));
            r.cues.push_back(std::move(c));
        }
        if (j.contains("timings_ms"))
            for (const auto& [name, v] : j.at("timings_ms").items())
                r.timings_ms[name] = v.get<double>();
        return r;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::InvalidFormat, std::string("bad result line: ") + e.what());
    }
}

} // namespace phaco
