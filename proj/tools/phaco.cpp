// Command-line surface: dataset synthesis, the per-frame pipeline, toy
// recognizer training, evaluation, and overlay rendering. Every subcommand
// exits 0 on success and 1 on error, with a one-line JSON error record on
// stderr; all file writes are atomic.

#include <phaco/config.hpp>
#include <phaco/error.hpp>
#include <phaco/io.hpp>
#include <phaco/metrics.hpp>
#include <phaco/pipeline.hpp>
#include <phaco/rng.hpp>
#include <phaco/svg.hpp>
#include <phaco/synth.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace phaco;

namespace {

std::string zero_pad(const char* stem, long n, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05ld%s", stem, n, ext);
    return buf;
}

// Evenly spaced hues for phase ribbons; deterministic in k_s.
std::vector<std::string> phase_palette(int k_s) {
    std::vector<std::string> out;
    for (int i = 0; i < k_s; ++i) {
        const double h = 360.0 * double(i) / double(k_s);
        const double s = 0.62, v = 0.88;
        const double c = v * s;
        const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
        double r = 0, g = 0, b = 0;
        if (h < 60) { r = c; g = x; }
        else if (h < 120) { r = x; g = c; }
        else if (h < 180) { g = c; b = x; }
        else if (h < 240) { g = x; b = c; }
        else if (h < 300) { r = x; b = c; }
        else { r = c; b = x; }
        const double m = v - c;
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", int(std::lround((r + m) * 255)),
                      int(std::lround((g + m) * 255)), int(std::lround((b + m) * 255)));
        out.push_back(buf);
    }
    return out;
}

Config load_config_opt(const std::string& path) {
    return path.empty() ? Config() : load_config(path);
}

struct SynthArgs {
    std::uint64_t seed = 1;
    int frames = 300;
    std::string out;
    std::string config;
    bool features = false;
    int width = 256, height = 256;
    double sigma_mask = 0.6;
    int spikes = 0;
    double spike_height = 0.0;
    bool blur = false;
    int sequences = 8;
    double feat_sigma = 0.08;
    int boundary_width = 3;
    double boundary_sigma = 2.2;
    int min_dur = 8, max_dur = 26;
    double center_scale = 1.0;
};

void cmd_synth_scene(const SynthArgs& a, const Config& cfg) {
    rng::Xoshiro256pp g(rng::sub_seed(a.seed, 100));
    synth::SceneSpec spec;
    spec.width = a.width;
    spec.height = a.height;
    spec.seed = a.seed;
    spec.sigma_mask = a.sigma_mask;
    spec.spike_count = a.spikes;
    spec.spike_height = a.spike_height;
    spec.blur = a.blur;

    const double lim = 0.33 * double(std::min(a.width, a.height));
    spec.ellipse.ox = 0.5 * a.width + g.uniform(-8.0, 8.0);
    spec.ellipse.oy = 0.5 * a.height + g.uniform(-8.0, 8.0);
    spec.ellipse.l_major = g.uniform(0.92, 1.0) * lim;
    spec.ellipse.l_minor = g.uniform(0.94, 1.0) * spec.ellipse.l_major;
    spec.ellipse.phi = g.uniform(0.0, std::numbers::pi);

    spec.theta_deg.resize(size_t(a.frames), 0.0);
    for (int t = 1; t < a.frames; ++t)
        spec.theta_deg[size_t(t)] = std::clamp(
            spec.theta_deg[size_t(t - 1)] + g.uniform(-1.2, 1.2), -15.0, 15.0);

    spec.phase.resize(size_t(a.frames), 0);
    const int base = a.frames / cfg.k_s, extra = a.frames % cfg.k_s;
    for (int s = 0, t = 0; s < cfg.k_s && t < a.frames; ++s) {
        const int len = base + (s < extra ? 1 : 0);
        for (int j = 0; j < len && t < a.frames; ++j, ++t) spec.phase[size_t(t)] = s;
    }

    const synth::Scene scene = synth::gen_scene(spec, a.frames);

    fs::create_directories(a.out);
    io::Manifest man;
    man.k_s = cfg.k_s;
    man.width = a.width;
    man.height = a.height;
    man.seed = a.seed;
    for (int t = 0; t < a.frames; ++t) {
        io::ManifestFrame f;
        f.index = t;
        f.mask = zero_pad("mask", t, ".pgm");
        f.gray = zero_pad("gray", t, ".pgm");
        f.gt_phase = scene.gt_phase[size_t(t)];
        f.gt_theta = scene.gt_theta_deg[size_t(t)];
        io::write_mask_pgm(io::join_path(a.out, f.mask), scene.frames[size_t(t)].mask);
        io::write_gray_pgm(io::join_path(a.out, f.gray), scene.frames[size_t(t)].gray);
        man.frames.push_back(std::move(f));
    }
    io::save_manifest(man, io::join_path(a.out, "manifest.json"));

    json rep = {{"mode", "scene"}, {"frames", a.frames}, {"out", a.out}};
    std::cout << rep.dump() << "\n";
}

void cmd_synth_features(const SynthArgs& a, const Config& cfg) {
    synth::FeatureGenSpec spec;
    spec.k_s = cfg.k_s;
    spec.d = cfg.d_raw;
    spec.seed = a.seed;
    spec.sigma = a.feat_sigma;
    spec.min_duration = a.min_dur;
    spec.max_duration = a.max_dur;
    spec.boundary_width = a.boundary_width;
    spec.boundary_sigma = a.boundary_sigma;
    spec.center_scale = a.center_scale;

    const synth::FeatureDataset ds = synth::gen_features(spec, a.sequences);

    fs::create_directories(a.out);
    long total_frames = 0;
    for (int i = 0; i < a.sequences; ++i) {
        const std::string feat = zero_pad("seq", i, ".feat");
        io::write_features(io::join_path(a.out, feat), ds.sequences[size_t(i)]);
        io::Manifest man;
        man.k_s = cfg.k_s;
        man.width = 0;
        man.height = 0;
        man.seed = a.seed;
        for (int t = 0; t < ds.sequences[size_t(i)].rows; ++t) {
            io::ManifestFrame f;
            f.index = t;
            f.feature = feat;
            f.gt_phase = ds.labels[size_t(i)][size_t(t)];
            man.frames.push_back(std::move(f));
        }
        total_frames += ds.sequences[size_t(i)].rows;
        io::save_manifest(man, io::join_path(a.out, zero_pad("manifest", i, ".json")));
    }
    json rep = {{"mode", "features"},
                {"sequences", a.sequences},
                {"frames", total_frames},
                {"out", a.out}};
    std::cout << rep.dump() << "\n";
}

// Loads the frames referenced by a manifest, caching feature files and
// handing rows out in frame order.
struct BundleLoader {
    const io::Manifest& man;
    std::string dir;
    bool need_images = true;
    bool need_features = false;
    std::map<std::string, Mat> feats;
    std::map<std::string, int> next_row;
    size_t pos = 0;

    BundleLoader(const io::Manifest& m, std::string d) : man(m), dir(std::move(d)) {}

    std::optional<FrameBundle> operator()() {
        if (pos >= man.frames.size()) return std::nullopt;
        const io::ManifestFrame& f = man.frames[pos++];
        FrameBundle b;
        b.index = f.index;
        if (need_images) {
            if (f.mask.empty() || f.gray.empty())
                throw Error(ErrorCode::MissingInput,
                            "manifest frame " + std::to_string(f.index) +
                                " lacks mask/gray paths");
            b.mask = io::read_mask_pgm(io::join_path(dir, f.mask));
            b.gray = io::read_gray_pgm(io::join_path(dir, f.gray));
        }
        if (need_features) {
            if (f.feature.empty())
                throw Error(ErrorCode::MissingInput,
                            "manifest frame " + std::to_string(f.index) +
                                " lacks a feature path");
            const std::string full = io::join_path(dir, f.feature);
            auto it = feats.find(full);
            if (it == feats.end()) it = feats.emplace(full, io::read_features(full)).first;
            const int row = next_row[full]++;
            if (row >= it->second.rows)
                throw Error(ErrorCode::InvalidFormat,
                            "feature file has fewer rows than manifest frames: " + full);
            b.feature.assign(it->second.row(row), it->second.row(row) + it->second.cols);
        }
        b.external_phase = f.gt_phase;
        return b;
    }
};

struct RunArgs {
    std::string manifest, out, config, weights;
    bool geometry_only = false;
    bool emit_timings = false;
    bool svg = false;
};

void cmd_run(const RunArgs& a) {
    Config cfg = load_config_opt(a.config);
    const io::Manifest man = io::load_manifest(a.manifest);

    std::optional<LsSatWeights> weights;
    if (!a.weights.empty() && !a.geometry_only) {
        weights = load_weights(a.weights);
        if (weights->cfg.k_s != cfg.k_s || weights->cfg.d_raw != cfg.d_raw)
            throw Error(ErrorCode::InvalidConfig,
                        "weights dimensions disagree with the config (k_s/d_raw)");
        if (man.k_s != cfg.k_s)
            throw Error(ErrorCode::InvalidConfig, "manifest k_s disagrees with the config");
    }

    SessionState state;
    if (weights.has_value()) state.recognizer = &*weights;

    BundleLoader source(man, io::parent_dir(a.manifest));
    source.need_images = man.width > 0 && man.height > 0;
    source.need_features = weights.has_value();

    fs::create_directories(a.out);
    if (a.svg) fs::create_directories(io::join_path(a.out, "overlays"));

    std::string lines;
    const SessionSummary sum = run_session(
        std::function<std::optional<FrameBundle>()>(std::ref(source)), state, cfg,
        [&](const FrameResult& r) {
            lines += to_json_line(r, a.emit_timings);
            lines += '\n';
            if (a.svg)
                io::atomic_write(
                    io::join_path(io::join_path(a.out, "overlays"),
                                  zero_pad("frame", r.index, ".svg")),
                    svg::render_cues(man.width, man.height, r.cues, cfg.cue_colors));
        });
    io::atomic_write(io::join_path(a.out, "results.jsonl"), lines);

    json stages = json::object();
    for (const auto& [name, st] : sum.stages)
        stages[name] = {{"mean_ms", st.mean_ms}, {"sd_ms", st.sd_ms}};
    json summary = {{"frames", sum.frames},
                    {"fps", sum.fps},
                    {"total_ms", sum.total_ms},
                    {"stages", stages},
                    {"fallback_frames", sum.fallback_frames},
                    {"no_cue_frames", sum.no_cue_frames},
                    {"low_confidence_frames", sum.low_confidence_frames}};
    io::atomic_write(io::join_path(a.out, "summary.json"), summary.dump(2) + "\n");

    std::cout << json({{"frames", sum.frames}, {"fps", sum.fps}}).dump() << "\n";
}

struct TrainArgs {
    std::string data, out, config;
    std::uint64_t seed = 1;
    int epochs = 30;
    double lr = 1e-4;
};

void cmd_train(const TrainArgs& a) {
    const Config cfg = load_config_opt(a.config);

    std::vector<std::string> manifests;
    for (const auto& entry : fs::directory_iterator(a.data)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("manifest", 0) == 0 && entry.path().extension() == ".json")
            manifests.push_back(entry.path().string());
    }
    std::sort(manifests.begin(), manifests.end());
    if (manifests.empty())
        throw Error(ErrorCode::MissingInput, "no manifest_*.json files in " + a.data);

    std::vector<Mat> seqs;
    std::vector<std::vector<int>> labels;
    for (const std::string& mpath : manifests) {
        const io::Manifest man = io::load_manifest(mpath);
        BundleLoader load(man, io::parent_dir(mpath));
        load.need_images = false;
        load.need_features = true;
        Mat seq(int(man.frames.size()), cfg.d_raw);
        std::vector<int> lab;
        int t = 0;
        while (auto b = load()) {
            if (int(b->feature.size()) != cfg.d_raw)
                throw Error(ErrorCode::ShapeMismatch,
                            "feature width disagrees with config d_raw in " + mpath);
            if (!b->external_phase.has_value())
                throw Error(ErrorCode::MissingInput,
                            "training manifest lacks gt_phase: " + mpath);
            std::copy(b->feature.begin(), b->feature.end(), seq.row(t));
            lab.push_back(*b->external_phase);
            ++t;
        }
        seqs.push_back(std::move(seq));
        labels.push_back(std::move(lab));
    }

    LsSatConfig lc;
    lc.d_raw = cfg.d_raw;
    lc.kappa = cfg.kappa;
    lc.k_s = cfg.k_s;
    lc.tau = cfg.tau;
    lc.n_self = cfg.n_self;
    lc.n_cross = cfg.n_cross;
    lc.heads = cfg.heads;

    TrainConfig tc;
    tc.lr = a.lr;
    tc.epochs = a.epochs;
    tc.seed = a.seed;
    const TrainResult res = train_toy(seqs, labels, lc, tc);

    const std::string tmp = a.out + ".tmp";
    save_weights(res.weights, tmp);
    fs::rename(tmp, a.out);

    json rep = {{"sequences", long(seqs.size())},
                {"epochs", a.epochs},
                {"first_loss", res.loss_curve.front()},
                {"final_loss", res.loss_curve.back()},
                {"out", a.out}};
    std::cout << rep.dump() << "\n";
}

struct EvalArgs {
    std::string manifest, results, out, config;
};

double wrap_deg(double d) {
    d = std::fmod(d, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

void cmd_eval(const EvalArgs& a) {
    const io::Manifest man = io::load_manifest(a.manifest);
    const std::string text = io::read_file(a.results);

    std::map<long, FrameResult> results;
    size_t start = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        FrameResult r = frame_result_from_json(line);
        results.emplace(r.index, std::move(r));
    }

    std::vector<int> gt, pred, pred_stable;
    std::map<long, double> gt_theta;
    for (const io::ManifestFrame& f : man.frames)
        if (f.gt_theta.has_value()) gt_theta[f.index] = *f.gt_theta;

    std::vector<double> rot_pred, rot_gt;
    std::vector<double> dices;
    const std::string dir = io::parent_dir(a.manifest);
    long fallback = 0, no_cues = 0, low_conf = 0;

    for (const io::ManifestFrame& f : man.frames) {
        const auto it = results.find(f.index);
        if (it == results.end())
            throw Error(ErrorCode::LengthMismatch,
                        "results are missing frame " + std::to_string(f.index));
        const FrameResult& r = it->second;
        if (!f.gt_phase.has_value())
            throw Error(ErrorCode::MissingInput,
                        "manifest lacks gt_phase for frame " + std::to_string(f.index));
        gt.push_back(*f.gt_phase);
        pred.push_back(r.phase);
        pred_stable.push_back(r.phase_stable);
        if (r.flags.fallback_ellipse) ++fallback;
        if (r.flags.no_cues) ++no_cues;
        if (r.flags.low_confidence_rotation) ++low_conf;

        if (r.theta_deg.has_value() && r.ref_index.has_value() &&
            gt_theta.count(f.index) && gt_theta.count(*r.ref_index)) {
            rot_pred.push_back(*r.theta_deg);
            rot_gt.push_back(wrap_deg(gt_theta.at(f.index) - gt_theta.at(*r.ref_index)));
        }
        if (!f.mask.empty() && r.ellipse.has_value() && man.width > 0) {
            const BinaryMask m = io::read_mask_pgm(io::join_path(dir, f.mask));
            dices.push_back(
                dice(synth::fill_ellipse_mask(man.width, man.height, *r.ellipse), m));
        }
    }

    const ConfusionMatrix cm = confusion_matrix(pred, gt, man.k_s);
    const PhaseMetrics pm = phase_metrics(cm);
    long stable_hits = 0;
    for (size_t i = 0; i < gt.size(); ++i)
        if (gt[i] == pred_stable[i]) ++stable_hits;

    json rep;
    rep["frames"] = long(gt.size());
    rep["accuracy"] = pm.acc;
    rep["stable_accuracy"] = 100.0 * double(stable_hits) / double(gt.size());
    rep["precision"] = pm.pre;
    rep["recall"] = pm.rec;
    rep["jaccard"] = pm.jac;
    if (!rot_pred.empty()) {
        const MeanSd ms = rotation_error(rot_pred, rot_gt);
        rep["rotation"] = {{"count", long(rot_pred.size())}, {"mae", ms.mean}, {"sd", ms.sd}};
    } else {
        rep["rotation"] = nullptr;
    }
    if (!dices.empty()) {
        const MeanSd ms = mean_sd(dices);
        rep["dice"] = {{"count", long(dices.size())}, {"mean", ms.mean}, {"sd", ms.sd}};
    } else {
        rep["dice"] = nullptr;
    }
    rep["fallback_frames"] = fallback;
    rep["no_cue_frames"] = no_cues;
    rep["low_confidence_frames"] = low_conf;

    fs::create_directories(a.out);
    io::atomic_write(io::join_path(a.out, "metrics.json"), rep.dump(2) + "\n");
    io::atomic_write(io::join_path(a.out, "confusion.csv"), cm.to_csv());
    const RibbonExport rb = ribbon_export(pred, gt, phase_palette(man.k_s));
    io::atomic_write(io::join_path(a.out, "ribbons.svg"), rb.svg);
    io::atomic_write(io::join_path(a.out, "ribbons.csv"), rb.csv);

    std::cout << json({{"frames", long(gt.size())}, {"accuracy", pm.acc}}).dump() << "\n";
}

struct RenderArgs {
    std::string results, out, config;
    int width = 256, height = 256;
};

void cmd_render(const RenderArgs& a) {
    const Config cfg = load_config_opt(a.config);
    const std::string text = io::read_file(a.results);
    fs::create_directories(a.out);

    long rendered = 0;
    size_t start = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        const FrameResult r = frame_result_from_json(line);
        io::atomic_write(io::join_path(a.out, zero_pad("frame", r.index, ".svg")),
                         svg::render_cues(a.width, a.height, r.cues, cfg.cue_colors));
        ++rendered;
    }
    std::cout << json({{"rendered", rendered}, {"out", a.out}}).dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"limbus-guided AR pipeline tools"};
    app.require_subcommand(1);

    SynthArgs sa;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--seed", sa.seed);
    synth_cmd->add_option("--frames", sa.frames);
    synth_cmd->add_option("--out", sa.out)->required();
    synth_cmd->add_option("--config", sa.config);
    synth_cmd->add_flag("--features", sa.features,
                        "feature/label sequences instead of image frames");
    synth_cmd->add_option("--width", sa.width);
    synth_cmd->add_option("--height", sa.height);
    synth_cmd->add_option("--sigma-mask", sa.sigma_mask);
    synth_cmd->add_option("--spikes", sa.spikes);
    synth_cmd->add_option("--spike-height", sa.spike_height);
    synth_cmd->add_flag("--blur", sa.blur);
    synth_cmd->add_option("--sequences", sa.sequences);
    synth_cmd->add_option("--feat-sigma", sa.feat_sigma);
    synth_cmd->add_option("--boundary-width", sa.boundary_width);
    synth_cmd->add_option("--boundary-sigma", sa.boundary_sigma);
    synth_cmd->add_option("--min-dur", sa.min_dur);
    synth_cmd->add_option("--max-dur", sa.max_dur);
    synth_cmd->add_option("--center-scale", sa.center_scale);

    RunArgs ra;
    CLI::App* run_cmd = app.add_subcommand("run", "process a session manifest");
    run_cmd->add_option("--manifest", ra.manifest)->required();
    run_cmd->add_option("--out", ra.out)->required();
    run_cmd->add_option("--config", ra.config);
    run_cmd->add_option("--weights", ra.weights);
    run_cmd->add_flag("--geometry-only", ra.geometry_only,
                      "use manifest phases, skip the recognizer");
    run_cmd->add_flag("--emit-timings", ra.emit_timings);
    run_cmd->add_flag("--svg", ra.svg, "write per-frame overlay SVGs");

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "train the recognizer on features");
    train_cmd->add_option("--data", ta.data)->required();
    train_cmd->add_option("--out", ta.out)->required();
    train_cmd->add_option("--config", ta.config);
    train_cmd->add_option("--seed", ta.seed);
    train_cmd->add_option("--epochs", ta.epochs);
    train_cmd->add_option("--lr", ta.lr);

    EvalArgs ea;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score results against ground truth");
    eval_cmd->add_option("--manifest", ea.manifest)->required();
    eval_cmd->add_option("--results", ea.results)->required();
    eval_cmd->add_option("--out", ea.out)->required();
    eval_cmd->add_option("--config", ea.config);

    RenderArgs rra;
    CLI::App* render_cmd = app.add_subcommand("render", "draw overlay SVGs from results");
    render_cmd->add_option("--results", rra.results)->required();
    render_cmd->add_option("--out", rra.out)->required();
    render_cmd->add_option("--config", rra.config);
    render_cmd->add_option("--width", rra.width);
    render_cmd->add_option("--height", rra.height);

    try {
        app.parse(argc, argv);
        if (*synth_cmd) {
            const Config cfg = load_config_opt(sa.config);
            if (sa.features)
                cmd_synth_features(sa, cfg);
            else
                cmd_synth_scene(sa, cfg);
        } else if (*run_cmd) {
            cmd_run(ra);
        } else if (*train_cmd) {
            cmd_train(ta);
        } else if (*eval_cmd) {
            cmd_eval(ea);
        } else if (*render_cmd) {
            cmd_render(rra);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << json({{"error", "InvalidArgs"}, {"message", e.what()}}).dump() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << json({{"error", error_code_name(e.code())}, {"message", e.what()}}).dump()
                  << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json({{"error", "Internal"}, {"message", e.what()}}).dump() << "\n";
        return 1;
    }
}
