#include <phaco/svg.hpp>

#include <phaco/error.hpp>

#include <cmath>
#include <cstdio>

namespace phaco::svg {

namespace {

std::string fmt2(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

const std::string& palette_color(const std::vector<std::string>& palette, int slot) {
    if (slot < 0 || slot >= static_cast<int>(palette.size()) ||
        palette[static_cast<size_t>(slot)].empty())
        throw Error(ErrorCode::MissingColor,
                    "no color for palette slot " + std::to_string(slot));
    return palette[static_cast<size_t>(slot)];
}

} // namespace

std::string document(int width, int height, const std::string& body) {
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width) + "\" height=\"" + std::to_string(height) +
                      "\" viewBox=\"0 0 " + std::to_string(width) + " " +
                      std::to_string(height) + "\">\n";
    out += body;
    out += "</svg>\n";
    return out;
}

std::string rect(double x, double y, double w, double h, const std::string& fill) {
    return "<rect x=\"" + fmt2(x) + "\" y=\"" + fmt2(y) + "\" width=\"" + fmt2(w) +
           "\" height=\"" + fmt2(h) + "\" fill=\"" + fill + "\"/>\n";
}

std::string line(double x1, double y1, double x2, double y2, const std::string& stroke,
                 double stroke_width) {
    return "<line x1=\"" + fmt2(x1) + "\" y1=\"" + fmt2(y1) + "\" x2=\"" + fmt2(x2) +
           "\" y2=\"" + fmt2(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
           fmt2(stroke_width) + "\"/>\n";
}

std::string circle_outline(double cx, double cy, double r, const std::string& stroke,
                           double stroke_width) {
    return "<circle cx=\"" + fmt2(cx) + "\" cy=\"" + fmt2(cy) + "\" r=\"" + fmt2(r) +
           "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt2(stroke_width) +
           "\"/>\n";
}

std::string ellipse_outline(const EllipseParams& e, const std::string& stroke,
                            double stroke_width) {
    const double deg = e.phi * 180.0 / 3.14159265358979323846;
    return "<ellipse cx=\"" + fmt2(e.ox) + "\" cy=\"" + fmt2(e.oy) + "\" rx=\"" +
           fmt2(e.l_major) + "\" ry=\"" + fmt2(e.l_minor) + "\" transform=\"rotate(" +
           fmt2(deg) + " " + fmt2(e.ox) + " " + fmt2(e.oy) + ")\" fill=\"none\" stroke=\"" +
           stroke + "\" stroke-width=\"" + fmt2(stroke_width) + "\"/>\n";
}

std::string arc_polyline(const EllipticalArc& arc, const std::string& stroke,
                         double stroke_width, int samples) {
    std::string d = "M";
    for (int i = 0; i <= samples; ++i) {
        const Vec2 p = arc_point(arc, static_cast<double>(i) / samples);
        d += (i == 0 ? " " : " L ");
        d += fmt2(p.x) + " " + fmt2(p.y);
    }
    return "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" +
           fmt2(stroke_width) + "\"/>\n";
}

std::vector<std::string> default_palette() {
    // Slot order matches CueKind: FLC, PIG, PIC, SIG, SIC, CCR, RRL.
    return {"#2ecc71", "#f1c40f", "#e67e22", "#1abc9c", "#3498db", "#9b59b6", "#e74c3c"};
}

std::string render_cues(int width, int height, const std::vector<VisualCue>& cues,
                        const std::vector<std::string>& palette) {
    std::string body;
    for (const VisualCue& cue : cues) {
        const std::string& color = palette_color(palette, cue.color_id);
        if (const auto* e = std::get_if<EllipseParams>(&cue.geometry)) {
            body += ellipse_outline(*e, color, 2.0);
        } else if (const auto* s = std::get_if<LineSegment>(&cue.geometry)) {
            body += line(s->a.x, s->a.y, s->b.x, s->b.y, color, 2.0);
        } else if (const auto* a = std::get_if<EllipticalArc>(&cue.geometry)) {
            body += arc_polyline(*a, color, 2.0);
        } else if (const auto* c = std::get_if<Circle>(&cue.geometry)) {
            body += circle_outline(c->center.x, c->center.y, c->radius, color, 2.0);
        }
    }
    return document(width, height, body);
}

} // namespace phaco::svg
