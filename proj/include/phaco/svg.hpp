#pragma once

#include <phaco/cues.hpp>

#include <string>
#include <vector>

// Minimal deterministic SVG emission: fixed two-decimal coordinates so equal
// inputs always produce byte-identical documents.
namespace phaco::svg {

std::string document(int width, int height, const std::string& body);

std::string rect(double x, double y, double w, double h, const std::string& fill);
std::string line(double x1, double y1, double x2, double y2, const std::string& stroke,
                 double stroke_width);
std::string circle_outline(double cx, double cy, double r, const std::string& stroke,
                           double stroke_width);
std::string ellipse_outline(const EllipseParams& e, const std::string& stroke,
                            double stroke_width);
std::string arc_polyline(const EllipticalArc& arc, const std::string& stroke,
                         double stroke_width, int samples = 64);

// Colors for the seven cue kinds, indexed by the kind's palette slot.
std::vector<std::string> default_palette();

// Complete overlay document for one frame. Throws MissingColor when a cue's
// palette slot is absent or empty.
std::string render_cues(int width, int height, const std::vector<VisualCue>& cues,
                        const std::vector<std::string>& palette);

} // namespace phaco::svg
