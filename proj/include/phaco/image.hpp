#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace phaco {

struct Pt {
    int x = 0;
    int y = 0;
    friend bool operator==(const Pt& a, const Pt& b) { return a.x == b.x && a.y == b.y; }
    friend bool operator!=(const Pt& a, const Pt& b) { return !(a == b); }
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// Row-major boolean grid; 1 = foreground.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask() = default;
    BinaryMask(int w, int h) : width(w), height(h), bits(std::size_t(w) * std::size_t(h), 0) {}

    std::uint8_t at(int x, int y) const { return bits[std::size_t(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return bits[std::size_t(y) * width + x]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    long foreground_count() const;
};

// Row-major intensities in [0, 1].
struct GrayFrame {
    int width = 0;
    int height = 0;
    std::vector<float> v;

    GrayFrame() = default;
    GrayFrame(int w, int h) : width(w), height(h), v(std::size_t(w) * std::size_t(h), 0.0f) {}

    float at(int x, int y) const { return v[std::size_t(y) * width + x]; }
    float& at(int x, int y) { return v[std::size_t(y) * width + x]; }
};

// Bilinear sample at (x, y); returns false (and leaves out untouched) when the
// sample point falls outside [0, w-1] x [0, h-1].
bool bilinear_sample(const GrayFrame& f, double x, double y, double& out);

} // namespace phaco
