#include <phaco/image.hpp>

#include <algorithm>
#include <cmath>

namespace phaco {

long BinaryMask::foreground_count() const {
    long n = 0;
    for (std::uint8_t b : bits) n += b ? 1 : 0;
    return n;
}

bool bilinear_sample(const GrayFrame& f, double x, double y, double& out) {
    if (!(x >= 0.0) || !(y >= 0.0) || !(x <= f.width - 1.0) || !(y <= f.height - 1.0)) return false;
    int x0 = std::min(int(x), f.width - 2);
    int y0 = std::min(int(y), f.height - 2);
    if (f.width == 1) x0 = 0;
    if (f.height == 1) y0 = 0;
    const double fx = x - x0;
    const double fy = y - y0;
    const int x1 = std::min(x0 + 1, f.width - 1);
    const int y1 = std::min(y0 + 1, f.height - 1);
    const double v00 = f.at(x0, y0), v10 = f.at(x1, y0);
    const double v01 = f.at(x0, y1), v11 = f.at(x1, y1);
    out = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
    return true;
}

} // namespace phaco
