#include "terraseg/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "terraseg/errors.hpp"

namespace terraseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Neighbour ring in the fixed tie-break order N, NE, E, SE, S, SW, W, NW.
constexpr int kDy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
const double kDist[8] = {1.0,          1.4142135623730951, 1.0, 1.4142135623730951,
                         1.0,          1.4142135623730951, 1.0, 1.4142135623730951};

/// Index of the steepest strictly-descending D8 neighbour, or -1 for a pit.
int drain_direction(const Grid& dem, std::size_t y, std::size_t x) {
    const double z = dem.at(y, x);
    int best = -1;
    double best_drop = 0.0;
    for (int d = 0; d < 8; ++d) {
        const long ny = static_cast<long>(y) + kDy[d];
        const long nx = static_cast<long>(x) + kDx[d];
        if (ny < 0 || nx < 0 || ny >= static_cast<long>(dem.height) ||
            nx >= static_cast<long>(dem.width))
            continue;
        const double drop = (z - dem.at(ny, nx)) / kDist[d];
        if (drop > best_drop) {
            best_drop = drop;
            best = d;
        }
    }
    return best;
}

}  // namespace

TerrainRasters derive_terrain(const Grid& dem) {
    if (dem.height < 3 || dem.width < 3)
        throw DimensionError("derive_terrain: grid must be at least 3x3");
    const std::size_t h = dem.height, w = dem.width;
    TerrainRasters out{Grid::zeros(h, w), Grid::zeros(h, w)};
    double max_mag = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double gx = x == 0       ? dem.at(y, 1) - dem.at(y, 0)
                              : x == w - 1 ? dem.at(y, w - 1) - dem.at(y, w - 2)
                                           : 0.5 * (dem.at(y, x + 1) - dem.at(y, x - 1));
            const double gy = y == 0       ? dem.at(1, x) - dem.at(0, x)
                              : y == h - 1 ? dem.at(h - 1, x) - dem.at(h - 2, x)
                                           : 0.5 * (dem.at(y + 1, x) - dem.at(y - 1, x));
            const double mag = std::sqrt(gx * gx + gy * gy);
            out.slope.at(y, x) = mag;
            max_mag = std::max(max_mag, mag);
            if (mag == 0.0) {
                out.aspect.at(y, x) = 0.0;  // flat: bearing undefined, fixed to 0
            } else {
                // Descent east component is -gx; its north component is +gy
                // because rows grow southward. Bearing clockwise from north.
                double deg = std::atan2(-gx, gy) * 180.0 / kPi;
                if (deg < 0.0) deg += 360.0;
                if (deg >= 360.0) deg -= 360.0;
                out.aspect.at(y, x) = deg / 360.0;
            }
        }
    }
    if (max_mag > 0.0)
        for (double& s : out.slope.v) s /= max_mag;
    return out;
}

Grid flow_accumulation_d8(const Grid& dem) {
    const std::size_t n = dem.cells();
    Grid acc = Grid::zeros(dem.height, dem.width);
    std::fill(acc.v.begin(), acc.v.end(), 1.0);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dem.v[a] > dem.v[b]; });

    for (std::size_t idx : order) {
        const std::size_t y = idx / dem.width;
        const std::size_t x = idx % dem.width;
        const int d = drain_direction(dem, y, x);
        if (d < 0) continue;
        const std::size_t target = static_cast<std::size_t>(
            static_cast<long>(idx) + kDy[d] * static_cast<long>(dem.width) + kDx[d]);
        acc.v[target] += acc.v[idx];
    }
    return acc;
}

Grid log_scale_unit(const Grid& g) {
    Grid out = Grid::zeros(g.height, g.width);
    double mx = 0.0;
    for (double v : g.v) mx = std::max(mx, v);
    if (mx <= 0.0) return out;
    const double inv = 1.0 / std::log1p(mx);
    for (std::size_t i = 0; i < g.v.size(); ++i) out.v[i] = std::log1p(g.v[i]) * inv;
    return out;
}

}  // namespace terraseg
