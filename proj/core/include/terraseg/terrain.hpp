#pragma once

#include <cstddef>
#include <vector>

namespace terraseg {

/// Double-precision raster used for elevation models and derived layers.
struct Grid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> v;

    static Grid zeros(std::size_t h, std::size_t w) {
        Grid g;
        g.height = h;
        g.width = w;
        g.v.assign(h * w, 0.0);
        return g;
    }

    double& at(std::size_t y, std::size_t x) { return v[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return v[y * width + x]; }
    std::size_t cells() const { return height * width; }
};

struct TerrainRasters {
    Grid slope;   // gradient magnitude rescaled to [0, 1]
    Grid aspect;  // compass bearing of steepest descent / 360; flat cells 0
};

/// Central-difference slope and aspect from an elevation grid (one-sided
/// differences on borders). Aspect is measured clockwise from north (row 0 is
/// north, column extent is west-to-east) and mapped from [0, 360) degrees to
/// [0, 1). Requires at least a 3x3 grid.
TerrainRasters derive_terrain(const Grid& dem);

/// D8 drainage accumulation. Every cell drains to the strictly lower neighbour
/// with the steepest drop per unit distance (diagonals count sqrt(2)); ties
/// resolve to the first of N, NE, E, SE, S, SW, W, NW. The returned raster
/// counts the cells draining through each cell, including itself, so the
/// minimum is 1. Cells are settled in decreasing elevation order.
Grid flow_accumulation_d8(const Grid& dem);

/// Logarithmic squash of a non-negative raster onto [0, 1]:
/// log(1 + g) / log(1 + max(g)); identically-zero input stays zero.
Grid log_scale_unit(const Grid& g);

}  // namespace terraseg
