#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/rng.hpp"
#include "terraseg/terrain.hpp"

using namespace terraseg;

namespace {

Grid make_grid(std::size_t h, std::size_t w, const std::vector<double>& values) {
    Grid g = Grid::zeros(h, w);
    g.v = values;
    return g;
}

/// Reference flow accumulation: trace each cell's drainage path to its sink
/// and credit every cell along the way. Independent of the settling-order
/// formulation used by the library.
Grid flow_by_path_tracing(const Grid& dem) {
    const long h = static_cast<long>(dem.height), w = static_cast<long>(dem.width);
    const std::array<long, 8> dy{-1, -1, 0, 1, 1, 1, 0, -1};
    const std::array<long, 8> dx{0, 1, 1, 1, 0, -1, -1, -1};
    auto drain = [&](long y, long x) -> long {
        double best = 0.0;
        long target = -1;
        for (std::size_t k = 0; k < 8; ++k) {
            const long ny = y + dy[k], nx = x + dx[k];
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            const double dist = (dy[k] != 0 && dx[k] != 0) ? std::sqrt(2.0) : 1.0;
            const double gradient = (dem.at(y, x) - dem.at(ny, nx)) / dist;
            if (gradient > best) {
                best = gradient;
                target = ny * w + nx;
            }
        }
        return target;
    };
    Grid acc = Grid::zeros(dem.height, dem.width);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            long cur = y * w + x;
            acc.v[cur] += 1.0;
            while (true) {
                const long next = drain(cur / w, cur % w);
                if (next < 0) break;
                acc.v[next] += 1.0;
                cur = next;
            }
        }
    return acc;
}

}  // namespace

TEST(FlowAccumulation, CenterPitCollectsAllNeighbours) {
    // A 3x3 bowl: every border cell drains into the centre.
    Grid dem = make_grid(3, 3,
                         {1.0, 1.0, 1.0,  //
                          1.0, 0.0, 1.0,  //
                          1.0, 1.0, 1.0});
    const Grid acc = flow_accumulation_d8(dem);
    EXPECT_DOUBLE_EQ(acc.at(1, 1), 9.0);
    EXPECT_DOUBLE_EQ(acc.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(acc.at(2, 1), 1.0);
}

TEST(FlowAccumulation, MonotoneRampAccumulatesDownhill) {
    // Strictly increasing 1xN ramp: the lowest cell receives the whole row,
    // so accumulation reads [N, N-1, ..., 1] from the low end upwards.
    constexpr std::size_t kN = 7;
    Grid dem = Grid::zeros(1, kN);
    for (std::size_t x = 0; x < kN; ++x) dem.at(0, x) = static_cast<double>(x + 1);
    const Grid acc = flow_accumulation_d8(dem);
    for (std::size_t x = 0; x < kN; ++x)
        EXPECT_DOUBLE_EQ(acc.at(0, x), static_cast<double>(kN - x)) << "column " << x;
}

TEST(FlowAccumulation, FlatTerrainStaysAtOne) {
    Grid dem = Grid::zeros(4, 4);
    const Grid acc = flow_accumulation_d8(dem);
    for (double v : acc.v) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(FlowAccumulation, DiagonalDistancePenaltyPrefersCardinal) {
    // Equal drops straight down and diagonally: the cardinal neighbour wins
    // because the diagonal distance divides the gradient by sqrt(2).
    Grid dem = make_grid(2, 2,
                         {1.0, 1.0,  //
                          0.0, 0.0});
    const Grid acc = flow_accumulation_d8(dem);
    // (0,0) drains south to (1,0); (0,1) drains south to (1,1).
    EXPECT_DOUBLE_EQ(acc.at(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(acc.at(1, 1), 2.0);
}

TEST(FlowAccumulation, TieBreaksInRingOrder) {
    // Centre cell of a uniform rim: all eight neighbours drop equally, the
    // first ring direction (north) must win.
    Grid dem = make_grid(3, 3,
                         {0.0, 0.0, 0.0,  //
                          0.0, 1.0, 0.0,  //
                          0.0, 0.0, 0.0});
    const Grid acc = flow_accumulation_d8(dem);
    EXPECT_DOUBLE_EQ(acc.at(0, 1), 2.0);  // north neighbour received the centre
    EXPECT_DOUBLE_EQ(acc.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(acc.at(1, 0), 1.0);
}

TEST(FlowAccumulation, MatchesPathTracingOnRandomTerrain) {
    Rng rng(0xd8d8d8);
    for (int trial = 0; trial < 20; ++trial) {
        Grid dem = Grid::zeros(8, 8);
        for (double& v : dem.v) v = rng.uniform();
        const Grid fast = flow_accumulation_d8(dem);
        const Grid slow = flow_by_path_tracing(dem);
        for (std::size_t i = 0; i < dem.cells(); ++i)
            ASSERT_DOUBLE_EQ(fast.v[i], slow.v[i]) << "trial " << trial << " cell " << i;
    }
}

TEST(DeriveTerrain, RejectsTinyGrids) {
    EXPECT_THROW(derive_terrain(Grid::zeros(2, 5)), DimensionError);
    EXPECT_THROW(derive_terrain(Grid::zeros(5, 2)), DimensionError);
}

TEST(DeriveTerrain, EastFacingPlane) {
    // Elevation rises with x, so the steepest descent points west (270 deg).
    Grid dem = Grid::zeros(5, 5);
    for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 5; ++x) dem.at(y, x) = static_cast<double>(x);
    const TerrainRasters t = derive_terrain(dem);
    for (double a : t.aspect.v) EXPECT_NEAR(a, 270.0 / 360.0, 1e-12);
    // Uniform gradient: slope is constant and rescaled to its own maximum.
    for (double s : t.slope.v) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(DeriveTerrain, NorthDescendingPlane) {
    // Elevation rises with y (southwards), steepest descent points north (0).
    Grid dem = Grid::zeros(4, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) dem.at(y, x) = static_cast<double>(y);
    const TerrainRasters t = derive_terrain(dem);
    for (double a : t.aspect.v) EXPECT_NEAR(a, 0.0, 1e-12);
}

TEST(DeriveTerrain, SouthAndEastBearings) {
    // Falling towards growing y -> descent bearing south (180 deg).
    Grid south = Grid::zeros(4, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) south.at(y, x) = -static_cast<double>(y);
    for (double a : derive_terrain(south).aspect.v) EXPECT_NEAR(a, 180.0 / 360.0, 1e-12);

    // Falling towards growing x -> descent bearing east (90 deg).
    Grid east = Grid::zeros(4, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) east.at(y, x) = -static_cast<double>(x);
    for (double a : derive_terrain(east).aspect.v) EXPECT_NEAR(a, 90.0 / 360.0, 1e-12);
}

TEST(DeriveTerrain, FlatCellsReadZero) {
    const TerrainRasters t = derive_terrain(Grid::zeros(3, 3));
    for (double s : t.slope.v) EXPECT_DOUBLE_EQ(s, 0.0);
    for (double a : t.aspect.v) EXPECT_DOUBLE_EQ(a, 0.0);
}

TEST(DeriveTerrain, SlopeScaledToUnitMaximum) {
    Grid dem = Grid::zeros(3, 3);
    dem.at(1, 1) = 2.0;
    const TerrainRasters t = derive_terrain(dem);
    const double peak = *std::max_element(t.slope.v.begin(), t.slope.v.end());
    EXPECT_DOUBLE_EQ(peak, 1.0);
    for (double s : t.slope.v) {
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(LogScaleUnit, SquashesOntoUnitInterval) {
    Grid g = make_grid(1, 3, {0.0, 1.0, 3.0});
    const Grid s = log_scale_unit(g);
    EXPECT_DOUBLE_EQ(s.v[0], 0.0);
    EXPECT_NEAR(s.v[1], std::log(2.0) / std::log(4.0), 1e-15);
    EXPECT_DOUBLE_EQ(s.v[2], 1.0);
}

TEST(LogScaleUnit, AllZeroStaysZero) {
    const Grid s = log_scale_unit(Grid::zeros(2, 2));
    for (double v : s.v) EXPECT_DOUBLE_EQ(v, 0.0);
}
