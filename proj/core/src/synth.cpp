#include "terraseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "terraseg/errors.hpp"
#include "terraseg/rng.hpp"

namespace terraseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

void normalize_unit(Grid& g) {
    auto [lo_it, hi_it] = std::minmax_element(g.v.begin(), g.v.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi > lo) {
        const double inv = 1.0 / (hi - lo);
        for (double& v : g.v) v = (v - lo) * inv;
    } else {
        std::fill(g.v.begin(), g.v.end(), 0.0);
    }
}

/// Smooth periodic undulation from a handful of seeded cosine waves,
/// normalised to [0, 1].
Grid smooth_noise(std::size_t h, std::size_t w, Rng& rng) {
    Grid g = Grid::zeros(h, w);
    constexpr std::size_t kWaves = 4;
    double fy[kWaves], fx[kWaves], ph[kWaves], amp[kWaves];
    for (std::size_t k = 0; k < kWaves; ++k) {
        fy[k] = static_cast<double>(1 + rng.below(3));
        fx[k] = static_cast<double>(1 + rng.below(3));
        ph[k] = rng.uniform(0.0, 2.0 * kPi);
        amp[k] = 1.0 / static_cast<double>(k + 1);
    }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (std::size_t k = 0; k < kWaves; ++k)
                s += amp[k] * std::cos(2.0 * kPi *
                                           (fy[k] * static_cast<double>(y) / static_cast<double>(h) +
                                            fx[k] * static_cast<double>(x) / static_cast<double>(w)) +
                                       ph[k]);
            g.at(y, x) = s;
        }
    normalize_unit(g);
    return g;
}

Image grid_to_rgb(const Grid& g) {
    Image im = Image::zeros(g.height, g.width, 3);
    for (std::size_t c = 0; c < 3; ++c) {
        float* plane = im.plane(c);
        for (std::size_t i = 0; i < g.v.size(); ++i) plane[i] = static_cast<float>(g.v[i]);
    }
    return im;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

Grid synth_dem(std::size_t height, std::size_t width, std::size_t n_hills, std::uint64_t seed) {
    if (n_hills == 0) throw ConfigError("synth_dem: n_hills must be >= 1");
    Rng rng(seed);
    Grid dem = Grid::zeros(height, width);
    const double mn = static_cast<double>(std::min(height, width));

    struct Hill {
        double cy, cx, amp, sigma;
    };
    std::vector<Hill> hills;
    hills.reserve(n_hills);
    // The first hill is pinned to the exact centre with the largest
    // amplitude, which keeps the single-hill case unimodal.
    hills.push_back({(static_cast<double>(height) - 1.0) / 2.0,
                     (static_cast<double>(width) - 1.0) / 2.0, 1.0, mn / 6.0});
    for (std::size_t i = 1; i < n_hills; ++i) {
        hills.push_back({rng.uniform(0.15, 0.85) * static_cast<double>(height - 1),
                         rng.uniform(0.15, 0.85) * static_cast<double>(width - 1),
                         rng.uniform(0.4, 0.9), rng.uniform(mn / 10.0, mn / 5.0)});
    }
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            double z = 0.0;
            for (const Hill& hl : hills) {
                const double dy = static_cast<double>(y) - hl.cy;
                const double dx = static_cast<double>(x) - hl.cx;
                z += hl.amp * std::exp(-(dy * dy + dx * dx) / (2.0 * hl.sigma * hl.sigma));
            }
            dem.at(y, x) = z;
        }

    // Undulation small enough that it can never displace the summit of the
    // centre hill by even one cell.
    Grid noise = smooth_noise(height, width, rng);
    const double noise_amp = 0.5 / mn;
    for (std::size_t i = 0; i < dem.v.size(); ++i) dem.v[i] += noise_amp * (noise.v[i] - 0.5);

    normalize_unit(dem);
    return dem;
}

FieldStack synth_field(std::size_t height, std::size_t width, std::uint64_t seed) {
    Grid dem = synth_dem(height, width, 4, derive_seed(seed, 1));
    TerrainRasters terr = derive_terrain(dem);
    Grid flow_counts = flow_accumulation_d8(dem);
    Grid flow_unit = log_scale_unit(flow_counts);

    Rng veg_rng(derive_seed(seed, 2));
    Grid veg_noise = smooth_noise(height, width, veg_rng);
    Grid yld_noise = smooth_noise(height, width, veg_rng);
    Grid ndvi = Grid::zeros(height, width);
    Grid yld = Grid::zeros(height, width);
    for (std::size_t i = 0; i < ndvi.v.size(); ++i) {
        ndvi.v[i] = clamp01(0.2 + 0.6 * (1.0 - terr.slope.v[i]) + 0.2 * veg_noise.v[i]);
        yld.v[i] = clamp01(0.15 + 0.55 * (1.0 - terr.slope.v[i]) + 0.3 * yld_noise.v[i]);
    }

    // Candidate sampling sites: the maxima of the two top score-quantile
    // bands of a flow/slope composite.
    Grid score = Grid::zeros(height, width);
    for (std::size_t i = 0; i < score.v.size(); ++i)
        score.v[i] = 0.7 * flow_unit.v[i] + 0.3 * terr.slope.v[i];
    std::vector<double> sorted = score.v;
    std::sort(sorted.begin(), sorted.end());
    const double q95 = sorted[static_cast<std::size_t>(0.95 * static_cast<double>(sorted.size() - 1))];

    std::vector<std::size_t> sites;
    std::size_t best_all = 0, best_band = score.v.size();
    double best_all_v = -1.0, best_band_v = -1.0;
    for (std::size_t i = 0; i < score.v.size(); ++i) {
        if (score.v[i] > best_all_v) {
            best_all_v = score.v[i];
            best_all = i;
        }
        if (score.v[i] < q95 && score.v[i] > best_band_v) {
            best_band_v = score.v[i];
            best_band = i;
        }
    }
    sites.push_back(best_all);
    if (best_band < score.v.size()) sites.push_back(best_band);

    // Disk radius targeting a background/foreground ratio around 50; even
    // with fully overlapping or border-clipped disks the ratio stays inside
    // the [30, 800] imbalance band.
    const double cells = static_cast<double>(height * width);
    const std::size_t radius = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::lround(
               std::sqrt(cells / (51.0 * static_cast<double>(sites.size()) * kPi)))));

    Image mask = Image::zeros(height, width, 1);
    const long r = static_cast<long>(radius);
    for (std::size_t site : sites) {
        const long cy = static_cast<long>(site / width);
        const long cx = static_cast<long>(site % width);
        for (long dy = -r; dy <= r; ++dy) {
            const long y = cy + dy;
            if (y < 0 || y >= static_cast<long>(height)) continue;
            for (long dx = -r; dx <= r; ++dx) {
                const long x = cx + dx;
                if (x < 0 || x >= static_cast<long>(width)) continue;
                if (dy * dy + dx * dx <= r * r) mask.data[y * static_cast<long>(width) + x] = 1.0f;
            }
        }
    }

    FieldStack stack;
    stack.id = "synth-" + std::to_string(seed);
    stack.aspect = grid_to_rgb(terr.aspect);
    stack.flow = grid_to_rgb(flow_unit);
    stack.slope = grid_to_rgb(terr.slope);
    stack.ndvi = grid_to_rgb(ndvi);
    stack.yield_ = grid_to_rgb(yld);
    stack.mask = mask;
    return stack;
}

}  // namespace terraseg
