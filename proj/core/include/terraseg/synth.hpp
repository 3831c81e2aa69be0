#pragma once

#include <cstdint>

#include "terraseg/field.hpp"
#include "terraseg/terrain.hpp"

namespace terraseg {

/// Seeded synthetic elevation model: a sum of Gaussian hills over a
/// low-amplitude smooth undulation, normalised to [0, 1]. With a single hill
/// the summit sits exactly at the grid centre.
Grid synth_dem(std::size_t height, std::size_t width, std::size_t n_hills, std::uint64_t seed);

/// Generates one complete synthetic field: terrain layers derived from a
/// seeded elevation model, vegetation/yield layers negatively correlated with
/// slope, and a ground-truth mask of disk-shaped sampling sites placed at the
/// per-quantile maxima of a flow-and-slope composite score. The disk radius
/// is scaled so the background/foreground pixel ratio stays within the
/// imbalance band [30, 800] observed on real fields.
FieldStack synth_field(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace terraseg
