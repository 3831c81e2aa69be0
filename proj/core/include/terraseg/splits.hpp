#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "terraseg/image.hpp"

namespace terraseg {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct SplitFractions {
    double train = 0.80;
    double val = 0.10;
    double test = 0.10;
};

/// Deterministically assigns whole fields to train/val/test so every
/// augmented sample derived from a field lands in the same split. Fractions
/// must sum to one; every split with a positive fraction receives at least
/// one field, so the number of fields must not be smaller than the number of
/// populated splits. Ids are de-duplicated, sorted, then shuffled with the
/// seed before slicing.
std::map<std::string, Split> build_splits(std::vector<std::string> field_ids,
                                          const SplitFractions& fractions, std::uint64_t seed);

/// One line of the dataset manifest: which augmented sample belongs to which
/// field and split.
struct ManifestRow {
    std::string sample_id;
    std::string field_id;
    Split split = Split::kTrain;
    std::string augmentation;
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

/// Background/foreground pixel ratio of one {0,1} mask. A mask without any
/// background reads as ratio zero; a mask without any foreground has no
/// ratio and is tallied separately by imbalance_stats.
std::optional<double> imbalance_ratio(const Image& mask);

struct ImbalanceStats {
    std::size_t n_masks = 0;  ///< masks that contributed a ratio
    std::size_t n_empty = 0;  ///< masks without a single foreground pixel
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double median = 0.0;  ///< midpoint average for even counts
    double stddev = 0.0;  ///< population standard deviation
};

/// Summary statistics over a set of ratios; rejects an empty set.
ImbalanceStats summarize_ratios(std::vector<double> ratios);

/// Ratio statistics over a mask collection. Masks without foreground are
/// counted in n_empty; if no mask has foreground at all the dataset is
/// unusable and an error is raised.
ImbalanceStats imbalance_stats(const std::vector<Image>& masks);

}  // namespace terraseg
