#pragma once

// Run configuration: a flat `key = value` file format with `#` comments and
// cosmetic `[section]` headers, overlaid by command-line flag overrides.
// Precedence is flags over file over defaults, and every run can freeze its
// fully-resolved configuration next to its outputs for provenance.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "terraseg/optim.hpp"

namespace terraseg {

struct RunConfig {
    std::string preset = "tiny";  // model preset name: paper | tiny
    double threshold = 190.0;     // mask cutoff in the 8-bit sample domain
    std::filesystem::path data_dir;
    std::filesystem::path out_dir;

    TrainConfig train;  // also carries the run seed
    std::string loss = "bce";
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    std::filesystem::path resume;

    std::string split = "test";  // which split `eval` reports on

    // Synthetic-field generation.
    std::size_t fields = 8;
    std::size_t field_height = 640;
    std::size_t field_width = 640;

    // Augmentation counts and rotation range.
    std::size_t random_crops = 10;
    std::size_t rotations = 20;
    double angle_min = 5.0;
    double angle_max = 60.0;

    void validate() const;
};

/// Command-aware defaults: `baseline-grid` starts from the comparison-arm
/// protocol (batch 32, checkpoint cadence 500, positive-class focal weight
/// 0.75); everything else starts from the standard training defaults.
RunConfig default_run_config(const std::string& command);

/// Applies one configuration key. Unknown keys and unparsable values throw
/// ConfigError naming the key (and `where`, e.g. "line 3 of run.ini").
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& where);

/// Parses a whole config file body. Lines hold `key = value`; `#` starts a
/// comment; `[section]` headers group lines visually but do not scope keys.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source_name);

/// defaults <- file (optional) <- flag overrides, in that order.
RunConfig load_run_config(const std::string& command,
                          const std::optional<std::filesystem::path>& config_file,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

/// Writes the fully-resolved configuration as a parseable `key = value` file.
void write_frozen_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace terraseg
