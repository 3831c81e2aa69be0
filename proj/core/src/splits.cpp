#include "terraseg/splits.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "terraseg/errors.hpp"
#include "terraseg/rng.hpp"

namespace terraseg {

const char* split_name(Split split) {
    switch (split) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    throw UsageError("split_name: invalid split value");
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    throw FormatError("unknown split name '" + name + "'");
}

std::map<std::string, Split> build_splits(std::vector<std::string> field_ids,
                                          const SplitFractions& fractions, std::uint64_t seed) {
    const std::array<double, 3> frac{fractions.train, fractions.val, fractions.test};
    for (double f : frac)
        if (f < 0.0) throw ConfigError("split fractions must be non-negative");
    const double total = frac[0] + frac[1] + frac[2];
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1, got " + std::to_string(total));

    std::sort(field_ids.begin(), field_ids.end());
    if (std::adjacent_find(field_ids.begin(), field_ids.end()) != field_ids.end())
        throw UsageError("build_splits: duplicate field id '" +
                         *std::adjacent_find(field_ids.begin(), field_ids.end()) + "'");

    const std::size_t n = field_ids.size();
    std::size_t populated = 0;
    for (double f : frac) populated += f > 0.0 ? 1 : 0;
    if (n < populated)
        throw UsageError("build_splits: " + std::to_string(populated) +
                         " splits need at least that many fields, got " + std::to_string(n));

    // Largest-remainder apportionment, then top up so every populated split
    // holds at least one field.
    std::array<std::size_t, 3> count{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double ideal = frac[i] * static_cast<double>(n);
        count[i] = static_cast<std::size_t>(std::floor(ideal));
        remainder[i] = ideal - static_cast<double>(count[i]);
        assigned += count[i];
    }
    while (assigned < n) {
        const std::size_t i = static_cast<std::size_t>(
            std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
        ++count[i];
        remainder[i] = -1.0;
        ++assigned;
    }
    for (std::size_t i = 0; i < 3; ++i) {
        if (frac[i] <= 0.0 || count[i] > 0) continue;
        const std::size_t donor = static_cast<std::size_t>(
            std::max_element(count.begin(), count.end()) - count.begin());
        --count[donor];
        ++count[i];
    }

    Rng rng(seed);
    rng.shuffle(field_ids);

    std::map<std::string, Split> out;
    std::size_t cursor = 0;
    const std::array<Split, 3> splits{Split::kTrain, Split::kVal, Split::kTest};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < count[i]; ++j) out[field_ids[cursor++]] = splits[i];
    return out;
}

namespace {

void check_field(const std::string& value, const char* column) {
    if (value.find_first_of(",\n\r") != std::string::npos)
        throw FormatError(std::string("manifest ") + column + " '" + value +
                          "' contains a delimiter character");
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open manifest for writing: " + path.string());
    out << "sample_id,field_id,split,augmentation\n";
    for (const ManifestRow& row : rows) {
        check_field(row.sample_id, "sample_id");
        check_field(row.field_id, "field_id");
        check_field(row.augmentation, "augmentation");
        out << row.sample_id << ',' << row.field_id << ',' << split_name(row.split) << ','
            << row.augmentation << '\n';
    }
    if (!out) throw IoError("failed writing manifest: " + path.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    auto split_line = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!s.empty() && s.back() == ',') cells.emplace_back();
        return cells;
    };
    if (!std::getline(in, line)) throw FormatError("manifest is empty: " + path.string());
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "sample_id,field_id,split,augmentation")
        throw FormatError("manifest header mismatch at line 1: '" + line + "'");
    std::vector<ManifestRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != 4)
            throw FormatError("manifest line " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " columns, expected 4");
        rows.push_back({cells[0], cells[1], parse_split(cells[2]), cells[3]});
    }
    return rows;
}

std::optional<double> imbalance_ratio(const Image& mask) {
    if (mask.channels != 1)
        throw DimensionError("imbalance_ratio: mask must be single-channel, got " +
                             std::to_string(mask.channels));
    std::size_t fg = 0;
    for (float v : mask.data) fg += v >= 0.5f ? 1 : 0;
    if (fg == 0) return std::nullopt;
    const std::size_t bg = mask.data.size() - fg;
    return static_cast<double>(bg) / static_cast<double>(fg);
}

ImbalanceStats summarize_ratios(std::vector<double> ratios) {
    if (ratios.empty()) throw UsageError("summarize_ratios: no ratios given");
    std::sort(ratios.begin(), ratios.end());
    ImbalanceStats s;
    s.n_masks = ratios.size();
    s.min = ratios.front();
    s.max = ratios.back();
    const std::size_t mid = ratios.size() / 2;
    s.median = ratios.size() % 2 == 1 ? ratios[mid] : 0.5 * (ratios[mid - 1] + ratios[mid]);
    s.mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) /
             static_cast<double>(ratios.size());
    double sq = 0.0;
    for (double r : ratios) sq += (r - s.mean) * (r - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(ratios.size()));
    return s;
}

ImbalanceStats imbalance_stats(const std::vector<Image>& masks) {
    std::vector<double> ratios;
    std::size_t empty = 0;
    for (const Image& mask : masks) {
        if (const auto r = imbalance_ratio(mask))
            ratios.push_back(*r);
        else
            ++empty;
    }
    if (ratios.empty())
        throw UsageError("imbalance_stats: no mask has any foreground pixel (" +
                         std::to_string(empty) + " empty masks)");
    ImbalanceStats s = summarize_ratios(std::move(ratios));
    s.n_empty = empty;
    return s;
}

}  // namespace terraseg
