#include "terraseg/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "terraseg/errors.hpp"
#include "terraseg/grid.hpp"
#include "terraseg/model.hpp"
#include "terraseg/splits.hpp"
#include "terraseg/train.hpp"

namespace terraseg {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& where, const std::string& expected) {
    throw ConfigError("cannot parse value '" + value + "' for key '" + key + "' at " + where +
                      " (expected " + expected + ")");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value,
                        const std::string& where) {
    std::uint64_t out = 0;
    const char* first = value.data();
    const char* last = first + value.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) bad_value(key, value, where, "a whole number");
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& value,
                       const std::string& where) {
    return static_cast<std::size_t>(parse_u64(key, value, where));
}

double parse_double(const std::string& key, const std::string& value, const std::string& where) {
    if (value.empty()) bad_value(key, value, where, "a number");
    errno = 0;
    char* end = nullptr;
    const double out = std::strtod(value.c_str(), &end);
    if (errno != 0 || end != value.c_str() + value.size())
        bad_value(key, value, where, "a number");
    return out;
}

}  // namespace

void RunConfig::validate() const {
    train.validate();
    model_config_by_name(preset);
    parse_loss_kind(loss);
    try {
        parse_split(split);
    } catch (const FormatError&) {
        throw ConfigError("unknown split name '" + split + "' (expected train, val, or test)");
    }
    if (!(threshold >= 0.0) || !(threshold <= 255.0))
        throw ConfigError("threshold must lie in [0, 255], got " + std::to_string(threshold));
    if (!(focal_alpha > 0.0) || !(focal_alpha < 1.0))
        throw ConfigError("focal_alpha must lie in (0, 1)");
    if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be non-negative");
    if (fields == 0) throw ConfigError("fields must be at least 1");
    if (field_height == 0 || field_width == 0)
        throw ConfigError("field extents must be positive");
    if (!(angle_min >= 0.0) || !(angle_max <= 360.0) || !(angle_min <= angle_max))
        throw ConfigError("rotation range must satisfy 0 <= angle_min <= angle_max <= 360");
}

RunConfig default_run_config(const std::string& command) {
    RunConfig cfg;
    if (command == "baseline-grid") {
        cfg.train = grid_train_defaults();
        cfg.focal_alpha = 0.75;
    }
    return cfg;
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& where) {
    if (key == "preset") {
        model_config_by_name(value);  // rejects unknown presets up front
        cfg.preset = value;
    } else if (key == "seed") {
        cfg.train.seed = parse_u64(key, value, where);
    } else if (key == "threshold") {
        cfg.threshold = parse_double(key, value, where);
    } else if (key == "data") {
        cfg.data_dir = value;
    } else if (key == "out") {
        cfg.out_dir = value;
    } else if (key == "lr") {
        cfg.train.learning_rate = parse_double(key, value, where);
    } else if (key == "batch_size") {
        cfg.train.batch_size = parse_size(key, value, where);
    } else if (key == "momentum") {
        cfg.train.momentum = parse_double(key, value, where);
    } else if (key == "weight_decay") {
        cfg.train.weight_decay = parse_double(key, value, where);
    } else if (key == "epochs") {
        cfg.train.epochs = parse_size(key, value, where);
    } else if (key == "checkpoint_every") {
        cfg.train.checkpoint_every = parse_size(key, value, where);
    } else if (key == "loss") {
        parse_loss_kind(value);
        cfg.loss = value;
    } else if (key == "focal_alpha") {
        cfg.focal_alpha = parse_double(key, value, where);
    } else if (key == "focal_gamma") {
        cfg.focal_gamma = parse_double(key, value, where);
    } else if (key == "resume") {
        cfg.resume = value;
    } else if (key == "split") {
        try {
            parse_split(value);
        } catch (const FormatError&) {
            bad_value(key, value, where, "train, val, or test");
        }
        cfg.split = value;
    } else if (key == "fields") {
        cfg.fields = parse_size(key, value, where);
    } else if (key == "height") {
        cfg.field_height = parse_size(key, value, where);
    } else if (key == "width") {
        cfg.field_width = parse_size(key, value, where);
    } else if (key == "random_crops") {
        cfg.random_crops = parse_size(key, value, where);
    } else if (key == "rotations") {
        cfg.rotations = parse_size(key, value, where);
    } else if (key == "angle_min") {
        cfg.angle_min = parse_double(key, value, where);
    } else if (key == "angle_max") {
        cfg.angle_max = parse_double(key, value, where);
    } else {
        throw ConfigError("unknown key '" + key + "' at " + where);
    }
}

void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::string& source_name) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line[0] == '\xEF' && line[1] == '\xBB' &&
            line[2] == '\xBF')
            line.erase(0, 3);  // UTF-8 byte-order mark
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;

        const std::string where = "line " + std::to_string(line_no) + " of " + source_name;
        if (stripped.front() == '[') {
            if (stripped.back() != ']' || stripped.size() < 3)
                throw ConfigError("malformed section header at " + where);
            continue;  // headers are organizational only
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value' at " + where);
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError("missing key before '=' at " + where);
        apply_config_value(cfg, key, value, where);
    }
}

RunConfig load_run_config(const std::string& command,
                          const std::optional<std::filesystem::path>& config_file,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg = default_run_config(command);
    if (config_file) {
        std::ifstream file(*config_file, std::ios::binary);
        if (!file) throw IoError("cannot open config file " + config_file->string());
        std::ostringstream text;
        text << file.rdbuf();
        apply_config_text(cfg, text.str(), config_file->filename().string());
    }
    for (const auto& [key, value] : overrides)
        apply_config_value(cfg, key, value, "flag --" + key);
    return cfg;
}

void write_frozen_config(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write frozen config " + path.string());
    char buf[64];
    const auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    out << "# fully-resolved run configuration\n";
    out << "preset = " << cfg.preset << '\n';
    out << "seed = " << cfg.train.seed << '\n';
    out << "threshold = " << num(cfg.threshold) << '\n';
    out << "data = " << cfg.data_dir.string() << '\n';
    out << "out = " << cfg.out_dir.string() << '\n';
    out << "lr = " << num(cfg.train.learning_rate) << '\n';
    out << "batch_size = " << cfg.train.batch_size << '\n';
    out << "momentum = " << num(cfg.train.momentum) << '\n';
    out << "weight_decay = " << num(cfg.train.weight_decay) << '\n';
    out << "epochs = " << cfg.train.epochs << '\n';
    out << "checkpoint_every = " << cfg.train.checkpoint_every << '\n';
    out << "loss = " << cfg.loss << '\n';
    out << "focal_alpha = " << num(cfg.focal_alpha) << '\n';
    out << "focal_gamma = " << num(cfg.focal_gamma) << '\n';
    out << "resume = " << cfg.resume.string() << '\n';
    out << "split = " << cfg.split << '\n';
    out << "fields = " << cfg.fields << '\n';
    out << "height = " << cfg.field_height << '\n';
    out << "width = " << cfg.field_width << '\n';
    out << "random_crops = " << cfg.random_crops << '\n';
    out << "rotations = " << cfg.rotations << '\n';
    out << "angle_min = " << num(cfg.angle_min) << '\n';
    out << "angle_max = " << num(cfg.angle_max) << '\n';
    if (!out) throw IoError("failed writing frozen config " + path.string());
}

}  // namespace terraseg
