#include "terraseg/checkpoint.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "terraseg/errors.hpp"

namespace terraseg {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'E', 'G'};

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int bit = 0; bit < 8; ++bit) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8)
        out.push_back(static_cast<unsigned char>((v >> shift) & 0xFF));
}

void put_f32(std::vector<unsigned char>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u32(out, bits);
}

[[noreturn]] void truncated(std::size_t offset, const std::string& what) {
    throw FormatError("checkpoint truncated at byte " + std::to_string(offset) +
                      " while reading " + what);
}

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

    std::size_t offset() const { return offset_; }
    std::size_t remaining() const { return bytes_.size() - offset_; }

    const unsigned char* take(std::size_t n, const std::string& what) {
        if (remaining() < n) truncated(offset_, what);
        const unsigned char* p = bytes_.data() + offset_;
        offset_ += n;
        return p;
    }

    std::uint16_t u16(const std::string& what) {
        const unsigned char* p = take(2, what);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32(const std::string& what) {
        const unsigned char* p = take(4, what);
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }

    float f32(const std::string& what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t offset_ = 0;
};

std::size_t as_size(float v, const std::string& what) {
    if (!(v >= 0.0f) || v != static_cast<float>(static_cast<std::size_t>(v)))
        throw FormatError("checkpoint entry '" + what + "' does not hold a whole number");
    return static_cast<std::size_t>(v);
}

NamedTensor scalar_entry(const std::string& name, float value) {
    return NamedTensor{name, Shape{1}, std::vector<float>{value}};
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t size) {
    static const std::array<std::uint32_t, 256> table = make_crc_table();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::unordered_set<std::string> seen;
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kCheckpointVersion);
    if (tensors.size() > std::numeric_limits<std::uint32_t>::max())
        throw UsageError("checkpoint: too many tensors");
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));

    for (const NamedTensor& t : tensors) {
        if (!seen.insert(t.name).second)
            throw UsageError("checkpoint: duplicate tensor name '" + t.name + "'");
        if (t.name.empty() || t.name.size() > std::numeric_limits<std::uint16_t>::max())
            throw UsageError("checkpoint: bad tensor name length for '" + t.name + "'");
        if (t.values.size() != shape_numel(t.shape))
            throw DimensionError("checkpoint: values of '" + t.name +
                                 "' do not match the declared extents");
        put_u16(out, static_cast<std::uint16_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        out.push_back(static_cast<unsigned char>(t.shape.size()));
        for (std::size_t extent : t.shape) put_u32(out, static_cast<std::uint32_t>(extent));
        for (float v : t.values) put_f32(out, v);
    }
    put_u32(out, crc32(out.data(), out.size()));

    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path temp = target.string() + ".tmp";
    {
        std::ofstream file(temp, std::ios::binary | std::ios::trunc);
        if (!file) throw IoError("cannot create checkpoint file " + temp.string());
        file.write(reinterpret_cast<const char*>(out.data()),
                   static_cast<std::streamsize>(out.size()));
        if (!file) throw IoError("failed writing checkpoint file " + temp.string());
    }
    std::error_code ec;
    fs::rename(temp, target, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path + ": " + ec.message());
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary | std::ios::ate);
    if (!file) throw IoError("cannot open checkpoint file " + path);
    const std::streamsize size = file.tellg();
    file.seekg(0);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
    if (size > 0) file.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!file) throw IoError("failed reading checkpoint file " + path);

    Reader in(bytes);
    const unsigned char* magic = in.take(4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("checkpoint magic mismatch at byte 0: not a checkpoint file");
    const std::uint32_t version = in.u32("format version");
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                          " at byte 4 (expected " + std::to_string(kCheckpointVersion) + ")");
    const std::uint32_t count = in.u32("tensor count");

    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    std::unordered_set<std::string> seen;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::size_t entry_offset = in.offset();
        const std::uint16_t name_len = in.u16("tensor name length");
        const unsigned char* name_bytes = in.take(name_len, "tensor name");
        std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
        if (!seen.insert(name).second)
            throw FormatError("duplicate tensor name '" + name + "' at byte " +
                              std::to_string(entry_offset));
        const unsigned char rank = *in.take(1, "tensor rank");
        Shape shape(rank);
        for (unsigned char a = 0; a < rank; ++a) shape[a] = in.u32("tensor extent");
        const std::size_t numel = shape_numel(shape);
        std::vector<float> values(numel);
        for (std::size_t i = 0; i < numel; ++i) values[i] = in.f32("tensor values");
        tensors.push_back(NamedTensor{std::move(name), std::move(shape), std::move(values)});
    }

    const std::size_t crc_offset = in.offset();
    const std::uint32_t stored = in.u32("trailing checksum");
    const std::uint32_t actual = crc32(bytes.data(), crc_offset);
    if (stored != actual)
        throw FormatError("checkpoint checksum mismatch at byte " + std::to_string(crc_offset));
    if (in.remaining() != 0)
        throw FormatError("checkpoint has " + std::to_string(in.remaining()) +
                          " trailing bytes after the checksum at byte " +
                          std::to_string(in.offset()));
    return tensors;
}

void save_training_checkpoint(const std::string& path, const ParamStore<float>& params,
                              const SgdMomentum<float>* optim, std::size_t epoch) {
    std::vector<NamedTensor> tensors;
    tensors.reserve(params.size() * 2 + 2);
    for (const std::string& name : params.names()) {
        const auto& p = params.at(name);
        tensors.push_back(NamedTensor{name, p.shape(), p.values()});
    }
    if (optim != nullptr) {
        for (const std::string& name : params.names()) {
            const auto it = optim->buffers().find(name);
            if (it == optim->buffers().end()) continue;  // untouched parameter
            tensors.push_back(
                NamedTensor{"optim." + name + ".momentum", params.at(name).shape(), it->second});
        }
        tensors.push_back(scalar_entry("optim.step", static_cast<float>(optim->step_count())));
    }
    tensors.push_back(scalar_entry("meta.epoch", static_cast<float>(epoch)));
    write_checkpoint(path, tensors);
}

TrainingSnapshot load_training_checkpoint(const std::string& path, ParamStore<float>& params) {
    const std::vector<NamedTensor> tensors = read_checkpoint(path);

    TrainingSnapshot snapshot;
    std::unordered_map<std::string, const NamedTensor*> by_name;
    for (const NamedTensor& t : tensors) by_name.emplace(t.name, &t);

    // Stage every mutation first; apply only once the whole file checks out.
    for (const std::string& name : params.names()) {
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw FormatError("checkpoint is missing parameter '" + name + "'");
        if (it->second->shape != params.at(name).shape())
            throw DimensionError("checkpoint extents for '" + name +
                                 "' do not match the model");
        by_name.erase(it);
    }
    for (const auto& [name, entry] : by_name) {
        if (name.rfind("optim.", 0) == 0 && name.size() > 15 &&
            name.compare(name.size() - 9, 9, ".momentum") == 0) {
            const std::string param = name.substr(6, name.size() - 15);
            if (!params.contains(param))
                throw FormatError("checkpoint momentum entry '" + name +
                                  "' refers to an unknown parameter");
            if (entry->shape != params.at(param).shape())
                throw DimensionError("checkpoint extents for '" + name +
                                     "' do not match the model");
            snapshot.momentum.emplace(param, entry->values);
            snapshot.has_optimizer = true;
        } else if (name == "optim.step") {
            snapshot.step_count = as_size(entry->values.at(0), name);
            snapshot.has_optimizer = true;
        } else if (name == "meta.epoch") {
            snapshot.epoch = as_size(entry->values.at(0), name);
        } else {
            throw FormatError("checkpoint holds unexpected entry '" + name + "'");
        }
    }

    for (const NamedTensor& t : tensors)
        if (params.contains(t.name)) params.at(t.name).values_mut() = t.values;
    return snapshot;
}

}  // namespace terraseg
