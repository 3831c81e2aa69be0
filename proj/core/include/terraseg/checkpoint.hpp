#pragma once

// Binary checkpoint container. Layout, all little-endian:
//   magic "SSEG" | u32 version | u32 tensor count
//   per tensor:  u16 name length | name bytes (UTF-8) | u8 rank | u32 extent
//                per axis | f32 values, row-major
//   trailer:     u32 CRC-32 (reflected 0xEDB88320) of every preceding byte
// A file is parsed and integrity-checked in full before any caller state is
// touched, so a truncated or corrupt checkpoint never leaves a half-restored
// model behind.

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "terraseg/optim.hpp"
#include "terraseg/params.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

/// Reflected CRC-32 over a byte range (polynomial 0xEDB88320, init and final
/// xor 0xFFFFFFFF).
std::uint32_t crc32(const unsigned char* data, std::size_t size);

/// Raw container access. write_checkpoint replaces the target atomically
/// (temp file + rename); read_checkpoint validates magic, version, structure,
/// and CRC before returning.
void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

/// Everything a resumed run needs beyond the parameters themselves.
struct TrainingSnapshot {
    std::size_t epoch = 0;
    std::size_t step_count = 0;
    bool has_optimizer = false;
    std::unordered_map<std::string, std::vector<float>> momentum;
};

/// Persist parameters plus, when an optimizer is supplied, its momentum
/// buffers ("optim.<param>.momentum"), step counter ("optim.step"), and the
/// epoch just finished ("meta.epoch").
void save_training_checkpoint(const std::string& path, const ParamStore<float>& params,
                              const SgdMomentum<float>* optim, std::size_t epoch);

/// Restore every parameter bit-exactly and return the training snapshot.
/// Every entry in the file must be accounted for: a missing or extra
/// parameter, or an extent mismatch, aborts before anything is written.
TrainingSnapshot load_training_checkpoint(const std::string& path, ParamStore<float>& params);

}  // namespace terraseg
