#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tprox/denoiser.hpp"

namespace tprox {

struct Checkpoint {
    Architecture arch;
    std::vector<double> params;
    std::vector<double> ema;
    std::uint64_t step = 0;

    DenoiserModel model() const { return {arch, params}; }
    DenoiserModel ema_model() const { return {arch, ema}; }
};

// "TDCK" | u32 version | u64 P | u32 len + descriptor | P f64 params | P f64 ema | u64 step (little-endian).
std::vector<unsigned char> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

} // namespace tprox
