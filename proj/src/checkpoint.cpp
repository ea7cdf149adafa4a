#include "tprox/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "tprox/errors.hpp"

namespace tprox {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_le(std::vector<unsigned char>& b, std::uint64_t v, int bytes) {
    for (int k = 0; k < bytes; ++k) b.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xff));
}

std::uint64_t get_le(const std::vector<unsigned char>& b, std::size_t& pos, int bytes) {
    if (pos + static_cast<std::size_t>(bytes) > b.size()) throw IoError("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(b[pos + k]) << (8 * k);
    pos += static_cast<std::size_t>(bytes);
    return v;
}

} // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
    const std::size_t P = c.params.size();
    if (c.ema.size() != P || P != c.arch.param_count())
        throw std::invalid_argument("encode_checkpoint: parameter count mismatch");
    const std::string desc = c.arch.descriptor();
    std::vector<unsigned char> b;
    b.reserve(32 + desc.size() + 16 * P);
    for (char ch : {'T', 'D', 'C', 'K'}) b.push_back(static_cast<unsigned char>(ch));
    put_le(b, kVersion, 4);
    put_le(b, P, 8);
    put_le(b, desc.size(), 4);
    b.insert(b.end(), desc.begin(), desc.end());
    for (double v : c.params) put_le(b, std::bit_cast<std::uint64_t>(v), 8);
    for (double v : c.ema) put_le(b, std::bit_cast<std::uint64_t>(v), 8);
    put_le(b, c.step, 8);
    return b;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& b) {
    if (b.size() < 4 || std::memcmp(b.data(), "TDCK", 4) != 0) throw IoError("checkpoint: bad magic");
    std::size_t pos = 4;
    if (get_le(b, pos, 4) != kVersion) throw IoError("checkpoint: unsupported version");
    const std::uint64_t P = get_le(b, pos, 8);
    const std::uint64_t len = get_le(b, pos, 4);
    if (pos + len > b.size()) throw IoError("checkpoint: truncated descriptor");
    const std::string desc(reinterpret_cast<const char*>(b.data() + pos), len);
    pos += len;
    Checkpoint c;
    try {
        c.arch = Architecture::parse(desc);
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("checkpoint: ") + e.what());
    }
    if (c.arch.param_count() != P) throw IoError("checkpoint: descriptor disagrees with parameter count");
    if (b.size() - pos != 16 * P + 8) throw IoError("checkpoint: unexpected payload size");
    c.params.resize(P);
    c.ema.resize(P);
    for (auto& v : c.params) v = std::bit_cast<double>(get_le(b, pos, 8));
    for (auto& v : c.ema) v = std::bit_cast<double>(get_le(b, pos, 8));
    c.step = get_le(b, pos, 8);
    return c;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + path.string());
}

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(c));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

} // namespace tprox
