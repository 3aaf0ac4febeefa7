#include "pointgcn/binary_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>

namespace pointgcn {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const auto chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = ::crc32(crc, bytes.data() + offset, uInt(chunk));
        offset += chunk;
    }
    return std::uint32_t(crc);
}

void BinaryWriter::raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void BinaryReader::take(void* out, std::size_t n) {
    if (n > remaining()) throw FormatError("unexpected end of data (truncated file)");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
}

std::uint8_t BinaryReader::u8() {
    std::uint8_t v;
    take(&v, sizeof v);
    return v;
}

std::uint16_t BinaryReader::u16() {
    std::uint16_t v;
    take(&v, sizeof v);
    return v;
}

std::uint32_t BinaryReader::u32() {
    std::uint32_t v;
    take(&v, sizeof v);
    return v;
}

float BinaryReader::f32() {
    float v;
    take(&v, sizeof v);
    return v;
}

void BinaryReader::f32s(std::span<float> out) { take(out.data(), out.size_bytes()); }

std::string BinaryReader::text(std::size_t n) {
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
}

void BinaryReader::verify_crc(const std::string& what) {
    if (bytes_.size() < 4) throw FormatError(what + ": file too short for checksum");
    std::uint32_t stored;
    std::memcpy(&stored, bytes_.data() + bytes_.size() - 4, 4);
    if (crc32({bytes_.data(), bytes_.size() - 4}) != stored) throw FormatError(what + ": checksum mismatch");
    crc_checked_ = true;
}

}  // namespace pointgcn
