#ifndef POINTGCN_BINARY_IO_HPP
#define POINTGCN_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pointgcn {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Malformed, truncated or corrupted binary file.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Little-endian byte sink.
class BinaryWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { raw(&v, sizeof v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void f32s(std::span<const float> v) { raw(v.data(), v.size_bytes()); }
    void text(std::string_view s) { raw(s.data(), s.size()); }
    /// Appends CRC32 of everything written so far.
    void append_crc() { u32(crc32(bytes_)); }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    void save(const std::filesystem::path& path) const { write_file_bytes(path, bytes_); }

private:
    void raw(const void* p, std::size_t n);
    std::vector<std::uint8_t> bytes_;
};

/// Little-endian byte source; every read past the end throws FormatError.
class BinaryReader {
public:
    explicit BinaryReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}
    static BinaryReader load(const std::filesystem::path& path) { return BinaryReader(read_file_bytes(path)); }

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    float f32();
    void f32s(std::span<float> out);
    std::string text(std::size_t n);

    /// Checks the trailing CRC32 and excludes it from further reads.
    void verify_crc(const std::string& what);
    bool at_end() const { return pos_ == limit(); }
    std::size_t remaining() const { return limit() - pos_; }

private:
    std::size_t limit() const { return crc_checked_ ? bytes_.size() - 4 : bytes_.size(); }
    void take(void* out, std::size_t n);

    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    bool crc_checked_ = false;
};

}  // namespace pointgcn

#endif  // POINTGCN_BINARY_IO_HPP
