#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace artgan {

/// zlib CRC-32 of `bytes`.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Little-endian encoder into a growing buffer.
class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void raw(std::string_view s);
    void raw(std::span<const std::uint8_t> s);

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() && { return std::move(bytes_); }

    /// Appends the CRC-32 of everything written so far.
    void append_crc();

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian decoder; running past the end throws
/// CorruptionError naming `what`.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what);

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    std::string str(std::size_t length);
    std::span<const std::uint8_t> raw(std::size_t length);

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string what_;
};

/// Checks the trailing CRC-32 and returns the payload without it.
/// Throws CorruptionError on a short buffer or checksum mismatch.
std::span<const std::uint8_t> verify_crc(std::span<const std::uint8_t> bytes, std::string_view what);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`, so readers see
/// either the old or the new contents. Throws IoError on failure.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

} // namespace artgan
