#include "artgan/binary_io.hpp"

#include "artgan/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <unistd.h>

namespace artgan {

std::uint32_t crc32(std::span<const std::uint8_t> bytes)
{
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t offset = 0;
    // zlib takes uInt lengths.
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void ByteWriter::u16(std::uint16_t v)
{
    for (int i = 0; i < 2; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u32(std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u64(std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

void ByteWriter::raw(std::span<const std::uint8_t> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

void ByteWriter::append_crc() { u32(crc32(bytes_)); }

ByteReader::ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

void ByteReader::need(std::size_t n) const
{
    if (n > remaining()) {
        throw CorruptionError(what_ + " is truncated at byte " + std::to_string(pos_));
    }
}

std::uint8_t ByteReader::u8()
{
    need(1);
    return bytes_[pos_++];
}

std::uint16_t ByteReader::u16()
{
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) {
        v = static_cast<std::uint16_t>(v | (bytes_[pos_++] << (8 * i)));
    }
    return v;
}

std::uint32_t ByteReader::u32()
{
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
}

std::uint64_t ByteReader::u64()
{
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string ByteReader::str(std::size_t length)
{
    const auto s = raw(length);
    return {s.begin(), s.end()};
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t length)
{
    need(length);
    const auto s = bytes_.subspan(pos_, length);
    pos_ += length;
    return s;
}

std::span<const std::uint8_t> verify_crc(std::span<const std::uint8_t> bytes, std::string_view what)
{
    if (bytes.size() < 4) {
        throw CorruptionError(std::string(what) + " is too short to hold a checksum");
    }
    const auto payload = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4), std::string(what));
    if (tail.u32() != crc32(payload)) {
        throw CorruptionError(std::string(what) + " failed its CRC-32 check");
    }
    return payload;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    auto tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write " + path.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw IoError("write failed for " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot replace " + path.string());
    }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text)
{
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace artgan
