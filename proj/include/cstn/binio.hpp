#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "cstn/errors.hpp"

namespace cstn {

// Explicit little-endian serialization so artifact bytes do not depend on the
// host.  All multi-byte values go through these helpers.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }

    void raw(const void* data, std::size_t len) {
        buf_.append(static_cast<const char*>(data), len);
    }

    const std::string& bytes() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

    void to_file(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw MissingInputError("cannot open '" + path + "' for writing");
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw MissingInputError("short write to '" + path + "'");
    }

private:
    std::string buf_;
};

// Reader over an in-memory buffer; any underflow or decode failure reports
// the artifact kind it was constructed with.
class ByteReader {
public:
    ByteReader(std::string bytes, std::string artifact_kind)
        : buf_(std::move(bytes)), kind_(std::move(artifact_kind)) {}

    static ByteReader from_file(const std::string& path, const std::string& artifact_kind) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw MissingInputError("cannot open '" + path + "'");
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return ByteReader(std::move(bytes), artifact_kind);
    }

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        return v;
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str() {
        const std::uint32_t len = u32();
        if (len > 1u << 24) fail("string length out of range");
        need(len);
        std::string s = buf_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    bool at_end() const { return pos_ == buf_.size(); }
    std::size_t remaining() const { return buf_.size() - pos_; }

    [[noreturn]] void fail(const std::string& what) const { throw CorruptArtifactError(kind_, what); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) fail("truncated file");
    }

    std::string buf_;
    std::string kind_;
    std::size_t pos_ = 0;
};

}  // namespace cstn
