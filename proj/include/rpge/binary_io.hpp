#pragma once

// Little-endian byte helpers shared by the on-disk formats.

#include "rpge/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <type_traits>
#include <string>
#include <string_view>
#include <vector>

namespace rpge::io {

class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    template <typename U>
    void integer(U v) {
        static_assert(std::is_unsigned_v<U>);
        for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u32(std::uint32_t v) { integer(v); }
    void u64(std::uint64_t v) { integer(v); }
    void f32(float v) { integer(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { integer(std::bit_cast<std::uint64_t>(v)); }
    void string(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    const std::vector<char> &buffer() const { return buf_; }

private:
    std::vector<char> buf_;
};

class ByteReader {
public:
    ByteReader(std::vector<char> data, std::string context)
        : data_(std::move(data)), context_(std::move(context)) {}

    std::string_view bytes(std::size_t n) {
        need(n);
        std::string_view out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }

    template <typename U>
    U integer() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    std::uint32_t u32() { return integer<std::uint32_t>(); }
    std::uint64_t u64() { return integer<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string string() { return std::string(bytes(u32())); }

    std::size_t remaining() const { return data_.size() - pos_; }
    const std::string &context() const { return context_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size())
            throw Error(ErrorCode::Format, context_ + ": truncated at byte " + std::to_string(pos_));
    }

    std::vector<char> data_;
    std::string context_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path &path, const std::vector<char> &bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

} // namespace rpge::io
