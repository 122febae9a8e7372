#pragma once

// Feature pyramid files. Layout: "RPGE-PYRAMID" + u32 version; 12 f64 for the
// projection matrix, u32 width, u32 height; u32 level count, then per level
// u32 channels/height/width and channel-major f32 values. Little-endian.

#include "rpge/binary_io.hpp"
#include "rpge/encoder.hpp"

#include <filesystem>
#include <string_view>

namespace rpge {

inline constexpr std::string_view kPyramidMagic = "RPGE-PYRAMID";
inline constexpr std::uint32_t kPyramidVersion = 1;

inline std::vector<char> encode_image_inputs(const ImageInputs &in) {
    io::ByteWriter w;
    w.bytes(kPyramidMagic);
    w.u32(kPyramidVersion);
    for (double v : in.projection.matrix) w.f64(v);
    w.u32(static_cast<std::uint32_t>(in.projection.width));
    w.u32(static_cast<std::uint32_t>(in.projection.height));
    w.u32(static_cast<std::uint32_t>(in.pyramid.levels.size()));
    for (const auto &level : in.pyramid.levels) {
        w.u32(static_cast<std::uint32_t>(level.channels));
        w.u32(static_cast<std::uint32_t>(level.height));
        w.u32(static_cast<std::uint32_t>(level.width));
        for (double v : level.data) w.f32(static_cast<float>(v));
    }
    return w.buffer();
}

inline ImageInputs decode_image_inputs(std::vector<char> bytes, const std::string &context) {
    io::ByteReader r(std::move(bytes), context);
    if (r.bytes(kPyramidMagic.size()) != kPyramidMagic)
        throw Error(ErrorCode::Format, context + ": not a feature pyramid file");
    if (const auto version = r.u32(); version != kPyramidVersion)
        throw Error(ErrorCode::Format, context + ": unsupported version " + std::to_string(version));
    ImageInputs in;
    for (double &v : in.projection.matrix) v = r.f64();
    in.projection.width = r.u32();
    in.projection.height = r.u32();
    for (std::uint32_t i = 0, n = r.u32(); i < n; ++i) {
        const std::size_t c = r.u32(), h = r.u32(), w = r.u32();
        if (r.remaining() < c * h * w * 4) throw Error(ErrorCode::Format, context + ": pyramid level is truncated");
        Image level(c, h, w);
        for (double &v : level.data) v = r.f32();
        in.pyramid.levels.push_back(std::move(level));
    }
    if (r.remaining() != 0) throw Error(ErrorCode::Format, context + ": trailing bytes after last level");
    try {
        in.pyramid.validate();
    } catch (const Error &e) {
        throw Error(ErrorCode::Format, context + ": " + e.what());
    }
    return in;
}

inline void write_image_inputs(const std::filesystem::path &path, const ImageInputs &in) {
    io::write_file(path, encode_image_inputs(in));
}

inline ImageInputs read_image_inputs(const std::filesystem::path &path) {
    return decode_image_inputs(io::read_file(path), path.string());
}

/// Rounds pyramid values to float32, the precision of the file.
inline void round_image_to_float(ImageInputs &in) {
    for (auto &level : in.pyramid.levels)
        for (double &v : level.data) v = static_cast<double>(static_cast<float>(v));
}

} // namespace rpge
