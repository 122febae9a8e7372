#pragma once

// KITTI-style radar point files: consecutive little-endian float32 records of
// (x, y, z, rcs, v_r, dt, reserved); the point count is implied by file size.

#include "rpge/binary_io.hpp"
#include "rpge/encoder.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace rpge {

inline constexpr std::size_t kRadarRecordFloats = 7;

inline std::vector<char> encode_points(std::span<const RadarPoint> points) {
    io::ByteWriter w;
    for (const auto &p : points) {
        for (double v : {p.position.x, p.position.y, p.position.z, p.rcs, p.v_r, p.dt, 0.0})
            w.f32(static_cast<float>(v));
    }
    return w.buffer();
}

inline std::vector<RadarPoint> decode_points(std::vector<char> bytes, const std::string &context) {
    constexpr std::size_t record = kRadarRecordFloats * 4;
    if (bytes.size() % record != 0)
        throw Error(ErrorCode::Format, context + ": size " + std::to_string(bytes.size()) +
                                           " is not a multiple of the 28-byte point record");
    const std::size_t n = bytes.size() / record;
    io::ByteReader r(std::move(bytes), context);
    std::vector<RadarPoint> out(n);
    for (auto &p : out) {
        p.position.x = r.f32();
        p.position.y = r.f32();
        p.position.z = r.f32();
        p.rcs = r.f32();
        p.v_r = r.f32();
        p.dt = r.f32();
        r.f32();
    }
    return out;
}

inline void write_points(const std::filesystem::path &path, std::span<const RadarPoint> points) {
    io::write_file(path, encode_points(points));
}

inline std::vector<RadarPoint> read_points(const std::filesystem::path &path) {
    return decode_points(io::read_file(path), path.string());
}

/// Rounds every field to float32, the precision of the point file.
inline void round_points_to_float(std::span<RadarPoint> points) {
    auto r = [](double &v) { v = static_cast<double>(static_cast<float>(v)); };
    for (auto &p : points) {
        r(p.position.x);
        r(p.position.y);
        r(p.position.z);
        r(p.rcs);
        r(p.v_r);
        r(p.dt);
    }
}

} // namespace rpge
