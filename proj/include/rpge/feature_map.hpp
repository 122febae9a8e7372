#pragma once

// Dense channel-major BEV grids and their binary file format.
//
// Layout: value(c, row, col) at index (c * height + row) * width + col, where
// `col` walks +x and `row` walks +y. Cell (row, col) is sampled at its center
// (x_min + (col + 0.5) * cell, y_min + (row + 0.5) * cell).

#include "rpge/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rpge {

struct BevGridSpec {
    double x_min = 0, x_max = 51.2;
    double y_min = -25.6, y_max = 25.6;
    double cell = 0.4;
    std::size_t channels = 16;

    std::size_t width() const { return static_cast<std::size_t>(std::llround((x_max - x_min) / cell)); }
    std::size_t height() const { return static_cast<std::size_t>(std::llround((y_max - y_min) / cell)); }

    double center_x(std::size_t col) const { return x_min + (static_cast<double>(col) + 0.5) * cell; }
    double center_y(std::size_t row) const { return y_min + (static_cast<double>(row) + 0.5) * cell; }

    void validate() const {
        require(cell > 0, ErrorCode::Config, "grid cell size must be positive");
        require(x_max > x_min && y_max > y_min, ErrorCode::Config, "grid bounds are empty");
        require(channels > 0, ErrorCode::Config, "grid needs at least one channel");
        const double nx = (x_max - x_min) / cell, ny = (y_max - y_min) / cell;
        require(std::abs(nx - std::round(nx)) < 1e-6 && std::abs(ny - std::round(ny)) < 1e-6,
                ErrorCode::Config, "grid extent is not an integral number of cells");
    }

    BevGridSpec with_channels(std::size_t c) const {
        BevGridSpec g = *this;
        g.channels = c;
        return g;
    }

    friend bool operator==(const BevGridSpec &, const BevGridSpec &) = default;
};

template <typename T>
class BasicFeatureMap {
public:
    using value_type = T;

    BasicFeatureMap() = default;
    explicit BasicFeatureMap(const BevGridSpec &grid)
        : grid_(grid), height_(grid.height()), width_(grid.width()),
          data_(grid.channels * height_ * width_, T(0)) {
        grid_.validate();
    }

    const BevGridSpec &grid() const { return grid_; }
    std::size_t channels() const { return grid_.channels; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t plane() const { return height_ * width_; }

    T &at(std::size_t c, std::size_t row, std::size_t col) { return data_[(c * height_ + row) * width_ + col]; }
    T at(std::size_t c, std::size_t row, std::size_t col) const {
        return data_[(c * height_ + row) * width_ + col];
    }

    std::vector<T> &data() { return data_; }
    const std::vector<T> &data() const { return data_; }

    template <typename U>
    BasicFeatureMap<U> cast() const {
        BasicFeatureMap<U> out(grid_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

    /// Number of cells with at least one nonzero channel.
    std::size_t nonzero_cells() const {
        std::size_t count = 0;
        for (std::size_t i = 0; i < plane(); ++i) {
            for (std::size_t c = 0; c < channels(); ++c) {
                if (data_[c * plane() + i] != T(0)) {
                    ++count;
                    break;
                }
            }
        }
        return count;
    }

private:
    BevGridSpec grid_{};
    std::size_t height_ = 0, width_ = 0;
    std::vector<T> data_;
};

using FeatureMap = BasicFeatureMap<float>;

template <typename A, typename B>
double max_abs_diff(const BasicFeatureMap<A> &a, const BasicFeatureMap<B> &b) {
    require(a.data().size() == b.data().size(), ErrorCode::ShapeMismatch, "feature map shapes differ");
    double worst = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return worst;
}

// File layout: "RPGE-FEATMAP" (12 bytes) + u32 version, u32 channels/height/width,
// f64 x_min x_max y_min y_max cell, then channels*height*width f32, all little-endian.
inline constexpr std::string_view kFeatureMapMagic = "RPGE-FEATMAP";
inline constexpr std::uint32_t kFeatureMapVersion = 1;

inline std::vector<char> encode_feature_map(const FeatureMap &map) {
    io::ByteWriter w;
    w.bytes(kFeatureMapMagic);
    w.u32(kFeatureMapVersion);
    w.u32(static_cast<std::uint32_t>(map.channels()));
    w.u32(static_cast<std::uint32_t>(map.height()));
    w.u32(static_cast<std::uint32_t>(map.width()));
    const auto &g = map.grid();
    for (double v : {g.x_min, g.x_max, g.y_min, g.y_max, g.cell}) w.f64(v);
    for (float v : map.data()) w.f32(v);
    return w.buffer();
}

inline FeatureMap decode_feature_map(std::vector<char> bytes, const std::string &context) {
    io::ByteReader r(std::move(bytes), context);
    if (r.bytes(kFeatureMapMagic.size()) != kFeatureMapMagic)
        throw Error(ErrorCode::Format, context + ": not a feature map file");
    if (const auto version = r.u32(); version != kFeatureMapVersion)
        throw Error(ErrorCode::Format, context + ": unsupported version " + std::to_string(version));
    BevGridSpec g;
    g.channels = r.u32();
    const std::size_t height = r.u32(), width = r.u32();
    g.x_min = r.f64();
    g.x_max = r.f64();
    g.y_min = r.f64();
    g.y_max = r.f64();
    g.cell = r.f64();
    try {
        g.validate();
    } catch (const Error &e) {
        throw Error(ErrorCode::Format, context + ": " + e.what());
    }
    if (g.height() != height || g.width() != width)
        throw Error(ErrorCode::Format, context + ": header dimensions disagree with grid bounds");
    FeatureMap map(g);
    if (r.remaining() != map.data().size() * 4)
        throw Error(ErrorCode::Format, context + ": payload size does not match header");
    for (float &v : map.data()) v = r.f32();
    return map;
}

inline void write_feature_map(const std::filesystem::path &path, const FeatureMap &map) {
    io::write_file(path, encode_feature_map(map));
}

inline FeatureMap read_feature_map(const std::filesystem::path &path) {
    return decode_feature_map(io::read_file(path), path.string());
}

} // namespace rpge
