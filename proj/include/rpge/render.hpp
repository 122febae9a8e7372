#pragma once

// Feature maps as binary PGM / PPM images. Orientation: +x points up and +y
// points left, so image row i shows grid column W-1-i and image column j shows
// grid row H-1-j. Each channel is min-max normalized independently,
// byte = round(255 * (v - min) / (max - min)), and a constant channel renders
// as 0. The min and max of every channel are recorded as header comments:
// "# rpge channel <k> min <v> max <v>".

#include "rpge/binary_io.hpp"
#include "rpge/error.hpp"
#include "rpge/feature_map.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

namespace rpge {

struct ChannelRange {
    std::size_t channel = 0;
    double min = 0, max = 0;
};

struct PnmImage {
    std::size_t width = 0, height = 0, components = 1; // 1 = P5, 3 = P6
    std::vector<std::string> comments;
    std::vector<std::uint8_t> pixels; // row-major, interleaved
};

/// Image (row, col) that shows grid cell (row, col).
inline std::pair<std::size_t, std::size_t> bev_to_pixel(std::size_t row, std::size_t col, const FeatureMap &map) {
    return {map.width() - 1 - col, map.height() - 1 - row};
}

inline ChannelRange channel_range(const FeatureMap &map, std::size_t c) {
    ChannelRange r{c, 0, 0};
    const std::size_t n = map.plane();
    if (n == 0) return r;
    const float *p = map.data().data() + c * n;
    r.min = r.max = p[0];
    for (std::size_t i = 1; i < n; ++i) {
        r.min = std::min<double>(r.min, p[i]);
        r.max = std::max<double>(r.max, p[i]);
    }
    return r;
}

inline std::uint8_t normalize_byte(double v, const ChannelRange &r) {
    if (!(r.max > r.min)) return 0;
    return static_cast<std::uint8_t>(std::lround(255.0 * (v - r.min) / (r.max - r.min)));
}

inline std::string range_comment(const ChannelRange &r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "rpge channel %zu min %.9g max %.9g", r.channel, r.min, r.max);
    return buf;
}

/// Renders up to three channels interleaved; missing channels stay 0.
inline PnmImage render_channels(const FeatureMap &map, const std::vector<std::size_t> &channels) {
    require(!channels.empty() && channels.size() <= 3 && channels.size() != 2, ErrorCode::Config,
            "render one or three channels");
    PnmImage img;
    img.width = map.height();
    img.height = map.width();
    img.components = channels.size();
    img.pixels.assign(img.width * img.height * img.components, 0);
    for (std::size_t k = 0; k < channels.size(); ++k) {
        const std::size_t c = channels[k];
        if (c >= map.channels()) continue;
        const auto range = channel_range(map, c);
        img.comments.push_back(range_comment(range));
        for (std::size_t row = 0; row < map.height(); ++row)
            for (std::size_t col = 0; col < map.width(); ++col) {
                const auto [i, j] = bev_to_pixel(row, col, map);
                img.pixels[(i * img.width + j) * img.components + k] = normalize_byte(map.at(c, row, col), range);
            }
    }
    return img;
}

inline std::vector<char> encode_pnm(const PnmImage &img) {
    std::ostringstream os;
    os << (img.components == 3 ? "P6" : "P5") << "\n";
    for (const auto &c : img.comments) os << "# " << c << "\n";
    os << img.width << " " << img.height << "\n255\n";
    std::string head = os.str();
    std::vector<char> out(head.begin(), head.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline PnmImage decode_pnm(const std::vector<char> &bytes, const std::string &context) {
    std::size_t pos = 0;
    auto fail = [&](const std::string &what) { throw Error(ErrorCode::Format, context + ": " + what); };
    PnmImage img;
    auto token = [&]() {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                const std::size_t start = pos;
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                std::string c(bytes.begin() + static_cast<std::ptrdiff_t>(start) + 1,
                              bytes.begin() + static_cast<std::ptrdiff_t>(pos));
                if (!c.empty() && c.front() == ' ') c.erase(0, 1);
                img.comments.push_back(c);
                continue;
            }
            break;
        }
        std::string t;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) t += bytes[pos++];
        if (t.empty()) fail("truncated header");
        return t;
    };
    const auto magic = token();
    if (magic != "P5" && magic != "P6") fail("not a binary PGM/PPM");
    img.components = magic == "P6" ? 3 : 1;
    try {
        img.width = std::stoul(token());
        img.height = std::stoul(token());
        if (std::stoul(token()) != 255) fail("only maxval 255 is supported");
    } catch (const std::logic_error &) {
        fail("malformed header");
    }
    ++pos; // single whitespace before the raster
    const std::size_t n = img.width * img.height * img.components;
    if (bytes.size() < pos || bytes.size() - pos != n) fail("raster size does not match header");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return img;
}

/// Parses the "rpge channel" comments of an image.
inline std::vector<ChannelRange> parse_range_comments(const PnmImage &img) {
    std::vector<ChannelRange> out;
    for (const auto &c : img.comments) {
        ChannelRange r;
        if (std::sscanf(c.c_str(), "rpge channel %zu min %lf max %lf", &r.channel, &r.min, &r.max) == 3)
            out.push_back(r);
    }
    return out;
}

struct RenderOutput {
    std::vector<std::filesystem::path> channel_files;
    std::filesystem::path composite;
};

/// Writes <stem>_c<k>.pgm for every channel and the composite of channels
/// 0..2 to `composite` (a .ppm path).
inline RenderOutput render_feature_map(const FeatureMap &map, const std::filesystem::path &composite) {
    RenderOutput out;
    out.composite = composite;
    const auto parent = composite.parent_path(), stem = composite.stem();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    if (ec) throw Error(ErrorCode::Io, parent.string() + ": " + ec.message());
    for (std::size_t c = 0; c < map.channels(); ++c) {
        auto p = parent / (stem.string() + "_c" + std::to_string(c) + ".pgm");
        io::write_file(p, encode_pnm(render_channels(map, {c})));
        out.channel_files.push_back(std::move(p));
    }
    io::write_file(composite, encode_pnm(render_channels(map, {0, 1, 2})));
    return out;
}

} // namespace rpge
