#pragma once

// Image-plane machinery for semantic injection: feature pyramids, resolution
// alignment, pinhole projection and bilinear sampling.

#include "rpge/geometry.hpp"
#include "rpge/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace rpge {

/// Channel-major C x H x W image of doubles.
struct Image {
    std::size_t channels = 0, height = 0, width = 0;
    std::vector<double> data;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), data(c * h * w, 0.0) {}

    double &at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

    double mean() const {
        double s = 0;
        for (double v : data) s += v;
        return data.empty() ? 0.0 : s / static_cast<double>(data.size());
    }

    friend bool operator==(const Image &, const Image &) = default;
};

using FeatureImage = Image;

/// Level i is C_i x (H0 / 2^i) x (W0 / 2^i).
struct FeaturePyramid {
    std::vector<Image> levels;

    void validate() const {
        require(!levels.empty(), ErrorCode::ShapeMismatch, "feature pyramid has no levels");
        const auto &base = levels.front();
        for (std::size_t i = 1; i < levels.size(); ++i) {
            require(levels[i].height << i == base.height && levels[i].width << i == base.width,
                    ErrorCode::ShapeMismatch, "pyramid level " + std::to_string(i) + " is not half the previous");
        }
    }

    std::size_t total_channels() const {
        std::size_t n = 0;
        for (const auto &l : levels) n += l.channels;
        return n;
    }
};

/// 3x4 homogeneous projection from radar coordinates to pixels, plus the image
/// size it targets. Pixel (row y, column x) has its centre at (u, v) = (x, y).
struct CameraProjection {
    std::array<double, 12> matrix{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
    std::size_t width = 0, height = 0;
};

struct ImagePoint {
    double u = 0, v = 0, depth = 0;
    bool in_view = false;
};

inline ImagePoint project_to_image(const Vec3 &p, const CameraProjection &proj) {
    const auto &m = proj.matrix;
    const double a = m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3];
    const double b = m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7];
    const double c = m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11];
    ImagePoint out;
    out.depth = c;
    if (!(c > 0)) return out;
    out.u = a / c;
    out.v = b / c;
    out.in_view = out.u >= 0 && out.u < static_cast<double>(proj.width) && out.v >= 0 &&
                  out.v < static_cast<double>(proj.height);
    return out;
}

/// The four neighbours and weights of one bilinear sample. `valid` is false
/// outside [0, W-1] x [0, H-1], where the sample is defined as zero.
struct BilinearTap {
    bool valid = false;
    std::size_t x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    double ax = 0, ay = 0;

    template <typename Fn>
    void for_each(Fn &&fn) const {
        fn(y0, x0, (1 - ax) * (1 - ay));
        fn(y0, x1, ax * (1 - ay));
        fn(y1, x0, (1 - ax) * ay);
        fn(y1, x1, ax * ay);
    }
};

inline BilinearTap bilinear_tap(std::size_t height, std::size_t width, double u, double v) {
    BilinearTap t;
    if (!(u >= 0 && v >= 0 && u <= static_cast<double>(width) - 1 && v <= static_cast<double>(height) - 1))
        return t;
    t.valid = true;
    const double fx = std::floor(u), fy = std::floor(v);
    t.x0 = static_cast<std::size_t>(fx);
    t.y0 = static_cast<std::size_t>(fy);
    t.x1 = std::min(t.x0 + 1, width - 1);
    t.y1 = std::min(t.y0 + 1, height - 1);
    t.ax = u - fx;
    t.ay = v - fy;
    return t;
}

inline void accumulate_sample(const Image &img, const BilinearTap &tap, std::span<double> out) {
    if (!tap.valid) return;
    tap.for_each([&](std::size_t y, std::size_t x, double w) {
        for (std::size_t c = 0; c < img.channels; ++c) out[c] += w * img.at(c, y, x);
    });
}

inline std::vector<double> bilinear_sample(const Image &img, double u, double v) {
    std::vector<double> out(img.channels, 0.0);
    accumulate_sample(img, bilinear_tap(img.height, img.width, u, v), out);
    return out;
}

/// d(sample)/du and d(sample)/dv at a tap (piecewise-constant within a cell).
inline void sample_gradient(const Image &img, const BilinearTap &tap, std::span<double> du, std::span<double> dv) {
    if (!tap.valid) return;
    for (std::size_t c = 0; c < img.channels; ++c) {
        const double i00 = img.at(c, tap.y0, tap.x0), i01 = img.at(c, tap.y0, tap.x1);
        const double i10 = img.at(c, tap.y1, tap.x0), i11 = img.at(c, tap.y1, tap.x1);
        du[c] = (1 - tap.ay) * (i01 - i00) + tap.ay * (i11 - i10);
        dv[c] = (1 - tap.ax) * (i10 - i00) + tap.ax * (i11 - i01);
    }
}

/// Bilinear resize with half-pixel centres and edge clamping.
inline Image upsample_bilinear(const Image &src, std::size_t height, std::size_t width) {
    Image out(src.channels, height, width);
    const double sy = static_cast<double>(src.height) / static_cast<double>(height);
    const double sx = static_cast<double>(src.width) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double v = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        for (std::size_t x = 0; x < width; ++x) {
            const double u = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const auto tap = bilinear_tap(src.height, src.width, u, v);
            tap.for_each([&](std::size_t yy, std::size_t xx, double w) {
                for (std::size_t c = 0; c < src.channels; ++c) out.at(c, y, x) += w * src.at(c, yy, xx);
            });
        }
    }
    return out;
}

/// Level 0 followed by every coarser level upsampled to H0 x W0, channel-concatenated.
inline Image concat_levels(const FeaturePyramid &pyramid) {
    pyramid.validate();
    const auto &base = pyramid.levels.front();
    Image out(pyramid.total_channels(), base.height, base.width);
    std::size_t c0 = 0;
    for (std::size_t i = 0; i < pyramid.levels.size(); ++i) {
        const Image level = i == 0 ? base : upsample_bilinear(pyramid.levels[i], base.height, base.width);
        std::copy(level.data.begin(), level.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(c0 * base.height * base.width));
        c0 += level.channels;
    }
    return out;
}

/// Per-pixel linear map. `params` holds a row-major (out x in) weight followed by `out` biases.
inline Image conv1x1(const Image &in, std::span<const double> params, std::size_t out_channels) {
    const std::size_t cin = in.channels, plane = in.height * in.width;
    require(params.size() == out_channels * cin + out_channels, ErrorCode::ShapeMismatch,
            "1x1 convolution expects " + std::to_string(out_channels * cin + out_channels) + " parameters, got " +
                std::to_string(params.size()));
    Image out(out_channels, in.height, in.width);
    for (std::size_t o = 0; o < out_channels; ++o) {
        double *dst = out.data.data() + o * plane;
        std::fill(dst, dst + plane, params[out_channels * cin + o]);
        for (std::size_t i = 0; i < cin; ++i) {
            const double w = params[o * cin + i];
            const double *src = in.data.data() + i * plane;
            for (std::size_t p = 0; p < plane; ++p) dst[p] += w * src[p];
        }
    }
    return out;
}

inline FeatureImage align_resolution(const FeaturePyramid &pyramid, std::span<const double> conv_params,
                                     std::size_t out_channels) {
    return conv1x1(concat_levels(pyramid), conv_params, out_channels);
}

/// Pinhole camera at height `altitude` above the radar origin looking straight
/// down, framing the rectangle [x_min, x_max] x [y_min, y_max] at z = 0 into a
/// width x height image. Image up is +x and image left is +y.
inline CameraProjection overhead_camera(double x_min, double x_max, double y_min, double y_max, double altitude,
                                        std::size_t width, std::size_t height) {
    // camera axes: X_cam = -y, Y_cam = -x, Z_cam = -z; centre at (xc, yc, altitude)
    const double xc = 0.5 * (x_min + x_max), yc = 0.5 * (y_min + y_max);
    const double fx = static_cast<double>(width) * altitude / (y_max - y_min);
    const double fy = static_cast<double>(height) * altitude / (x_max - x_min);
    const double cx = 0.5 * static_cast<double>(width) - 0.5, cy = 0.5 * static_cast<double>(height) - 0.5;
    // rows of K [R | -R c]
    CameraProjection p;
    p.width = width;
    p.height = height;
    p.matrix = {0,  -fx, -cx, fx * yc + cx * altitude,  //
                -fy, 0,  -cy, fy * xc + cy * altitude,  //
                0,   0,  -1,  altitude};
    return p;
}

} // namespace rpge
