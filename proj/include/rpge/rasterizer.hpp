#pragma once

// Tile-binned BEV Gaussian splatting.
//
// Every Gaussian contributes w(c) * f to the cell centred at c, with
//     w(c) = o * exp(-0.5 * (c - mu)^T cov2^-1 (c - mu)),
// for cells inside its k-sigma footprint and with w(c) >= w_min. Contributions
// are summed (no alpha compositing), so the result is independent of input
// order and linear in the features.

#include "rpge/feature_map.hpp"
#include "rpge/gaussians.hpp"
#include "rpge/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace rpge {

struct SplatOptions {
    double k_sigma = 3.0;
    double w_min = 1e-4;
    std::size_t tile = 16;
    std::size_t threads = 1;
};

/// Inclusive cell-index rectangle.
struct Footprint {
    std::size_t row_lo = 0, row_hi = 0, col_lo = 0, col_hi = 0;

    std::size_t rows() const { return row_hi - row_lo + 1; }
    std::size_t cols() const { return col_hi - col_lo + 1; }
    friend bool operator==(const Footprint &, const Footprint &) = default;
};

namespace detail {

// Inclusive index range of cell centres within [lo, hi] along one axis.
inline std::optional<std::pair<std::size_t, std::size_t>> cell_range(double lo, double hi, double origin,
                                                                      double cell, std::size_t count) {
    constexpr double slack = 1e-9;
    double first = std::ceil((lo - origin) / cell - 0.5 - slack);
    double last = std::floor((hi - origin) / cell - 0.5 + slack);
    first = std::max(first, 0.0);
    last = std::min(last, static_cast<double>(count) - 1.0);
    if (!(first <= last)) return std::nullopt;
    return std::pair{static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

} // namespace detail

inline std::optional<Footprint> footprint(const Bev2DGaussian &g, const BevGridSpec &grid, double k_sigma = 3.0) {
    const double half_x = k_sigma * std::sqrt(g.cov2[0]);
    const double half_y = k_sigma * std::sqrt(g.cov2[3]);
    const auto cols = detail::cell_range(g.mean_xy[0] - half_x, g.mean_xy[0] + half_x, grid.x_min, grid.cell,
                                         grid.width());
    const auto rows = detail::cell_range(g.mean_xy[1] - half_y, g.mean_xy[1] + half_y, grid.y_min, grid.cell,
                                         grid.height());
    if (!cols || !rows) return std::nullopt;
    return Footprint{rows->first, rows->second, cols->first, cols->second};
}

/// A Gaussian reduced to what the inner loop needs: mean, inverse covariance
/// (conic) and opacity. Shared by forward, reference and backward passes so all
/// of them evaluate bit-identical weights.
struct PreparedGaussian {
    double mean_x = 0, mean_y = 0;
    double conic_xx = 0, conic_xy = 0, conic_yy = 0; // conic_xy already summed over both off-diagonals
    double opacity = 0;
    std::optional<Footprint> box;

    double weight(double cx, double cy) const {
        const double dx = cx - mean_x, dy = cy - mean_y;
        const double q = conic_xx * dx * dx + conic_xy * dx * dy + conic_yy * dy * dy;
        return opacity * std::exp(-0.5 * q);
    }
};

inline PreparedGaussian prepare(const Bev2DGaussian &g, const BevGridSpec &grid, double k_sigma) {
    const auto &c = g.cov2;
    const double det = c[0] * c[3] - c[1] * c[2];
    require(c[0] > 0 && c[3] > 0 && det > 0, ErrorCode::NotPositiveDefinite,
            "BEV covariance is not positive definite");
    PreparedGaussian p;
    p.mean_x = g.mean_xy[0];
    p.mean_y = g.mean_xy[1];
    p.conic_xx = c[3] / det;
    p.conic_xy = -(c[1] + c[2]) / det;
    p.conic_yy = c[0] / det;
    p.opacity = g.opacity;
    p.box = footprint(g, grid, k_sigma);
    return p;
}

namespace detail {

inline void check_features(std::span<const Bev2DGaussian> gaussians, const BevGridSpec &grid) {
    for (const auto &g : gaussians)
        require(g.feature.size() == grid.channels, ErrorCode::FeatureLengthMismatch,
                "gaussian feature length " + std::to_string(g.feature.size()) + " != grid channels " +
                    std::to_string(grid.channels));
}

// Total order on Gaussian content. Accumulating in this order makes the sum
// independent of the caller's ordering, bit for bit.
inline bool content_less(const Bev2DGaussian &a, const Bev2DGaussian &b) {
    if (a.mean_xy != b.mean_xy) return a.mean_xy < b.mean_xy;
    if (a.cov2 != b.cov2) return a.cov2 < b.cov2;
    if (a.opacity != b.opacity) return a.opacity < b.opacity;
    return a.feature < b.feature;
}

} // namespace detail

inline std::vector<Bev2DGaussian> marginalize_all(std::span<const EgoGaussian> gaussians) {
    std::vector<Bev2DGaussian> out;
    out.reserve(gaussians.size());
    for (const auto &g : gaussians) out.push_back(marginalize_bev(g));
    return out;
}

template <typename T = float>
BasicFeatureMap<T> splat(std::span<const Bev2DGaussian> gaussians, const BevGridSpec &grid,
                         const SplatOptions &opt = {}) {
    grid.validate();
    detail::check_features(gaussians, grid);
    BasicFeatureMap<T> out(grid);
    const std::size_t H = out.height(), W = out.width(), C = grid.channels, tile = opt.tile;
    const std::size_t tiles_y = (H + tile - 1) / tile, tiles_x = (W + tile - 1) / tile;

    std::vector<std::uint32_t> order(gaussians.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return detail::content_less(gaussians[a], gaussians[b]);
    });

    std::vector<PreparedGaussian> prepared(gaussians.size());
    auto for_each_tile = [&](const Footprint &box, auto &&fn) {
        for (std::size_t ty = box.row_lo / tile; ty <= box.row_hi / tile; ++ty)
            for (std::size_t tx = box.col_lo / tile; tx <= box.col_hi / tile; ++tx) fn(ty * tiles_x + tx);
    };
    std::vector<std::size_t> offsets(tiles_x * tiles_y + 1, 0);
    for (std::uint32_t idx : order) {
        prepared[idx] = prepare(gaussians[idx], grid, opt.k_sigma);
        if (prepared[idx].box) for_each_tile(*prepared[idx].box, [&](std::size_t t) { ++offsets[t + 1]; });
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    std::vector<std::uint32_t> entries(offsets.back());
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    for (std::uint32_t idx : order)
        if (prepared[idx].box) for_each_tile(*prepared[idx].box, [&](std::size_t t) { entries[cursor[t]++] = idx; });

    parallel_for(tiles_x * tiles_y, opt.threads, [&](std::size_t t) {
        const std::span<const std::uint32_t> bin(entries.data() + offsets[t], offsets[t + 1] - offsets[t]);
        if (bin.empty()) return;
        const std::size_t ty = t / tiles_x, tx = t % tiles_x;
        const std::size_t r0 = ty * tile, c0 = tx * tile;
        const std::size_t r1 = std::min(r0 + tile, H), c1 = std::min(c0 + tile, W);
        const std::size_t tw = c1 - c0, th = r1 - r0;
        thread_local std::vector<double> acc;
        acc.assign(C * th * tw, 0.0);
        for (std::uint32_t idx : bin) {
            const auto &pg = prepared[idx];
            const auto &feature = gaussians[idx].feature;
            const std::size_t rlo = std::max(pg.box->row_lo, r0), rhi = std::min(pg.box->row_hi + 1, r1);
            const std::size_t clo = std::max(pg.box->col_lo, c0), chi = std::min(pg.box->col_hi + 1, c1);
            for (std::size_t r = rlo; r < rhi; ++r) {
                const double cy = grid.center_y(r);
                for (std::size_t c = clo; c < chi; ++c) {
                    const double w = pg.weight(grid.center_x(c), cy);
                    if (w < opt.w_min) continue;
                    const std::size_t cell = (r - r0) * tw + (c - c0);
                    for (std::size_t k = 0; k < C; ++k) acc[k * th * tw + cell] += w * feature[k];
                }
            }
        }
        for (std::size_t k = 0; k < C; ++k)
            for (std::size_t r = 0; r < th; ++r)
                for (std::size_t c = 0; c < tw; ++c)
                    out.at(k, r0 + r, c0 + c) = static_cast<T>(acc[(k * th + r) * tw + c]);
    });
    return out;
}

template <typename T = float>
BasicFeatureMap<T> splat(std::span<const EgoGaussian> gaussians, const BevGridSpec &grid,
                         const SplatOptions &opt = {}) {
    const auto bev = marginalize_all(gaussians);
    return splat<T>(std::span<const Bev2DGaussian>(bev), grid, opt);
}

/// Dense O(N*H*W) evaluation of the same contribution formula with no
/// footprint cutoff; only w_min applies. Test oracle for `splat`.
template <typename T = float>
BasicFeatureMap<T> splat_reference(std::span<const Bev2DGaussian> gaussians, const BevGridSpec &grid,
                                   const SplatOptions &opt = {}) {
    grid.validate();
    detail::check_features(gaussians, grid);
    BasicFeatureMap<T> out(grid);
    const std::size_t H = out.height(), W = out.width(), C = grid.channels;
    std::vector<double> acc(C * H * W, 0.0);
    for (const auto &g : gaussians) {
        const auto pg = prepare(g, grid, opt.k_sigma);
        for (std::size_t r = 0; r < H; ++r) {
            const double cy = grid.center_y(r);
            for (std::size_t c = 0; c < W; ++c) {
                const double w = pg.weight(grid.center_x(c), cy);
                if (w < opt.w_min) continue;
                for (std::size_t k = 0; k < C; ++k) acc[(k * H + r) * W + c] += w * g.feature[k];
            }
        }
    }
    for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<T>(acc[i]);
    return out;
}

struct PointFeature {
    Vec3 position{};
    std::vector<double> feature;
};

/// Pillar-style baseline: each in-range point is max-pooled into the single
/// cell containing its (x, y). Out-of-range points are dropped.
template <typename T = float>
BasicFeatureMap<T> pillar_scatter(std::span<const PointFeature> points, const BevGridSpec &grid) {
    grid.validate();
    BasicFeatureMap<T> out(grid);
    const std::size_t H = out.height(), W = out.width(), C = grid.channels;
    std::vector<bool> occupied(H * W, false);
    for (const auto &p : points) {
        require(p.feature.size() == C, ErrorCode::FeatureLengthMismatch, "point feature length != grid channels");
        const double fx = std::floor((p.position.x - grid.x_min) / grid.cell);
        const double fy = std::floor((p.position.y - grid.y_min) / grid.cell);
        if (fx < 0 || fy < 0 || fx >= static_cast<double>(W) || fy >= static_cast<double>(H)) continue;
        const auto col = static_cast<std::size_t>(fx), row = static_cast<std::size_t>(fy);
        const std::size_t cell = row * W + col;
        for (std::size_t k = 0; k < C; ++k) {
            const T v = static_cast<T>(p.feature[k]);
            T &slot = out.data()[k * H * W + cell];
            slot = occupied[cell] ? std::max(slot, v) : v;
        }
        occupied[cell] = true;
    }
    return out;
}

} // namespace rpge
