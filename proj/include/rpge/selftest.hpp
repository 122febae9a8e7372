#pragma once

// Built-in property checks: frame examples and orthonormality, spherical
// consistency, splat vs dense reference, finite-difference gradients for every
// ablation cell, and flip equivariance of encode + splat.

#include "rpge/ablation.hpp"
#include "rpge/geometry.hpp"
#include "rpge/grad.hpp"
#include "rpge/rasterizer.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace rpge {

struct SelftestOptions {
    FrameFormula formula = FrameFormula::exact;
    std::size_t sweep_points = 100000;
    std::size_t consistency_points = 1000;
    std::size_t splat_seeds = 50;
    std::size_t fd_probes = 64;
    std::uint64_t seed = 0;
};

struct SelftestCheck {
    std::string name;
    double max_error = 0;
    double tolerance = 0;
    bool passed = false;
    double seconds = 0;
};

namespace detail {

inline Vec3 random_direction_point(std::mt19937_64 &rng, double rmin, double rmax) {
    std::normal_distribution<double> n;
    Vec3 d{n(rng), n(rng), n(rng)};
    d = d / d.norm();
    return d * std::uniform_real_distribution<double>(rmin, rmax)(rng);
}

inline double frame_examples_error(FrameFormula f) {
    const std::pair<Vec3, Mat3> cases[] = {
        {{1, 0, 0}, Mat3::identity()},
        {{0, 2, 0}, Mat3{{0, 1, 0, -1, 0, 0, 0, 0, 1}}},
        {{3, 0, 4}, Mat3{{0.6, 0, 0.8, 0, 1, 0, -0.8, 0, 0.6}}},
    };
    double worst = 0;
    for (const auto &[p, expected] : cases) worst = std::max(worst, ray_frame_from_point(p, f).rotation.max_abs_diff(expected));
    return worst;
}

inline double orthonormality_sweep(FrameFormula f, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = ray_frame_from_point(random_direction_point(rng, 0.5, 100), f).rotation;
        worst = std::max({worst, orthonormality_error(r), std::abs(r.determinant() - 1)});
    }
    return worst;
}

inline double spherical_consistency(FrameFormula f, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double eps = 1e-5;
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p = random_direction_point(rng, 0.5, 100);
        const auto s = spherical_from_cartesian(p);
        const double rho = std::hypot(p.x, p.y);
        const auto r = ray_frame_from_point(p, f).rotation;
        const Vec3 base = cartesian_from_spherical(s);
        auto moved = [&](double dr, double dt, double dp) {
            return r * (cartesian_from_spherical(SphericalCoord{s.r + dr, s.theta + dt, s.phi + dp}) - base);
        };
        worst = std::max(worst, (moved(eps, 0, 0) - Vec3{eps, 0, 0}).norm());
        worst = std::max(worst, (moved(0, eps, 0) - Vec3{0, rho * eps, 0}).norm());
        worst = std::max(worst, (moved(0, 0, eps) - Vec3{0, 0, s.r * eps}).norm());
    }
    return worst;
}

/// Random 2D Gaussians with means up to `margin` outside the grid.
inline std::vector<Bev2DGaussian> random_bev_gaussians(std::mt19937_64 &rng, std::size_t n, const BevGridSpec &grid,
                                                       double margin = 2, double smin = 0.1, double smax = 1.5) {
    std::uniform_real_distribution<double> ux(grid.x_min - margin, grid.x_max + margin),
        uy(grid.y_min - margin, grid.y_max + margin), us(smin, smax), ua(-1, 1), uo(0.05, 1), uf(-1, 1);
    std::vector<Bev2DGaussian> out(n);
    for (auto &g : out) {
        g.mean_xy = {ux(rng), uy(rng)};
        const double sx = us(rng), sy = us(rng), rho = 0.9 * ua(rng);
        g.cov2 = {sx * sx, rho * sx * sy, rho * sx * sy, sy * sy};
        g.opacity = uo(rng);
        g.feature.resize(grid.channels);
        for (double &v : g.feature) v = uf(rng);
    }
    return out;
}

inline double splat_vs_reference(std::size_t seeds, std::uint64_t seed) {
    const BevGridSpec grid{-12.8, 12.8, -12.8, 12.8, 0.4, 4};
    SplatOptions opt;
    opt.k_sigma = 4.3;
    double worst = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(seed * 1000 + s);
        const auto gs = random_bev_gaussians(rng, 100, grid);
        const auto a = splat<double>(std::span<const Bev2DGaussian>(gs), grid, opt);
        const auto b = splat_reference<double>(std::span<const Bev2DGaussian>(gs), grid, opt);
        worst = std::max(worst, max_abs_diff(a, b));
    }
    return worst;
}

inline const BevGridSpec kSelftestGrid{-12.8, 12.8, -12.8, 12.8, 0.4, kTargetChannels};

inline Sample selftest_sample(std::uint64_t seed) {
    Rng rng(seed);
    SceneSpec spec;
    spec.num_boxes = 3;
    spec.x_min = spec.y_min = -11;
    spec.x_max = spec.y_max = 11;
    spec.min_range = 4;
    spec.max_range = 11;
    SimConfig sim;
    sim.x_min = sim.y_min = -12.8;
    sim.x_max = sim.y_max = 12.8;
    sim.clutter_points = 4;
    const auto boxes = sample_scene(rng, spec);
    Sample s;
    s.points = simulate_radar(boxes, sim, rng);
    s.target = render_target<double>(boxes, kSelftestGrid);
    const auto &g = kSelftestGrid;
    auto [pyr, proj] = make_feature_image(boxes, overhead_camera(g.x_min, g.x_max, g.y_min, g.y_max, 30, 32, 32), rng);
    s.image = ImageInputs{std::move(pyr), proj};
    return s;
}

inline EncoderConfig selftest_encoder(const AblationCell &cell) {
    EncoderConfig cfg;
    cfg.mode = cell.mode;
    cfg.offsets_enabled = cell.offsets;
    cfg.si_mode = cell.si;
    cfg.feature_dim = kTargetChannels;
    cfg.hidden = {16, 16};
    cfg.image_channels = 4;
    cfg.pyramid_channels = {2, 2, 2};
    return cfg;
}

inline double gradient_checks(std::size_t probes, std::uint64_t seed) {
    const std::vector<Sample> batch{selftest_sample(seed + 5), selftest_sample(seed + 6)};
    double worst = 0;
    for (const auto &cell : all_ablation_cells()) {
        const auto cfg = selftest_encoder(cell);
        const auto params = init_parameters(cfg, seed + 5);
        const auto r = finite_difference_check(params, std::span<const Sample>(batch), cfg, kSelftestGrid, probes,
                                               seed + 7);
        worst = std::max(worst, r.probes.size() == probes ? r.max_rel_error : 1.0);
    }
    return worst;
}

inline double flip_equivariance(std::uint64_t seed) {
    const BevGridSpec grid{-25.6, 25.6, -25.6, 25.6, 0.4, kTargetChannels};
    std::mt19937_64 rng(seed + 13);
    std::uniform_real_distribution<double> ux(2, 24), uy(-24, 24), uz(-1, 2), uv(-5, 5);
    std::vector<RadarPoint> pts;
    for (std::size_t i = 0; i < 60; ++i) pts.push_back({{ux(rng), uy(rng), uz(rng)}, uv(rng) + 10, uv(rng), 0.1 * (i % 3)});
    double worst = 0;
    for (auto mode : {CoordinateMode::ego_centric, CoordinateMode::ray_centric}) {
        const auto cfg = selftest_encoder({mode, true, SiMode::off});
        const auto params = init_parameters(cfg, seed + 6);
        const auto a = encode<double>(params, cfg, pts, {}, grid);
        const auto b = encode<double>(params, cfg, pts, FrameInputs{Mat3::diag(1, -1, 1), nullptr}, grid);
        const std::size_t h = grid.height();
        for (std::size_t c = 0; c < grid.channels; ++c)
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t col = 0; col < grid.width(); ++col)
                    worst = std::max(worst, std::abs(a.at(c, r, col) - b.at(c, h - 1 - r, col)));
    }
    return worst;
}

} // namespace detail

inline std::vector<SelftestCheck> run_selftest(const SelftestOptions &opt = {}) {
    std::vector<SelftestCheck> checks;
    auto run = [&](std::string name, double tol, const std::function<double()> &fn) {
        const auto t0 = std::chrono::steady_clock::now();
        SelftestCheck c;
        c.name = std::move(name);
        c.tolerance = tol;
        try {
            c.max_error = fn();
            c.passed = c.max_error < tol;
        } catch (const std::exception &) {
            c.max_error = std::numeric_limits<double>::infinity();
        }
        c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        checks.push_back(c);
    };
    run("frame_examples", 1e-12, [&] { return detail::frame_examples_error(opt.formula); });
    run("orthonormality_sweep", 1e-9,
        [&] { return detail::orthonormality_sweep(opt.formula, opt.sweep_points, opt.seed + 11); });
    run("spherical_consistency", 1e-7,
        [&] { return detail::spherical_consistency(opt.formula, opt.consistency_points, opt.seed + 5); });
    run("splat_vs_reference", 1e-6, [&] { return detail::splat_vs_reference(opt.splat_seeds, opt.seed); });
    run("gradient_check", 1e-4, [&] { return detail::gradient_checks(opt.fd_probes, opt.seed); });
    run("flip_equivariance", 1e-5, [&] { return detail::flip_equivariance(opt.seed); });
    return checks;
}

} // namespace rpge
