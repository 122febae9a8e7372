#pragma once

// Synthetic scenes, a spherical-noise radar simulator with multi-frame
// accumulation, target rendering and a stand-in camera feature source.

#include "rpge/encoder.hpp"
#include "rpge/feature_map.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace rpge {

using Rng = std::mt19937_64;

struct BoxClass {
    std::string name;
    std::array<double, 2> length{}, width{}, height{}; // m, [min, max]
};

enum class YawMode { uniform, radial };

struct SceneSpec {
    std::size_t num_boxes = 6;
    std::vector<BoxClass> classes{{"car", {3.6, 4.6}, {1.6, 2.0}, {1.4, 1.7}},
                                  {"truck", {7.0, 9.5}, {2.3, 2.7}, {2.8, 3.4}}};
    // placement region: a rectangle intersected with a range annulus around the sensor
    double x_min = -22, x_max = 22, y_min = -22, y_max = 22;
    double min_range = 5, max_range = 22;
    YawMode yaw_mode = YawMode::radial;
    double yaw_jitter = 0.15;        // rad, radial mode only
    double dynamic_fraction = 0.5;   // share of boxes that move
    double speed_min = 3, speed_max = 8; // m/s, along the heading, either sign
    double ground_z = -0.5;          // m, ground height in radar frame
    double clearance = 1.0;          // m, minimum gap between footprints

    void validate() const {
        require(!classes.empty(), ErrorCode::Config, "scene needs at least one box class");
        for (const auto &c : classes)
            require(c.length[0] > 0 && c.width[0] > 0 && c.height[0] > 0 && c.length[1] >= c.length[0] &&
                        c.width[1] >= c.width[0] && c.height[1] >= c.height[0],
                    ErrorCode::Config, "box size ranges must be positive and ordered");
        require(x_max > x_min && y_max > y_min && max_range > min_range && min_range >= 0, ErrorCode::Config,
                "placement region is empty");
        require(speed_max >= speed_min && speed_min >= 0, ErrorCode::Config, "speed range is invalid");
    }
};

struct Box {
    Vec3 center{}; // footprint centre at ground level; the box spans [z, z + height]
    double length = 4, width = 2, height = 1.5;
    double yaw = 0; // rad, heading of the length axis
    double vx = 0, vy = 0;
    std::size_t cls = 0;

    std::array<std::array<double, 2>, 4> corners_xy(double dx = 0, double dy = 0) const {
        const double c = std::cos(yaw), s = std::sin(yaw), hl = 0.5 * length, hw = 0.5 * width;
        std::array<std::array<double, 2>, 4> out{};
        const double sx[4] = {hl, -hl, -hl, hl}, sy[4] = {hw, hw, -hw, -hw};
        for (int i = 0; i < 4; ++i)
            out[i] = {center.x + dx + c * sx[i] - s * sy[i], center.y + dy + s * sx[i] + c * sy[i]};
        return out;
    }

    /// Signed distance from (x, y) to the footprint rectangle; negative inside.
    double signed_distance(double x, double y) const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        const double lx = c * (x - center.x) + s * (y - center.y);
        const double ly = -s * (x - center.x) + c * (y - center.y);
        const double qx = std::abs(lx) - 0.5 * length, qy = std::abs(ly) - 0.5 * width;
        const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
        return std::hypot(ox, oy) + std::min(std::max(qx, qy), 0.0);
    }

    friend bool operator==(const Box &, const Box &) = default;
};

namespace detail {

// Separating-axis test for two rectangles, each inflated by margin / 2.
inline bool footprints_overlap(const Box &a, const Box &b, double margin) {
    Box ia = a, ib = b;
    ia.length += margin;
    ia.width += margin;
    ib.length += margin;
    ib.width += margin;
    const auto ca = ia.corners_xy(), cb = ib.corners_xy();
    for (const Box *box : {&ia, &ib}) {
        const double c = std::cos(box->yaw), s = std::sin(box->yaw);
        for (const auto &axis : {std::array<double, 2>{c, s}, std::array<double, 2>{-s, c}}) {
            double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
            for (int i = 0; i < 4; ++i) {
                const double pa = ca[i][0] * axis[0] + ca[i][1] * axis[1];
                const double pb = cb[i][0] * axis[0] + cb[i][1] * axis[1];
                amin = std::min(amin, pa);
                amax = std::max(amax, pa);
                bmin = std::min(bmin, pb);
                bmax = std::max(bmax, pb);
            }
            if (amax < bmin || bmax < amin) return false;
        }
    }
    return true;
}

inline double uniform(Rng &rng, double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

} // namespace detail

/// Non-overlapping oriented boxes by rejection sampling (1000 attempts per box).
inline std::vector<Box> sample_scene(Rng &rng, const SceneSpec &spec) {
    spec.validate();
    std::vector<Box> boxes;
    std::uniform_int_distribution<std::size_t> pick_class(0, spec.classes.size() - 1);
    for (std::size_t n = 0; n < spec.num_boxes; ++n) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            Box b;
            b.cls = pick_class(rng);
            const auto &cls = spec.classes[b.cls];
            b.length = detail::uniform(rng, cls.length[0], cls.length[1]);
            b.width = detail::uniform(rng, cls.width[0], cls.width[1]);
            b.height = detail::uniform(rng, cls.height[0], cls.height[1]);
            b.center = {detail::uniform(rng, spec.x_min, spec.x_max), detail::uniform(rng, spec.y_min, spec.y_max),
                        spec.ground_z};
            const double range = std::hypot(b.center.x, b.center.y);
            b.yaw = spec.yaw_mode == YawMode::radial
                        ? std::atan2(b.center.y, b.center.x) + spec.yaw_jitter * std::normal_distribution<double>()(rng)
                        : detail::uniform(rng, -std::numbers::pi, std::numbers::pi);
            if (detail::uniform(rng, 0, 1) < spec.dynamic_fraction) {
                const double speed = detail::uniform(rng, spec.speed_min, spec.speed_max) *
                                     (detail::uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0);
                b.vx = speed * std::cos(b.yaw);
                b.vy = speed * std::sin(b.yaw);
            }
            if (range < spec.min_range || range > spec.max_range) continue;
            bool inside = true;
            for (const auto &c : b.corners_xy())
                inside = inside && c[0] >= spec.x_min && c[0] <= spec.x_max && c[1] >= spec.y_min && c[1] <= spec.y_max;
            if (!inside || b.signed_distance(0, 0) < spec.clearance) continue;
            placed = std::none_of(boxes.begin(), boxes.end(),
                                  [&](const Box &o) { return detail::footprints_overlap(b, o, spec.clearance); });
            if (placed) boxes.push_back(b);
        }
        if (!placed)
            throw Error(ErrorCode::PlacementFailure,
                        "could not place box " + std::to_string(n) + " after 1000 attempts");
    }
    return boxes;
}

struct SimConfig {
    std::size_t points_per_box_min = 2, points_per_box_max = 4; // per frame
    double sigma_r = 0.05;      // m
    double sigma_theta = 0.01;  // rad
    double sigma_phi = 0.02;    // rad
    std::size_t frames = 3;
    double frame_dt = 0.1;      // s
    double ego_speed = 0;       // m/s along ego +x
    double ego_yaw_rate = 0;    // rad/s
    std::size_t clutter_points = 10;
    double clutter_height = 2.0; // m above ground
    double rcs_mean = 10, rcs_std = 4;
    double ground_z = -0.5;
    // Bounds of the clutter volume (normally the BEV grid).
    double x_min = -25.6, x_max = 25.6, y_min = -25.6, y_max = 25.6;
    std::uint64_t seed = 0;

    void validate() const {
        require(sigma_r >= 0 && sigma_theta >= 0 && sigma_phi >= 0, ErrorCode::Config, "noise sigmas must be >= 0");
        require(frames >= 1, ErrorCode::Config, "frames must be >= 1");
        require(points_per_box_max >= points_per_box_min, ErrorCode::Config, "points-per-box range is inverted");
        require(x_max > x_min && y_max > y_min, ErrorCode::Config, "clutter volume is empty");
    }
};

/// Gaussian noise in (range, azimuth, elevation), applied in the sensor frame.
inline Vec3 perturb_spherical(const Vec3 &p, const SimConfig &sim, Rng &rng) {
    auto s = spherical_from_cartesian(p);
    std::normal_distribution<double> n01;
    s.r = std::max(s.r + sim.sigma_r * n01(rng), 1e-3);
    s.theta += sim.sigma_theta * n01(rng);
    s.phi = std::clamp(s.phi + sim.sigma_phi * n01(rng), -std::numbers::pi / 2, std::numbers::pi / 2);
    return cartesian_from_spherical(s);
}

/// Ego pose at time t (<= 0) relative to the current frame: position and heading.
inline std::pair<Vec3, double> ego_pose(const SimConfig &sim, double t) {
    const double w = sim.ego_yaw_rate, v = sim.ego_speed;
    const double heading = w * t;
    if (std::abs(w) < 1e-9) return {{v * t, 0, 0}, heading};
    return {{v / w * std::sin(w * t), v / w * (1 - std::cos(w * t)), 0}, heading};
}

/// Frames are indexed chronologically; frame frames-1 is the current scan and
/// frame k has age (frames-1-k) * frame_dt. Every frame is re-expressed in the
/// current ego frame using ego motion only, so moving boxes leave trails
/// displaced by -v * age.
inline std::vector<RadarPoint> simulate_radar(const std::vector<Box> &boxes, const SimConfig &sim, Rng &rng) {
    sim.validate();
    std::vector<RadarPoint> points;
    std::uniform_int_distribution<std::size_t> count(sim.points_per_box_min, sim.points_per_box_max);
    std::normal_distribution<double> n01;
    const bool noisy = sim.sigma_r > 0 || sim.sigma_theta > 0 || sim.sigma_phi > 0;

    for (std::size_t k = 0; k < sim.frames; ++k) {
        const double age = static_cast<double>(sim.frames - 1 - k) * sim.frame_dt;
        const auto [ego_pos, heading] = ego_pose(sim, -age);
        const Mat3 world_from_sensor = rotation_z(heading);
        const Mat3 sensor_from_world = world_from_sensor.transpose();
        const Vec3 ego_vel{sim.ego_speed * std::cos(heading), sim.ego_speed * std::sin(heading), 0};

        for (const auto &box : boxes) {
            const double dx = -box.vx * age, dy = -box.vy * age;
            const auto corners = box.corners_xy(dx, dy);
            const Vec3 sensor{ego_pos.x, ego_pos.y, 0};
            // vertical faces facing the sensor, weighted by edge length
            std::array<double, 4> weight{};
            double total = 0;
            for (int f = 0; f < 4; ++f) {
                const auto &a = corners[f], &b = corners[(f + 1) % 4];
                const double ex = b[0] - a[0], ey = b[1] - a[1];
                const double mx = 0.5 * (a[0] + b[0]) - sensor.x, my = 0.5 * (a[1] + b[1]) - sensor.y;
                // corners run counter-clockwise, so the outward normal is (ey, -ex)
                if (ey * mx - ex * my < 0) total += weight[f] = std::hypot(ex, ey);
            }
            if (total <= 0) continue;
            std::discrete_distribution<int> face(weight.begin(), weight.end());
            const std::size_t n = count(rng);
            for (std::size_t j = 0; j < n; ++j) {
                const int f = face(rng);
                const auto &a = corners[f], &b = corners[(f + 1) % 4];
                const double s = detail::uniform(rng, 0, 1);
                const Vec3 world{a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]),
                                 box.center.z + detail::uniform(rng, 0, box.height)};
                Vec3 local = sensor_from_world * (world - sensor);
                if (noisy) local = perturb_spherical(local, sim, rng);
                RadarPoint p;
                p.position = world_from_sensor * local + sensor;
                const Vec3 rel_vel = Vec3{box.vx, box.vy, 0} - ego_vel;
                p.v_r = rel_vel.dot(world - sensor) / (world - sensor).norm();
                p.rcs = sim.rcs_mean + sim.rcs_std * n01(rng);
                p.dt = age;
                points.push_back(p);
            }
        }
    }
    std::uniform_int_distribution<std::size_t> which_frame(0, sim.frames - 1);
    for (std::size_t j = 0; j < sim.clutter_points; ++j) {
        RadarPoint p;
        do {
            p.position = {detail::uniform(rng, sim.x_min, sim.x_max), detail::uniform(rng, sim.y_min, sim.y_max),
                          sim.ground_z + detail::uniform(rng, 0, sim.clutter_height)};
        } while (p.position.norm() < 1.0);
        const double age = static_cast<double>(sim.frames - 1 - which_frame(rng)) * sim.frame_dt;
        const Vec3 ego_vel{sim.ego_speed, 0, 0};
        p.v_r = -ego_vel.dot(p.position) / p.position.norm();
        p.rcs = sim.rcs_mean - 5 + sim.rcs_std * n01(rng);
        p.dt = age;
        points.push_back(p);
    }
    return points;
}

inline constexpr std::size_t kTargetChannels = 3;

/// Three channels: soft occupancy, cos(2 yaw) * occ, sin(2 yaw) * occ.
/// Occupancy is 1 inside a footprint and falls linearly to 0 over one cell
/// across the edge.
template <typename T = double>
BasicFeatureMap<T> render_target(const std::vector<Box> &boxes, const BevGridSpec &grid) {
    BasicFeatureMap<T> out(grid.with_channels(kTargetChannels));
    const std::size_t H = out.height(), W = out.width();
    for (const auto &box : boxes) {
        const double reach = 0.5 * std::hypot(box.length, box.width) + grid.cell;
        const auto cols = detail::cell_range(box.center.x - reach, box.center.x + reach, grid.x_min, grid.cell, W);
        const auto rows = detail::cell_range(box.center.y - reach, box.center.y + reach, grid.y_min, grid.cell, H);
        if (!cols || !rows) continue;
        const double c2 = std::cos(2 * box.yaw), s2 = std::sin(2 * box.yaw);
        for (std::size_t r = rows->first; r <= rows->second; ++r)
            for (std::size_t c = cols->first; c <= cols->second; ++c) {
                const double sd = box.signed_distance(grid.center_x(c), grid.center_y(r));
                const double occ = std::clamp(0.5 - sd / grid.cell, 0.0, 1.0);
                if (occ <= static_cast<double>(out.at(0, r, c))) continue;
                out.at(0, r, c) = static_cast<T>(occ);
                out.at(1, r, c) = static_cast<T>(c2 * occ);
                out.at(2, r, c) = static_cast<T>(s2 * occ);
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stand-in camera features

struct FeatureImageOptions {
    std::size_t levels = 3;
    std::size_t classes = 2;
    double noise_sigma = 0; // added to level 0 before pooling
};

namespace detail {

using P2 = std::array<double, 2>;

inline std::vector<P2> convex_hull(std::vector<P2> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    auto cross = [](const P2 &o, const P2 &a, const P2 &b) {
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    };
    std::vector<P2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto &p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull; // counter-clockwise
}

/// Distance from p to a convex CCW polygon; 0 inside.
inline double polygon_distance(const std::vector<P2> &poly, const P2 &p) {
    bool inside = poly.size() >= 3;
    double best = 1e300;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto &a = poly[i], &b = poly[(i + 1) % poly.size()];
        const double ex = b[0] - a[0], ey = b[1] - a[1];
        const double px = p[0] - a[0], py = p[1] - a[1];
        if (ex * py - ey * px < 0) inside = false;
        const double len2 = ex * ex + ey * ey;
        const double t = len2 > 0 ? std::clamp((px * ex + py * ey) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, std::hypot(px - t * ex, py - t * ey));
    }
    return inside ? 0.0 : best;
}

inline Image average_pool(const Image &src) {
    Image out(src.channels, src.height / 2, src.width / 2);
    for (std::size_t c = 0; c < src.channels; ++c)
        for (std::size_t y = 0; y < out.height; ++y)
            for (std::size_t x = 0; x < out.width; ++x)
                out.at(c, y, x) = 0.25 * (src.at(c, 2 * y, 2 * x) + src.at(c, 2 * y, 2 * x + 1) +
                                          src.at(c, 2 * y + 1, 2 * x) + src.at(c, 2 * y + 1, 2 * x + 1));
    return out;
}

} // namespace detail

/// Class-coded soft masks of the projected boxes (one channel per class; 1
/// inside the projected hull, fading to 0 one pixel outside), pooled into a
/// pyramid by 2x2 averaging.
inline std::pair<FeaturePyramid, CameraProjection> make_feature_image(const std::vector<Box> &boxes,
                                                                      const CameraProjection &proj, Rng &rng,
                                                                      const FeatureImageOptions &opt = {}) {
    require(proj.width > 0 && proj.height > 0, ErrorCode::Config, "projection has no image size");
    require(proj.width % (std::size_t{1} << (opt.levels - 1)) == 0 &&
                proj.height % (std::size_t{1} << (opt.levels - 1)) == 0,
            ErrorCode::Config, "image size must be divisible by 2^(levels-1)");
    Image base(opt.classes, proj.height, proj.width);
    for (const auto &box : boxes) {
        if (box.cls >= opt.classes) continue;
        std::vector<detail::P2> pts;
        bool visible = true;
        for (const auto &c : box.corners_xy())
            for (double z : {box.center.z, box.center.z + box.height}) {
                const auto ip = project_to_image({c[0], c[1], z}, proj);
                if (!(ip.depth > 0)) visible = false;
                const auto &m = proj.matrix;
                const double a = m[0] * c[0] + m[1] * c[1] + m[2] * z + m[3];
                const double b = m[4] * c[0] + m[5] * c[1] + m[6] * z + m[7];
                pts.push_back({a / ip.depth, b / ip.depth});
            }
        if (!visible) continue;
        const auto hull = detail::convex_hull(pts);
        double umin = 1e300, umax = -1e300, vmin = 1e300, vmax = -1e300;
        for (const auto &p : hull) {
            umin = std::min(umin, p[0]);
            umax = std::max(umax, p[0]);
            vmin = std::min(vmin, p[1]);
            vmax = std::max(vmax, p[1]);
        }
        const auto x0 = static_cast<long>(std::max(0.0, std::floor(umin - 1)));
        const auto x1 = static_cast<long>(std::min(static_cast<double>(proj.width) - 1, std::ceil(umax + 1)));
        const auto y0 = static_cast<long>(std::max(0.0, std::floor(vmin - 1)));
        const auto y1 = static_cast<long>(std::min(static_cast<double>(proj.height) - 1, std::ceil(vmax + 1)));
        for (long y = y0; y <= y1; ++y)
            for (long x = x0; x <= x1; ++x) {
                const double d = detail::polygon_distance(hull, {static_cast<double>(x), static_cast<double>(y)});
                const double v = std::max(0.0, 1.0 - d);
                double &slot = base.at(box.cls, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                slot = std::max(slot, v);
            }
    }
    if (opt.noise_sigma > 0) {
        std::normal_distribution<double> n(0, opt.noise_sigma);
        for (double &v : base.data) v += n(rng);
    }
    FeaturePyramid pyr;
    pyr.levels.push_back(std::move(base));
    for (std::size_t l = 1; l < opt.levels; ++l) pyr.levels.push_back(detail::average_pool(pyr.levels.back()));
    return {std::move(pyr), proj};
}

} // namespace rpge
