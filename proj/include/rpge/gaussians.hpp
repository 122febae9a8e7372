#pragma once

// Gaussian primitive representation: activation of raw head outputs, ray-frame
// covariance assembly and the ray -> radar -> ego unification that produces the
// splattable primitive.

#include "rpge/geometry.hpp"

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace rpge {

struct ActivationLimits {
    double max_offset = 1.5; // m, tanh bound on the mean offset
    double min_scale = 0.05; // m
    double max_scale = 8.0;  // m
};

inline constexpr double kCovarianceRegularization = 1e-6; // m^2
inline constexpr std::size_t kGeometryOutputs = 11;       // offset 3, scale 3, quat 4, opacity 1

/// Unactivated head outputs, laid out [offset(3) log_scale(3) quat(4) opacity(1) feature(C)].
struct RawAttributes {
    std::array<double, 3> offset_raw{};
    std::array<double, 3> log_scale_raw{};
    std::array<double, 4> quat_raw{1, 0, 0, 0};
    double opacity_logit = 0;
    std::vector<double> feature_raw;

    static RawAttributes from_span(std::span<const double> v) {
        require(v.size() >= kGeometryOutputs, ErrorCode::WidthMismatch,
                "raw attribute vector shorter than 11");
        RawAttributes raw;
        for (int i = 0; i < 3; ++i) {
            raw.offset_raw[i] = v[i];
            raw.log_scale_raw[i] = v[3 + i];
        }
        for (int i = 0; i < 4; ++i) raw.quat_raw[i] = v[6 + i];
        raw.opacity_logit = v[10];
        raw.feature_raw.assign(v.begin() + kGeometryOutputs, v.end());
        return raw;
    }
};

struct GaussianRay {
    Vec3 delta_mu{};
    Vec3 scale{1, 1, 1};
    Quaternion quat{};
    double opacity = 0.5;
    std::vector<double> feature;
};

struct EgoGaussian {
    Vec3 mean{};
    Mat3 covariance = Mat3::identity();
    double opacity = 0;
    std::vector<double> feature;
};

struct Bev2DGaussian {
    std::array<double, 2> mean_xy{};
    std::array<double, 4> cov2{1, 0, 0, 1}; // row-major 2x2
    double opacity = 0;
    std::vector<double> feature;
};

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
    return x > 30 ? x : std::log1p(std::exp(x));
}

inline GaussianRay activate(const RawAttributes &raw, const ActivationLimits &limits) {
    GaussianRay g;
    for (int i = 0; i < 3; ++i) {
        g.delta_mu[i] = limits.max_offset * std::tanh(raw.offset_raw[i]);
        g.scale[i] = std::clamp(softplus(raw.log_scale_raw[i]) + limits.min_scale, limits.min_scale,
                                limits.max_scale);
    }
    const Quaternion q{raw.quat_raw[0], raw.quat_raw[1], raw.quat_raw[2], raw.quat_raw[3]};
    const double n = q.norm();
    g.quat = n < kMinQuatNorm ? Quaternion{} : Quaternion{q.w / n, q.x / n, q.y / n, q.z / n};
    g.opacity = sigmoid(raw.opacity_logit);
    g.feature = raw.feature_raw;
    return g;
}

/// Sigma_ray = R S S^T R^T with S = diag(scale).
inline Mat3 covariance_ray(const Vec3 &scale, const Quaternion &quat) {
    const Mat3 r = quat_to_rotation(quat);
    Mat3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += r(i, k) * scale[k] * scale[k] * r(j, k);
            out(i, j) = acc;
            out(j, i) = acc;
        }
    return out;
}

/// A * Sigma * A^T, evaluated on the upper triangle and mirrored so the result
/// is exactly symmetric.
inline Mat3 conjugate_symmetric(const Mat3 &a, const Mat3 &sigma) {
    const Mat3 as = a * sigma;
    Mat3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += as(i, k) * a(j, k);
            out(i, j) = acc;
            out(j, i) = acc;
        }
    return out;
}

/// Shared tail of both coordinate modes: mean = p_ego + A dmu, cov = A Sigma A^T + eps I.
inline EgoGaussian place_in_ego(const GaussianRay &g, const Vec3 &p_ego, const Mat3 &linear) {
    EgoGaussian out;
    out.mean = p_ego + linear * g.delta_mu;
    out.covariance = conjugate_symmetric(linear, covariance_ray(g.scale, g.quat)) +
                     Mat3::diag(kCovarianceRegularization, kCovarianceRegularization,
                                kCovarianceRegularization);
    out.opacity = g.opacity;
    out.feature = g.feature;
    return out;
}

/// Ray-centric unification. p_radar = M_aug p_ego, so p_ego = M_aug^-1 p_radar.
inline EgoGaussian to_ego(const GaussianRay &g, const Vec3 &p_radar, const RayFrame &frame,
                          const Mat3 &m_aug) {
    const Mat3 m_inv = inverse_augmentation(m_aug);
    return place_in_ego(g, m_inv * p_radar, m_inv * frame.rotation.transpose());
}

/// Ego-centric (baseline) interpretation: attributes are taken as already
/// expressed in the perception frame, only M_aug^-1 is applied.
inline EgoGaussian to_ego_egocentric(const GaussianRay &g, const Vec3 &p_radar, const Mat3 &m_aug) {
    const Mat3 m_inv = inverse_augmentation(m_aug);
    return place_in_ego(g, m_inv * p_radar, m_inv);
}

inline Bev2DGaussian marginalize_bev(const EgoGaussian &g) {
    Bev2DGaussian out;
    out.mean_xy = {g.mean.x, g.mean.y};
    out.cov2 = {g.covariance(0, 0), g.covariance(0, 1), g.covariance(1, 0), g.covariance(1, 1)};
    out.opacity = g.opacity;
    out.feature = g.feature;
    return out;
}

} // namespace rpge
