#pragma once

// Closed-form coordinate machinery: spherical conversion, per-point ray-aligned
// frames, unit quaternions and composition with BEV augmentation matrices.
// Everything here is a pure function on small value types.

#include "rpge/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace rpge {

template <typename T>
struct Vec3T {
    T x{}, y{}, z{};

    constexpr Vec3T operator+(const Vec3T &o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3T operator-(const Vec3T &o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3T operator-() const { return {-x, -y, -z}; }
    constexpr Vec3T operator*(T s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3T operator/(T s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3T &operator+=(const Vec3T &o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    constexpr T operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr T &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr T dot(const Vec3T &o) const { return x * o.x + y * o.y + z * o.z; }
    constexpr Vec3T cross(const Vec3T &o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    T norm() const { return std::sqrt(dot(*this)); }

    friend constexpr bool operator==(const Vec3T &, const Vec3T &) = default;
};

template <typename T>
constexpr Vec3T<T> operator*(T s, const Vec3T<T> &v) {
    return v * s;
}

/// Row-major 3x3 matrix.
template <typename T>
struct Mat3T {
    std::array<T, 9> m{};

    static constexpr Mat3T identity() { return diag(1, 1, 1); }
    static constexpr Mat3T diag(T a, T b, T c) { return {{a, 0, 0, 0, b, 0, 0, 0, c}}; }
    static constexpr Mat3T from_rows(const Vec3T<T> &r0, const Vec3T<T> &r1, const Vec3T<T> &r2) {
        return {{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
    }

    constexpr T operator()(int r, int c) const { return m[r * 3 + c]; }
    constexpr T &operator()(int r, int c) { return m[r * 3 + c]; }

    constexpr Vec3T<T> row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }

    constexpr Mat3T transpose() const {
        Mat3T t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    constexpr Mat3T operator*(const Mat3T &o) const {
        Mat3T out;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                T acc = 0;
                for (int k = 0; k < 3; ++k) acc += (*this)(r, k) * o(k, c);
                out(r, c) = acc;
            }
        return out;
    }

    constexpr Vec3T<T> operator*(const Vec3T<T> &v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    constexpr Mat3T operator*(T s) const {
        Mat3T out = *this;
        for (auto &e : out.m) e *= s;
        return out;
    }
    constexpr Mat3T operator+(const Mat3T &o) const {
        Mat3T out = *this;
        for (int i = 0; i < 9; ++i) out.m[i] += o.m[i];
        return out;
    }
    constexpr Mat3T operator-(const Mat3T &o) const {
        Mat3T out = *this;
        for (int i = 0; i < 9; ++i) out.m[i] -= o.m[i];
        return out;
    }

    constexpr T determinant() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    /// Adjugate inverse. Caller is responsible for checking the determinant.
    constexpr Mat3T inverse_unchecked() const {
        const T det = determinant();
        Mat3T inv;
        inv(0, 0) = (m[4] * m[8] - m[5] * m[7]) / det;
        inv(0, 1) = (m[2] * m[7] - m[1] * m[8]) / det;
        inv(0, 2) = (m[1] * m[5] - m[2] * m[4]) / det;
        inv(1, 0) = (m[5] * m[6] - m[3] * m[8]) / det;
        inv(1, 1) = (m[0] * m[8] - m[2] * m[6]) / det;
        inv(1, 2) = (m[2] * m[3] - m[0] * m[5]) / det;
        inv(2, 0) = (m[3] * m[7] - m[4] * m[6]) / det;
        inv(2, 1) = (m[1] * m[6] - m[0] * m[7]) / det;
        inv(2, 2) = (m[0] * m[4] - m[1] * m[3]) / det;
        return inv;
    }

    T max_abs_diff(const Mat3T &o) const {
        T worst = 0;
        for (int i = 0; i < 9; ++i) worst = std::max(worst, std::abs(m[i] - o.m[i]));
        return worst;
    }

    friend constexpr bool operator==(const Mat3T &, const Mat3T &) = default;
};

/// Scalar-first unit quaternion (w, x, y, z).
template <typename T>
struct QuaternionT {
    T w{1}, x{}, y{}, z{};

    T norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    constexpr QuaternionT operator-() const { return {-w, -x, -y, -z}; }
    friend constexpr bool operator==(const QuaternionT &, const QuaternionT &) = default;
};

template <typename T>
struct SphericalCoordT {
    T r{};     // range, m
    T theta{}; // azimuth, rad
    T phi{};   // elevation, rad
};

/// Rotation from radar coordinates into the ray-aligned frame of one point,
/// plus the point itself as the frame origin.
template <typename T>
struct RayFrameT {
    Mat3T<T> rotation = Mat3T<T>::identity();
    Vec3T<T> origin{};
};

using Vec3 = Vec3T<double>;
using Mat3 = Mat3T<double>;
using Quaternion = QuaternionT<double>;
using SphericalCoord = SphericalCoordT<double>;
using RayFrame = RayFrameT<double>;

inline constexpr double kMinRange = 1e-9;      // m
inline constexpr double kMinHorizontal = 1e-6; // m, below this the azimuth is pinned to 0
inline constexpr double kMinQuatNorm = 1e-12;
inline constexpr double kMinAugDeterminant = 1e-9;

template <typename T>
SphericalCoordT<T> spherical_from_cartesian(const Vec3T<T> &p) {
    const T r = p.norm();
    require(r >= T(kMinRange), ErrorCode::ZeroRange, "point is at the sensor origin");
    const T s = std::clamp(p.z / r, T(-1), T(1));
    return {r, std::atan2(p.y, p.x), std::asin(s)};
}

template <typename T>
Vec3T<T> cartesian_from_spherical(const SphericalCoordT<T> &s) {
    const T c = std::cos(s.phi);
    return {s.r * c * std::cos(s.theta), s.r * c * std::sin(s.theta), s.r * std::sin(s.phi)};
}

/// Selects the closed form used for the frame. `mutant_row3_sign` exists only for
/// the self-test's mutation mode: it flips the sign of the xz term of row 3.
enum class FrameFormula { exact, mutant_row3_sign };

/// Rows are the unit direction vectors of x_r (along the ray), y_r (horizontal,
/// pointing left) and z_r (upwards) expressed in radar coordinates.
template <typename T>
RayFrameT<T> ray_frame_from_point(const Vec3T<T> &p, FrameFormula formula = FrameFormula::exact) {
    const T r = p.norm();
    require(r >= T(kMinRange), ErrorCode::ZeroRange, "point is at the sensor origin");
    const T rho = std::hypot(p.x, p.y);
    const Vec3T<T> xr = p / r;
    RayFrameT<T> frame;
    frame.origin = p;
    if (rho < T(kMinHorizontal)) {
        // Near-vertical ray: pin azimuth to 0 so y_r follows +y, then
        // orthonormalize against x_r. A ray that is itself close to +-y (only
        // possible at sub-micrometre range) falls back to -x.
        Vec3T<T> ref{0, 1, 0};
        if (std::abs(xr.y) > T(0.9)) ref = {-1, 0, 0};
        Vec3T<T> yr = ref - xr * xr.dot(ref);
        yr = yr / yr.norm();
        frame.rotation = Mat3T<T>::from_rows(xr, yr, xr.cross(yr));
        return frame;
    }
    const T xz = formula == FrameFormula::mutant_row3_sign ? p.x * p.z : -p.x * p.z;
    frame.rotation = Mat3T<T>::from_rows(xr, {-p.y / rho, p.x / rho, 0},
                                         {xz / (r * rho), -p.y * p.z / (r * rho), rho / r});
    return frame;
}

template <typename T>
Mat3T<T> quat_to_rotation(const QuaternionT<T> &q) {
    const T n = q.norm();
    require(n >= T(kMinQuatNorm), ErrorCode::ZeroQuaternion, "quaternion has zero norm");
    const T w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;
    return {{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
             2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
             2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

template <typename T>
Mat3T<T> inverse_augmentation(const Mat3T<T> &m_aug) {
    require(std::abs(m_aug.determinant()) > T(kMinAugDeterminant), ErrorCode::SingularAugmentation,
            "augmentation matrix is not invertible");
    return m_aug.inverse_unchecked();
}

/// A = (R_radar2ray * M_aug)^-1: maps ray-frame offsets to ego space and is
/// conjugated onto ray-frame covariances. R is orthonormal so R^-1 = R^T, but
/// M_aug may scale, so its inverse is general.
template <typename T>
Mat3T<T> ray_to_ego_linear(const RayFrameT<T> &frame, const Mat3T<T> &m_aug) {
    return inverse_augmentation(m_aug) * frame.rotation.transpose();
}

template <typename T>
Mat3T<T> rotation_z(T angle) {
    const T c = std::cos(angle), s = std::sin(angle);
    return {{c, -s, 0, s, c, 0, 0, 0, 1}};
}

/// max |R R^T - I| over entries.
template <typename T>
T orthonormality_error(const Mat3T<T> &r) {
    return (r * r.transpose()).max_abs_diff(Mat3T<T>::identity());
}

} // namespace rpge
