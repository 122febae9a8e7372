#include "rpge/gaussians.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

using namespace rpge;

namespace {

Eigen::Matrix3d to_eigen(const Mat3 &m) {
    Eigen::Matrix3d e;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) e(i, j) = m(i, j);
    return e;
}

Eigen::Vector3d to_eigen(const Vec3 &v) { return {v.x, v.y, v.z}; }

GaussianRay random_gaussian(std::mt19937_64 &rng) {
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(0.05, 3);
    GaussianRay g;
    g.delta_mu = {n(rng), n(rng), n(rng)};
    g.scale = {u(rng), u(rng), u(rng)};
    Quaternion q{n(rng), n(rng), n(rng), n(rng)};
    const double k = q.norm();
    g.quat = {q.w / k, q.x / k, q.y / k, q.z / k};
    g.opacity = 0.7;
    g.feature = {1, 2};
    return g;
}

} // namespace

TEST(Activate, ZeroRaw) {
    RawAttributes raw;
    raw.quat_raw = {1, 0, 0, 0};
    const auto g = activate(raw, {1.0, 0.05, 8.0});
    EXPECT_EQ(g.delta_mu, (Vec3{0, 0, 0}));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(g.scale[i], std::log(2.0) + 0.05, 1e-15);
    EXPECT_NEAR(g.scale[0], 0.743, 1e-3);
    EXPECT_EQ(g.quat, (Quaternion{1, 0, 0, 0}));
    EXPECT_EQ(g.opacity, 0.5);
}

TEST(Activate, ZeroQuaternionFallsBackToIdentity) {
    RawAttributes raw;
    raw.quat_raw = {0, 0, 0, 0};
    EXPECT_EQ(activate(raw, {}).quat, (Quaternion{1, 0, 0, 0}));
}

TEST(Activate, OffsetSaturates) {
    RawAttributes raw;
    raw.offset_raw = {10, 0, 0};
    const auto g = activate(raw, {1.0, 0.05, 8.0});
    EXPECT_NEAR(g.delta_mu.x, 0.99999999587, 1e-10);
    EXPECT_LE(g.delta_mu.x, 1.0);
    EXPECT_EQ(g.delta_mu.y, 0);
}

TEST(Activate, BoundsHoldForExtremeInputs) {
    const ActivationLimits lim{};
    for (double v : {-1e6, -50.0, -1.0, 0.0, 1.0, 50.0, 1e6}) {
        RawAttributes raw;
        raw.offset_raw = {v, -v, v};
        raw.log_scale_raw = {v, -v, v};
        raw.quat_raw = {v, 1, 0, 0};
        raw.opacity_logit = v;
        raw.feature_raw = {v};
        const auto g = activate(raw, lim);
        for (int i = 0; i < 3; ++i) {
            EXPECT_LE(std::abs(g.delta_mu[i]), lim.max_offset);
            EXPECT_GE(g.scale[i], lim.min_scale);
            EXPECT_LE(g.scale[i], lim.max_scale);
        }
        EXPECT_NEAR(g.quat.norm(), 1, 1e-12);
        EXPECT_GE(g.opacity, 0);
        EXPECT_LE(g.opacity, 1);
        EXPECT_EQ(g.feature, std::vector<double>{v});
    }
}

TEST(Activate, FromSpanLayout) {
    std::vector<double> v(13);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
    const auto raw = RawAttributes::from_span(v);
    EXPECT_EQ(raw.offset_raw, (std::array<double, 3>{0, 1, 2}));
    EXPECT_EQ(raw.log_scale_raw, (std::array<double, 3>{3, 4, 5}));
    EXPECT_EQ(raw.quat_raw, (std::array<double, 4>{6, 7, 8, 9}));
    EXPECT_EQ(raw.opacity_logit, 10);
    EXPECT_EQ(raw.feature_raw, (std::vector<double>{11, 12}));
    EXPECT_THROW(RawAttributes::from_span(std::vector<double>(10)), Error);
}

TEST(CovarianceRay, Examples) {
    EXPECT_EQ(covariance_ray({1, 1, 1}, {}), Mat3::identity());
    EXPECT_EQ(covariance_ray({2, 1, 1}, {}), Mat3::diag(4, 1, 1));
    const double h = std::sqrt(2.0) / 2;
    EXPECT_LT(covariance_ray({2, 1, 1}, {h, 0, 0, h}).max_abs_diff(Mat3::diag(1, 4, 1)), 1e-12);
}

TEST(CovarianceRay, EigenvaluesAreSquaredScales) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 500; ++i) {
        const auto g = random_gaussian(rng);
        const Mat3 s = covariance_ray(g.scale, g.quat);
        EXPECT_EQ(s, s.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(to_eigen(s));
        std::array<double, 3> want{g.scale.x * g.scale.x, g.scale.y * g.scale.y, g.scale.z * g.scale.z};
        std::sort(want.begin(), want.end());
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(es.eigenvalues()[k], want[k], 1e-9);
        EXPECT_EQ(s, covariance_ray(g.scale, -g.quat));
    }
}

TEST(ToEgo, IdentityFrameOnXAxis) {
    GaussianRay g;
    g.scale = {2, 1, 0.5};
    g.quat = {0.9, 0.1, -0.3, 0.2};
    const double k = g.quat.norm();
    g.quat = {g.quat.w / k, g.quat.x / k, g.quat.y / k, g.quat.z / k};
    const Vec3 p{1, 0, 0};
    const auto e = to_ego(g, p, ray_frame_from_point(p), Mat3::identity());
    EXPECT_EQ(e.mean, p);
    const Mat3 want = covariance_ray(g.scale, g.quat) + Mat3::identity() * kCovarianceRegularization;
    EXPECT_LT(e.covariance.max_abs_diff(want), 1e-15);
}

TEST(ToEgo, HorizontalFlip) {
    std::mt19937_64 rng(7);
    auto g = random_gaussian(rng);
    const double delta = 0.3;
    g.delta_mu = {0, delta, 0};
    const Vec3 p{1, 0, 0};
    const Mat3 flip = Mat3::diag(1, -1, 1);
    const auto e = to_ego(g, p, ray_frame_from_point(p), flip);
    EXPECT_EQ(e.mean, (Vec3{1, -delta, 0}));
    const Mat3 s = covariance_ray(g.scale, g.quat);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double sign = (i == 1) != (j == 1) ? -1 : 1;
            const double reg = i == j ? kCovarianceRegularization : 0;
            EXPECT_NEAR(e.covariance(i, j), sign * s(i, j) + reg, 1e-15);
        }
}

TEST(ToEgo, MatchesMatrixChainOracle) {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n;
    for (int i = 0; i < 2000; ++i) {
        const auto g = random_gaussian(rng);
        Vec3 p{n(rng) * 30, n(rng) * 30, n(rng) * 3};
        if (p.norm() < 0.5) continue;
        const double ang = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
        Mat3 m = rotation_z(ang) * Mat3::diag(1, i % 2 ? -1 : 1, 1) * (1 + 0.2 * std::abs(n(rng)));
        const auto frame = ray_frame_from_point(p);
        const auto e = to_ego(g, p, frame, m);

        const Eigen::Matrix3d R = to_eigen(frame.rotation), M = to_eigen(m);
        const Eigen::Matrix3d Mi = M.inverse(), Ri = R.inverse();
        const Eigen::Matrix3d sigma = to_eigen(covariance_ray(g.scale, g.quat));
        const Eigen::Matrix3d cov =
            Mi * Ri * sigma * Ri.transpose() * Mi.transpose() + kCovarianceRegularization * Eigen::Matrix3d::Identity();
        const Eigen::Vector3d mean = Mi * to_eigen(p) + (R * M).inverse() * to_eigen(g.delta_mu);
        EXPECT_LT((to_eigen(e.covariance) - cov).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((to_eigen(e.mean) - mean).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_EQ(e.covariance, e.covariance.transpose());
        EXPECT_EQ(e.opacity, g.opacity);
        EXPECT_EQ(e.feature, g.feature);
    }
}

TEST(ToEgo, EgocentricAppliesOnlyAugmentation) {
    std::mt19937_64 rng(3);
    const auto g = random_gaussian(rng);
    const Vec3 p{2, 5, 1};
    const Mat3 m = rotation_z(0.4);
    const auto e = to_ego_egocentric(g, p, m);
    const Mat3 mi = m.transpose();
    EXPECT_LT((e.mean - (mi * p + mi * g.delta_mu)).norm(), 1e-12);
    const Mat3 want = mi * covariance_ray(g.scale, g.quat) * m + Mat3::identity() * kCovarianceRegularization;
    EXPECT_LT(e.covariance.max_abs_diff(want), 1e-12);
}

TEST(ToEgo, SingularAugmentationPropagates) {
    GaussianRay g;
    const Vec3 p{1, 2, 0};
    EXPECT_THROW(to_ego(g, p, ray_frame_from_point(p), Mat3::diag(0, 1, 1)), Error);
}

TEST(Marginalize, TopLeftBlock) {
    EgoGaussian e;
    e.covariance = Mat3{{2, 0.5, 0.7, 0.5, 3, -0.4, 0.7, -0.4, 5}};
    e.mean = {1, 2, 3};
    e.opacity = 0.25;
    e.feature = {4};
    const auto b = marginalize_bev(e);
    EXPECT_EQ(b.mean_xy, (std::array<double, 2>{1, 2}));
    EXPECT_EQ(b.cov2, (std::array<double, 4>{2, 0.5, 0.5, 3}));
    EXPECT_EQ(b.opacity, 0.25);
    EXPECT_EQ(b.feature, std::vector<double>{4});
    EgoGaussian id;
    EXPECT_EQ(marginalize_bev(id).cov2, (std::array<double, 4>{1, 0, 0, 1}));
}

TEST(Marginalize, EigenvaluesInterlace) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 500; ++i) {
        const auto g = random_gaussian(rng);
        EgoGaussian e;
        e.covariance = covariance_ray(g.scale, g.quat) + Mat3::identity() * kCovarianceRegularization;
        const auto b = marginalize_bev(e);
        Eigen::Matrix2d c2;
        c2 << b.cov2[0], b.cov2[1], b.cov2[2], b.cov2[3];
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> e2(c2);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> e3(to_eigen(e.covariance));
        const auto l2 = e2.eigenvalues();
        const auto l3 = e3.eigenvalues();
        EXPECT_GT(l2[0], 0);
        // Cauchy interlacing: l3[0] <= l2[0] <= l3[1] <= l2[1] <= l3[2]
        EXPECT_LE(l3[0], l2[0] + 1e-12);
        EXPECT_LE(l2[0], l3[1] + 1e-12);
        EXPECT_LE(l3[1], l2[1] + 1e-12);
        EXPECT_LE(l2[1], l3[2] + 1e-12);
    }
}
