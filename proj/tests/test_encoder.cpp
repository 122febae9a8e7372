#include "rpge/encoder.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace rpge;

namespace {

EncoderConfig small_config(CoordinateMode mode = CoordinateMode::ray_centric, SiMode si = SiMode::off) {
    EncoderConfig cfg;
    cfg.mode = mode;
    cfg.si_mode = si;
    cfg.feature_dim = 3;
    cfg.hidden = {16, 12};
    cfg.image_channels = 4;
    cfg.pyramid_channels = {2, 3};
    return cfg;
}

std::vector<RadarPoint> random_points(std::mt19937_64 &rng, std::size_t n) {
    std::uniform_real_distribution<double> ux(2, 40), uy(-20, 20), uz(-1, 2), uv(-5, 5);
    std::vector<RadarPoint> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({{ux(rng), uy(rng), uz(rng)}, uv(rng) + 10, uv(rng), 0.1 * (i % 3)});
    return pts;
}

Image random_image(std::mt19937_64 &rng, std::size_t c, std::size_t h, std::size_t w) {
    std::uniform_real_distribution<double> u(-1, 1);
    Image img(c, h, w);
    for (double &v : img.data) v = u(rng);
    return img;
}

ImageInputs random_image_inputs(std::mt19937_64 &rng, const EncoderConfig &cfg) {
    ImageInputs in;
    std::size_t h = 32, w = 48;
    for (auto c : cfg.pyramid_channels) {
        in.pyramid.levels.push_back(random_image(rng, c, h, w));
        h /= 2;
        w /= 2;
    }
    in.projection = overhead_camera(-5, 45, -25, 25, 40, 48, 32);
    return in;
}

} // namespace

// ---------------------------------------------------------------------------
// point features

TEST(PointFeaturize, ZeroWeightsPropagateBias) {
    const std::vector<std::size_t> widths{8, 5, 3};
    std::vector<double> params(MlpSpec::parameter_count(widths), 0.0);
    // biases of layer 1 (after 8*5 weights) and layer 2 (after 5*3 weights)
    for (std::size_t i = 0; i < 5; ++i) params[40 + i] = 0.1 * static_cast<double>(i) - 0.2;
    for (std::size_t i = 0; i < 3; ++i) params[45 + 15 + i] = 0.5 + static_cast<double>(i);
    const MlpSpec mlp{widths, params, Activation::relu};
    std::mt19937_64 rng(1);
    const auto f = point_featurize(random_points(rng, 10), mlp, {});
    for (const auto &v : f) EXPECT_EQ(v, (std::vector<double>{0.5, 1.5, 2.5}));
}

TEST(PointFeaturize, IdentityLayerGivesNormalizedInput) {
    const std::vector<std::size_t> widths{8, 8};
    std::vector<double> params(72, 0.0);
    for (std::size_t i = 0; i < 8; ++i) params[i * 8 + i] = 1;
    const MlpSpec mlp{widths, params, Activation::linear};
    const RadarPoint p{{3, 4, 1}, 12, -2, 0.2};
    const auto f = point_featurize(std::span<const RadarPoint>(&p, 1), mlp, {});
    const auto want = normalized_inputs(p, {});
    ASSERT_EQ(f[0].size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(f[0][i], want[i]);
    EXPECT_DOUBLE_EQ(want[3], (std::sqrt(26.0) - 20) / 10);
    EXPECT_DOUBLE_EQ(want[7], (5.0 - 20) / 10);
}

TEST(PointFeaturize, MatchesEigenChain) {
    std::mt19937_64 rng(2);
    const std::vector<std::size_t> widths{8, 16, 7, 5};
    std::vector<double> params(MlpSpec::parameter_count(widths));
    std::normal_distribution<double> n;
    for (double &v : params) v = 0.5 * n(rng);
    const MlpSpec mlp{widths, params, Activation::relu};
    const auto pts = random_points(rng, 20);
    const auto f = point_featurize(pts, mlp, {});
    for (std::size_t p = 0; p < pts.size(); ++p) {
        const auto in = normalized_inputs(pts[p], {});
        Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(in.data(), 8);
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const auto rows = static_cast<Eigen::Index>(widths[l + 1]), cols = static_cast<Eigen::Index>(widths[l]);
            const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
                params.data() + off, rows, cols);
            const Eigen::Map<const Eigen::VectorXd> b(params.data() + off + widths[l] * widths[l + 1], rows);
            x = (W * x + b).cwiseMax(0.0);
            off += widths[l] * widths[l + 1] + widths[l + 1];
        }
        for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(f[p][i], x[static_cast<Eigen::Index>(i)], 1e-6);
    }
}

TEST(PointFeaturize, WidthMismatch) {
    const std::vector<std::size_t> widths{7, 4};
    std::vector<double> params(MlpSpec::parameter_count(widths), 0.0);
    const RadarPoint p{{1, 0, 0}};
    try {
        point_featurize(std::span<const RadarPoint>(&p, 1), MlpSpec{widths, params}, {});
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::WidthMismatch);
    }
    const std::vector<std::size_t> w8{8, 4};
    EXPECT_THROW(point_featurize(std::span<const RadarPoint>(&p, 1), MlpSpec{w8, params}, {}), Error);
}

// ---------------------------------------------------------------------------
// image side

TEST(AlignResolution, SingleLevelIsConvOfLevelZero) {
    std::mt19937_64 rng(3);
    FeaturePyramid pyr;
    pyr.levels.push_back(random_image(rng, 3, 8, 6));
    std::vector<double> conv(2 * 3 + 2);
    for (std::size_t i = 0; i < conv.size(); ++i) conv[i] = 0.1 * static_cast<double>(i) - 0.3;
    const auto out = align_resolution(pyr, conv, 2);
    ASSERT_EQ(out.channels, 2u);
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 6; ++x)
            for (std::size_t o = 0; o < 2; ++o) {
                double want = conv[6 + o];
                for (std::size_t i = 0; i < 3; ++i) want += conv[o * 3 + i] * pyr.levels[0].at(i, y, x);
                EXPECT_NEAR(out.at(o, y, x), want, 1e-14);
            }
}

TEST(AlignResolution, ConstantLevelsGiveConstantOutput) {
    FeaturePyramid pyr;
    const std::vector<double> consts{0.5, -2, 3};
    std::size_t h = 16, w = 16;
    for (double c : consts) {
        Image img(1, h, w);
        std::fill(img.data.begin(), img.data.end(), c);
        pyr.levels.push_back(img);
        h /= 2;
        w /= 2;
    }
    const std::vector<double> conv{1, 2, 3, 0.25};
    const auto out = align_resolution(pyr, conv, 1);
    for (double v : out.data) EXPECT_DOUBLE_EQ(v, 0.5 - 4 + 9 + 0.25);
}

TEST(AlignResolution, ShapeContract) {
    std::mt19937_64 rng(4);
    FeaturePyramid pyr;
    pyr.levels = {random_image(rng, 8, 32, 32), random_image(rng, 16, 16, 16), random_image(rng, 32, 8, 8)};
    std::vector<double> conv(16 * 56 + 16, 0.01);
    const auto out = align_resolution(pyr, conv, 16);
    EXPECT_EQ(out.channels, 16u);
    EXPECT_EQ(out.height, 32u);
    EXPECT_EQ(out.width, 32u);
}

TEST(AlignResolution, Errors) {
    std::mt19937_64 rng(5);
    FeaturePyramid pyr;
    pyr.levels = {random_image(rng, 2, 16, 16), random_image(rng, 2, 7, 8)};
    std::vector<double> conv(4 * 2 + 2);
    try {
        align_resolution(pyr, conv, 2);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
    pyr.levels[1] = random_image(rng, 2, 8, 8);
    EXPECT_THROW(align_resolution(pyr, std::vector<double>(5), 2), Error);
}

TEST(Projection, OpticalAxis) {
    CameraProjection proj;
    const double cx = 31.5, cy = 23.5;
    proj.matrix = {1, 0, cx, 0, 0, 1, cy, 0, 0, 0, 1, 0};
    proj.width = 64;
    proj.height = 48;
    const auto ip = project_to_image({0, 0, 1}, proj);
    EXPECT_EQ(ip.u, cx);
    EXPECT_EQ(ip.v, cy);
    EXPECT_TRUE(ip.in_view);
    EXPECT_FALSE(project_to_image({0, 0, -1}, proj).in_view);
    EXPECT_FALSE(project_to_image({100, 0, 1}, proj).in_view);
}

TEST(Projection, MatchesHomogeneousDivide) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n;
    CameraProjection proj;
    for (double &v : proj.matrix) v = n(rng);
    proj.width = proj.height = 1000000;
    Eigen::Matrix<double, 3, 4, Eigen::RowMajor> P(proj.matrix.data());
    for (int i = 0; i < 500; ++i) {
        const Vec3 p{10 * n(rng), 10 * n(rng), 10 * n(rng)};
        const Eigen::Vector3d h = P * Eigen::Vector4d(p.x, p.y, p.z, 1);
        const auto ip = project_to_image(p, proj);
        EXPECT_NEAR(ip.depth, h[2], 1e-12 * std::max(1.0, std::abs(h[2])));
        if (h[2] > 0) {
            EXPECT_NEAR(ip.u, h[0] / h[2], 1e-9 * std::max(1.0, std::abs(ip.u)));
            EXPECT_NEAR(ip.v, h[1] / h[2], 1e-9 * std::max(1.0, std::abs(ip.v)));
        } else {
            EXPECT_FALSE(ip.in_view);
        }
    }
}

TEST(Projection, OverheadCameraOrientation) {
    const auto cam = overhead_camera(0, 50, -25, 25, 40, 100, 100);
    // +x is image up, +y is image left
    const auto a = project_to_image({10, 0, 0}, cam), b = project_to_image({20, 0, 0}, cam);
    const auto c = project_to_image({10, 5, 0}, cam);
    EXPECT_LT(b.v, a.v);
    EXPECT_LT(c.u, a.u);
    // rectangle corners map to the outer pixel edges
    const auto corner = project_to_image({50, 25, 0}, cam);
    EXPECT_NEAR(corner.u, -0.5, 1e-9);
    EXPECT_NEAR(corner.v, -0.5, 1e-9);
    EXPECT_NEAR(corner.depth, 40, 1e-12);
}

TEST(Bilinear, PixelCentreAndMidpoint) {
    std::mt19937_64 rng(7);
    const auto img = random_image(rng, 3, 5, 6);
    const auto at = bilinear_sample(img, 2, 3);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(at[c], img.at(c, 3, 2));
    const auto mid = bilinear_sample(img, 2.5, 1);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(mid[c], 0.5 * (img.at(c, 1, 2) + img.at(c, 1, 3)));
}

TEST(Bilinear, HandFormulaAndOutside) {
    std::mt19937_64 rng(8);
    const auto img = random_image(rng, 2, 9, 7);
    std::uniform_real_distribution<double> uu(0, 6), uv(0, 8);
    for (int i = 0; i < 500; ++i) {
        const double u = uu(rng), v = uv(rng);
        const auto s = bilinear_sample(img, u, v);
        const auto x0 = static_cast<std::size_t>(u), y0 = static_cast<std::size_t>(v);
        const std::size_t x1 = std::min<std::size_t>(x0 + 1, 6), y1 = std::min<std::size_t>(y0 + 1, 8);
        const double a = u - static_cast<double>(x0), b = v - static_cast<double>(y0);
        for (std::size_t c = 0; c < 2; ++c) {
            const double want = (1 - a) * (1 - b) * img.at(c, y0, x0) + a * (1 - b) * img.at(c, y0, x1) +
                                (1 - a) * b * img.at(c, y1, x0) + a * b * img.at(c, y1, x1);
            EXPECT_NEAR(s[c], want, 1e-7);
        }
    }
    for (auto [u, v] : {std::pair{-0.01, 3.0}, {6.01, 3.0}, {2.0, -1.0}, {2.0, 8.5}})
        EXPECT_EQ(bilinear_sample(img, u, v), (std::vector<double>{0, 0}));
    // the far edge itself is inside
    EXPECT_EQ(bilinear_sample(img, 6, 8)[0], img.at(0, 8, 6));
}

TEST(Upsample, HalfPixelCentres) {
    Image src(1, 2, 2);
    src.data = {0, 1, 2, 3};
    const auto up = upsample_bilinear(src, 4, 4);
    EXPECT_EQ(up.at(0, 0, 0), 0);
    EXPECT_EQ(up.at(0, 3, 3), 3);
    EXPECT_DOUBLE_EQ(up.at(0, 0, 1), 0.25);
    EXPECT_DOUBLE_EQ(up.at(0, 1, 1), 0.75);
}

// ---------------------------------------------------------------------------
// semantic injection

TEST(SemanticInject, OutOfViewGetsZeros) {
    std::mt19937_64 rng(9);
    for (auto mode : {SiMode::bilinear, SiMode::deform}) {
        const auto cfg = small_config(CoordinateMode::ray_centric, mode);
        const auto params = init_parameters(cfg, 1);
        const auto img = random_image(rng, 4, 32, 48);
        const auto cam = overhead_camera(-5, 45, -25, 25, 40, 48, 32);
        const std::vector<double> f_p{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
        const auto f = semantic_inject(f_p, img, {200, 0, 0}, cam, cfg, params);
        ASSERT_EQ(f.size(), 16u);
        for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(f[i], f_p[i]);
        for (std::size_t i = 12; i < 16; ++i) EXPECT_EQ(f[i], 0);
    }
}

TEST(SemanticInject, DeformWithZeroParamsEqualsBilinear) {
    std::mt19937_64 rng(10);
    const auto cfg_b = small_config(CoordinateMode::ray_centric, SiMode::bilinear);
    const auto cfg_d = small_config(CoordinateMode::ray_centric, SiMode::deform);
    const auto params = init_parameters(cfg_d, 2);
    const auto img = random_image(rng, 4, 32, 48);
    const auto cam = overhead_camera(-5, 45, -25, 25, 40, 48, 32);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> f_p(12);
        for (double &v : f_p) v = u(rng);
        const Vec3 p{20 + 20 * u(rng), 20 * u(rng), u(rng)};
        EXPECT_EQ(semantic_inject(f_p, img, p, cam, cfg_d, params),
                  semantic_inject(f_p, img, p, cam, cfg_b, params));
    }
}

TEST(SemanticInject, DeformMatchesDirectEvaluation) {
    std::mt19937_64 rng(11);
    const auto cfg = small_config(CoordinateMode::ray_centric, SiMode::deform);
    auto params = init_parameters(cfg, 3);
    std::normal_distribution<double> n;
    for (double &v : params[param::si_offset].data) v = 0.8 * n(rng);
    for (double &v : params[param::si_attn].data) v = n(rng);
    const auto img = random_image(rng, 4, 32, 48);
    const auto cam = overhead_camera(-5, 45, -25, 25, 40, 48, 32);
    const std::size_t k = cfg.deform_points, cp = 12;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> f_p(cp);
        for (double &v : f_p) v = n(rng);
        const Vec3 p{20 + 10 * n(rng), 10 * n(rng), 0};
        const auto f = semantic_inject(f_p, img, p, cam, cfg, params);
        const auto ip = project_to_image(p, cam);
        std::vector<double> want(4, 0.0);
        if (ip.in_view) {
            const auto &off = params[param::si_offset].data;
            const auto &att = params[param::si_attn].data;
            std::vector<double> logits(k);
            double z = 0;
            for (std::size_t j = 0; j < k; ++j) {
                logits[j] = att[k * cp + j];
                for (std::size_t c = 0; c < cp; ++c) logits[j] += att[j * cp + c] * f_p[c];
                z += std::exp(logits[j]);
            }
            for (std::size_t j = 0; j < k; ++j) {
                double du = off[2 * k * cp + 2 * j], dv = off[2 * k * cp + 2 * j + 1];
                for (std::size_t c = 0; c < cp; ++c) {
                    du += off[(2 * j) * cp + c] * f_p[c];
                    dv += off[(2 * j + 1) * cp + c] * f_p[c];
                }
                const auto s = bilinear_sample(img, ip.u + du, ip.v + dv);
                for (std::size_t c = 0; c < 4; ++c) want[c] += std::exp(logits[j]) / z * s[c];
            }
        }
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(f[cp + c], want[c], 1e-6);
    }
}

// ---------------------------------------------------------------------------
// encode

TEST(Encode, ZeroPointsGiveZeroMap) {
    const auto cfg = small_config();
    const auto params = init_parameters(cfg, 0);
    const BevGridSpec grid{0, 12.8, -6.4, 6.4, 0.2, 3};
    const auto map = encode<float>(params, cfg, {}, FrameInputs{}, grid);
    EXPECT_EQ(map.nonzero_cells(), 0u);
}

TEST(Encode, OnAxisModesAgree) {
    auto ego = small_config(CoordinateMode::ego_centric), ray = small_config(CoordinateMode::ray_centric);
    const auto params = init_parameters(ray, 5);
    const BevGridSpec grid{0, 12.8, -6.4, 6.4, 0.2, 3};
    const std::vector<RadarPoint> pts{{{5, 0, 0}, 10, 1, 0}, {{9.3, 0, 0}, 4, -2, 0.1}};
    const auto ge = encode_gaussians(params, ego, pts, {});
    const auto gr = encode_gaussians(params, ray, pts, {});
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_EQ(ge[i].mean, gr[i].mean);
        EXPECT_EQ(ge[i].covariance, gr[i].covariance);
    }
    EXPECT_EQ(encode<float>(params, ego, pts, {}, grid).data(), encode<float>(params, ray, pts, {}, grid).data());
}

TEST(Encode, NinetyDegreeRayEqualsRotatedEgo) {
    // same attributes; ray-centric at +y versus ego-centric at +x, rotated by 90 degrees
    GaussianRay g;
    g.scale = {2.0, 0.4, 0.5};
    g.delta_mu = {0.3, -0.2, 0};
    g.quat = {0.98, 0, 0, 0.2};
    const double k = g.quat.norm();
    g.quat = {g.quat.w / k, 0, 0, g.quat.z / k};
    g.opacity = 0.9;
    g.feature = {1};
    const BevGridSpec grid{-12.8, 12.8, -12.8, 12.8, 0.2, 1};
    const Vec3 py{0, 6, 0}, px{6, 0, 0};
    const auto ray = to_ego(g, py, ray_frame_from_point(py), Mat3::identity());
    const auto ego = to_ego_egocentric(g, px, Mat3::identity());
    const auto a = splat<double>(std::span<const EgoGaussian>(&ray, 1), grid);
    const auto b = splat<double>(std::span<const EgoGaussian>(&ego, 1), grid);
    const std::size_t n = grid.width();
    double worst = 0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) worst = std::max(worst, std::abs(a.at(0, c, n - 1 - r) - b.at(0, r, c)));
    EXPECT_LT(worst, 1e-6);
    EXPECT_GT(b.nonzero_cells(), 10u);
}

TEST(Encode, RotationalConsistencyOfCovariances) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n;
    for (int i = 0; i < 200; ++i) {
        GaussianRay g;
        g.scale = {0.2 + std::abs(n(rng)), 0.2 + std::abs(n(rng)), 0.2 + std::abs(n(rng))};
        Quaternion q{n(rng), n(rng), n(rng), n(rng)};
        const double k = q.norm();
        g.quat = {q.w / k, q.x / k, q.y / k, q.z / k};
        const double theta = std::uniform_real_distribution<double>(-3, 3)(rng);
        const double range = 5 + 20 * std::abs(n(rng));
        const Vec3 p0{range, 0, 0};
        const Mat3 rz = rotation_z(theta);
        const Vec3 pt = rz * p0;
        const auto e0 = to_ego(g, p0, ray_frame_from_point(p0), Mat3::identity());
        const auto et = to_ego(g, pt, ray_frame_from_point(pt), Mat3::identity());
        const Mat3 reg = Mat3::identity() * kCovarianceRegularization;
        EXPECT_LT((et.covariance - reg).max_abs_diff(rz * (e0.covariance - reg) * rz.transpose()), 1e-9);
        EXPECT_EQ(to_ego_egocentric(g, p0, Mat3::identity()).covariance,
                  to_ego_egocentric(g, pt, Mat3::identity()).covariance);
    }
}

TEST(Encode, FlipEquivariance) {
    std::mt19937_64 rng(13);
    const BevGridSpec grid{-25.6, 25.6, -25.6, 25.6, 0.4, 3};
    for (auto mode : {CoordinateMode::ego_centric, CoordinateMode::ray_centric}) {
        const auto cfg = small_config(mode);
        const auto params = init_parameters(cfg, 6);
        const auto pts = random_points(rng, 40);
        const auto a = encode<double>(params, cfg, pts, {}, grid);
        const auto b = encode<double>(params, cfg, pts, FrameInputs{Mat3::diag(1, -1, 1), nullptr}, grid);
        const std::size_t h = grid.height();
        double worst = 0;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t col = 0; col < grid.width(); ++col)
                    worst = std::max(worst, std::abs(a.at(c, r, col) - b.at(c, h - 1 - r, col)));
        EXPECT_LT(worst, 1e-5) << to_string(mode);
    }
}

TEST(Encode, ControlledSiAblationKeepsGeometry) {
    std::mt19937_64 rng(14);
    auto cfg_si = small_config(CoordinateMode::ray_centric, SiMode::bilinear);
    auto cfg_off = small_config(CoordinateMode::ray_centric, SiMode::off);
    auto p_si = init_parameters(cfg_si, 7);
    ImageInputs img = random_image_inputs(rng, cfg_si);
    for (auto &level : img.pyramid.levels) std::fill(level.data.begin(), level.data.end(), 0.0);
    // nonzero conv bias so the injected features are nonzero
    auto &conv = p_si[param::si_conv].data;
    for (std::size_t o = 0; o < 4; ++o) conv[4 * 5 + o] = 0.5 + static_cast<double>(o);
    const std::size_t cp = cfg_si.point_feature_dim(), hin = cfg_si.head_input_dim(), hout = cfg_si.head_output_dim();
    auto &head = p_si[param::head].data;
    for (std::size_t o = 0; o < kGeometryOutputs; ++o)
        for (std::size_t i = cp; i < hin; ++i) head[o * hin + i] = 0;
    ParameterSet p_off = init_parameters(cfg_off, 7);
    p_off.set(param::point_mlp, p_si[param::point_mlp]);
    auto &head_off = p_off[param::head].data;
    for (std::size_t o = 0; o < hout; ++o) {
        for (std::size_t i = 0; i < cp; ++i) head_off[o * cp + i] = head[o * hin + i];
        head_off[hout * cp + o] = head[hout * hin + o];
    }
    const auto pts = random_points(rng, 30);
    const auto with = encode_gaussians(p_si, cfg_si, pts, FrameInputs{Mat3::identity(), &img});
    const auto without = encode_gaussians(p_off, cfg_off, pts, {});
    bool any_feature_changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_EQ(with[i].mean, without[i].mean);
        EXPECT_EQ(with[i].covariance, without[i].covariance);
        EXPECT_EQ(with[i].opacity, without[i].opacity);
        any_feature_changed = any_feature_changed || with[i].feature != without[i].feature;
    }
    EXPECT_TRUE(any_feature_changed);
}

TEST(Encode, Deterministic) {
    std::mt19937_64 rng(15);
    const auto cfg = small_config(CoordinateMode::ray_centric, SiMode::deform);
    const auto params = init_parameters(cfg, 8);
    const auto img = random_image_inputs(rng, cfg);
    const auto pts = random_points(rng, 50);
    const BevGridSpec grid{0, 51.2, -25.6, 25.6, 0.4, 3};
    SplatOptions many;
    many.threads = 3;
    const FrameInputs frame{Mat3::identity(), &img};
    EXPECT_EQ(encode<float>(params, cfg, pts, frame, grid).data(),
              encode<float>(params, cfg, pts, frame, grid, many).data());
}

TEST(Encode, OffsetsDisabledZeroesDeltaMu) {
    auto cfg = small_config();
    cfg.offsets_enabled = false;
    auto params = init_parameters(cfg, 9);
    auto &head = params[param::head].data;
    const std::size_t hin = cfg.head_input_dim(), hout = cfg.head_output_dim();
    for (std::size_t o = 0; o < 3; ++o) head[hout * hin + o] = 2.0;
    const std::vector<RadarPoint> pts{{{7, 3, 0.5}, 10, 0, 0}};
    EXPECT_EQ(encode_gaussians(params, cfg, pts, {})[0].mean, pts[0].position);
}

TEST(Encode, RequiresImageWhenSiEnabled) {
    const auto cfg = small_config(CoordinateMode::ray_centric, SiMode::bilinear);
    const auto params = init_parameters(cfg, 1);
    const std::vector<RadarPoint> pts{{{7, 3, 0.5}, 10, 0, 0}};
    EXPECT_THROW(encode_gaussians(params, cfg, pts, {}), Error);
}

TEST(Parameters, InitIsFloatExactAndSeeded) {
    const auto cfg = small_config(CoordinateMode::ray_centric, SiMode::deform);
    const auto a = init_parameters(cfg, 42), b = init_parameters(cfg, 42), c = init_parameters(cfg, 43);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == c);
    for (const auto &[name, t] : a)
        for (double v : t.data) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v))) << name;
    EXPECT_TRUE(a.same_shapes(make_parameter_shapes(cfg)));
}
