#include "rpge/ablation.hpp"
#include "rpge/grad.hpp"
#include "rpge/train.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rpge;

namespace {

const BevGridSpec kGrid{-12.8, 12.8, -12.8, 12.8, 0.4, 3};

EncoderConfig config(CoordinateMode mode, bool offsets, SiMode si) {
    EncoderConfig cfg;
    cfg.mode = mode;
    cfg.offsets_enabled = offsets;
    cfg.si_mode = si;
    cfg.feature_dim = 3;
    cfg.hidden = {16, 16};
    cfg.image_channels = 4;
    cfg.pyramid_channels = {2, 2, 2};
    return cfg;
}

Sample make_sample(std::uint64_t seed, std::size_t boxes = 3) {
    Rng rng(seed);
    SceneSpec spec;
    spec.num_boxes = boxes;
    spec.x_min = spec.y_min = -11;
    spec.x_max = spec.y_max = 11;
    spec.min_range = 4;
    spec.max_range = 11;
    SimConfig sim;
    sim.x_min = sim.y_min = -12.8;
    sim.x_max = sim.y_max = 12.8;
    sim.clutter_points = 4;
    const auto scene = sample_scene(rng, spec);
    Sample s;
    s.points = simulate_radar(scene, sim, rng);
    s.target = render_target<double>(scene, kGrid);
    const auto cam = overhead_camera(kGrid.x_min, kGrid.x_max, kGrid.y_min, kGrid.y_max, 30, 32, 32);
    auto [pyr, proj] = make_feature_image(scene, cam, rng);
    s.image = ImageInputs{std::move(pyr), proj};
    return s;
}

} // namespace

TEST(Loss, ZeroWhenTargetEqualsOutput) {
    const auto cfg = config(CoordinateMode::ray_centric, true, SiMode::deform);
    const auto params = init_parameters(cfg, 1);
    Sample s = make_sample(1);
    s.target = encode<double>(params, cfg, s.points, s.frame(), kGrid);
    const auto lg = loss_and_grad(params, s, cfg, kGrid);
    EXPECT_EQ(lg.loss, 0);
    for (const auto &[name, t] : lg.grads)
        for (double v : t.data) EXPECT_EQ(v, 0) << name;
}

TEST(Loss, TargetScaleDoublesOutputGradient) {
    BasicFeatureMap<double> out(kGrid), t1(kGrid), t2(kGrid), g1(kGrid), g2(kGrid);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (double &v : t1.data()) v = u(rng);
    for (std::size_t i = 0; i < t1.data().size(); ++i) t2.data()[i] = 2 * t1.data()[i];
    const double l1 = mse_loss(out, t1, &g1), l2 = mse_loss(out, t2, &g2);
    EXPECT_DOUBLE_EQ(l2, 4 * l1);
    for (std::size_t i = 0; i < g1.data().size(); ++i) {
        EXPECT_EQ(g2.data()[i], 2 * g1.data()[i]);
        EXPECT_DOUBLE_EQ(g1.data()[i], -2 * t1.data()[i] / static_cast<double>(t1.data().size()));
    }
}

TEST(Loss, ShapeMismatch) {
    const auto cfg = config(CoordinateMode::ray_centric, true, SiMode::off);
    const auto params = init_parameters(cfg, 1);
    Sample s = make_sample(1);
    s.target = BasicFeatureMap<double>(kGrid.with_channels(2));
    try {
        loss_and_grad(params, s, cfg, kGrid);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
}

TEST(Loss, PermutationInvariant) {
    const auto cfg = config(CoordinateMode::ray_centric, true, SiMode::bilinear);
    const auto params = init_parameters(cfg, 3);
    Sample s = make_sample(3);
    const auto a = loss_and_grad(params, s, cfg, kGrid);
    std::mt19937_64 rng(3);
    std::shuffle(s.points.begin(), s.points.end(), rng);
    const auto b = loss_and_grad(params, s, cfg, kGrid);
    EXPECT_EQ(a.loss, b.loss);
}

TEST(Gradient, SingleCoordinateCentralDifference) {
    const auto cfg = config(CoordinateMode::ray_centric, true, SiMode::off);
    const auto params = init_parameters(cfg, 4);
    const Sample s = make_sample(4);
    const auto base = loss_and_grad(params, s, cfg, kGrid);
    // first hidden unit's weight on the x channel, and an opacity bias
    const std::size_t hin = cfg.head_input_dim(), hout = cfg.head_output_dim();
    for (auto [name, idx] : {std::pair{param::point_mlp, std::size_t{0}}, {param::head, hout * hin + 10}}) {
        const double eps = 1e-3;
        auto p = params, m = params;
        p[name].data[idx] += eps;
        m[name].data[idx] -= eps;
        const auto lp = loss_and_grad(p, s, cfg, kGrid), lm = loss_and_grad(m, s, cfg, kGrid);
        ASSERT_EQ(lp.signature, base.signature);
        ASSERT_EQ(lm.signature, base.signature);
        const double fd = (lp.loss - lm.loss) / (2 * eps), an = base.grads[name].data[idx];
        EXPECT_LT(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8}), 1e-4) << name;
    }
}

class GradientCheck : public ::testing::TestWithParam<AblationCell> {};

TEST_P(GradientCheck, SixtyFourProbes) {
    const auto cell = GetParam();
    const auto cfg = config(cell.mode, cell.offsets, cell.si);
    const auto params = init_parameters(cfg, 5);
    const std::vector<Sample> batch{make_sample(5), make_sample(6)};
    const auto report = finite_difference_check(params, std::span<const Sample>(batch), cfg, kGrid, 64, 7);
    EXPECT_EQ(report.probes.size(), 64u);
    EXPECT_LT(report.max_rel_error, 1e-4) << cell.name();
}

INSTANTIATE_TEST_SUITE_P(AllCells, GradientCheck, ::testing::ValuesIn(all_ablation_cells()),
                         [](const auto &info) {
                             std::string n = info.param.name();
                             for (char &c : n)
                                 if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
                             return n;
                         });

TEST(Gradient, DeformOffsetsReceiveGradient) {
    const auto cfg = config(CoordinateMode::ray_centric, true, SiMode::deform);
    auto params = init_parameters(cfg, 8);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n;
    for (double &v : params[param::si_offset].data) v = 0.3 * n(rng);
    for (double &v : params[param::si_attn].data) v = 0.3 * n(rng);
    const std::vector<Sample> batch{make_sample(8)};
    const auto lg = loss_and_grad(params, std::span<const Sample>(batch), cfg, kGrid);
    double norm = 0;
    for (double v : lg.grads[param::si_offset].data) norm += v * v;
    EXPECT_GT(norm, 0);
    const auto report = finite_difference_check(params, std::span<const Sample>(batch), cfg, kGrid, 64, 9);
    EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(FiniteDifference, QuadraticModelIsExact) {
    ParameterSet p;
    p.add("w", {3});
    p["w"].data = {0.5, -1.25, 2};
    const std::vector<std::array<double, 4>> data{{1, 2, 3, 1}, {-1, 0.5, 2, -2}, {0.3, 0.3, -1, 0.5}};
    auto fn = [&](const ParameterSet &q) {
        LossAndGrad r;
        r.grads = q.zeros_like();
        for (const auto &d : data) {
            const auto &w = q["w"].data;
            const double res = w[0] * d[0] + w[1] * d[1] + w[2] * d[2] - d[3];
            r.loss += res * res;
            for (int i = 0; i < 3; ++i) r.grads["w"].data[i] += 2 * res * d[i];
        }
        return r;
    };
    const auto report = finite_difference_check(p, fn, 16, 1, 1e-3);
    EXPECT_EQ(report.probes.size(), 16u);
    EXPECT_LT(report.max_rel_error, 1e-9);
}

TEST(FiniteDifference, EmptyParameterSetReturnsZero) {
    ParameterSet p;
    auto fn = [](const ParameterSet &) { return LossAndGrad{}; };
    const auto report = finite_difference_check(p, fn, 64, 1);
    EXPECT_EQ(report.max_rel_error, 0);
    EXPECT_TRUE(report.probes.empty());
}

TEST(FiniteDifference, RedrawsOnSignatureChange) {
    ParameterSet p;
    p.add("w", {2});
    p["w"].data = {0.0, 1.0};
    // kink at w0 = 0: any probe of w0 changes the signature
    auto fn = [](const ParameterSet &q) {
        LossAndGrad r;
        r.grads = q.zeros_like();
        const double a = q["w"].data[0], b = q["w"].data[1];
        r.loss = std::abs(a) + b * b;
        r.grads["w"].data = {a >= 0 ? 1.0 : -1.0, 2 * b};
        r.signature = a > 0 ? 1 : (a < 0 ? 2 : 3);
        return r;
    };
    const auto report = finite_difference_check(p, fn, 8, 3);
    EXPECT_GT(report.redraws, 0u);
    for (const auto &pr : report.probes) EXPECT_EQ(pr.index, 1u);
    EXPECT_LT(report.max_rel_error, 1e-9);
}

TEST(Adam, ZeroGradientKeepsParameters) {
    ParameterSet p;
    p.add("w", {3});
    p["w"].data = {1, 2, 3};
    auto state = AdamState::for_parameters(p, 0.1);
    state.m["w"].data = {0.5, 0.5, 0.5};
    state.v["w"].data = {1, 1, 1};
    auto grads = p.zeros_like();
    // with zero gradient and nonzero moments the update is driven by the moments;
    // starting from zero moments nothing moves
    auto fresh = AdamState::for_parameters(p, 0.1);
    auto q = p;
    adam_step(q, grads, fresh);
    EXPECT_TRUE(q == p);
    EXPECT_EQ(fresh.step, 1u);
    adam_step(p, grads, state);
    EXPECT_DOUBLE_EQ(state.m["w"].data[0], 0.45);
    EXPECT_DOUBLE_EQ(state.v["w"].data[0], 0.999);
}

TEST(Adam, FirstStepHandCalculation) {
    ParameterSet p;
    p.add("w", {2});
    p["w"].data = {1.0, -2.0};
    auto g = p.zeros_like();
    g["w"].data = {0.3, -4.0};
    auto s = AdamState::for_parameters(p, 0.01);
    adam_step(p, g, s);
    // m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
    EXPECT_DOUBLE_EQ(p["w"].data[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8));
    EXPECT_DOUBLE_EQ(p["w"].data[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8));
    EXPECT_DOUBLE_EQ(s.m["w"].data[0], 0.1 * 0.3);
    EXPECT_DOUBLE_EQ(s.v["w"].data[1], 0.001 * 16);
}

TEST(Adam, DeterministicAndShapeChecked) {
    ParameterSet p;
    p.add("w", {4});
    p["w"].data = {1, 2, 3, 4};
    auto g = p.zeros_like();
    g["w"].data = {0.1, -0.2, 0.3, -0.4};
    auto a = p, b = p;
    auto sa = AdamState::for_parameters(p), sb = AdamState::for_parameters(p);
    for (int i = 0; i < 2; ++i) {
        adam_step(a, g, sa);
        adam_step(b, g, sb);
    }
    EXPECT_TRUE(a == b);
    ParameterSet wrong;
    wrong.add("w", {3});
    try {
        adam_step(a, wrong, sa);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
}

TEST(Train, ZeroStepsKeepInitialization) {
    const auto cfg = config(CoordinateMode::ray_centric, true, SiMode::off);
    auto params = init_parameters(cfg, 9);
    const auto init = params;
    auto state = AdamState::for_parameters(params);
    const std::vector<Sample> pool{make_sample(9)};
    TrainOptions opt;
    opt.steps = 0;
    EXPECT_TRUE(train(params, state, pool, cfg, kGrid, opt).empty());
    EXPECT_TRUE(params == init);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
    const auto cfg = config(CoordinateMode::ray_centric, true, SiMode::bilinear);
    const std::vector<Sample> pool{make_sample(10), make_sample(11), make_sample(12)};
    TrainOptions opt;
    opt.steps = 8;
    opt.batch_size = 2;
    auto full = init_parameters(cfg, 10);
    auto full_state = AdamState::for_parameters(full);
    const auto curve = train(full, full_state, pool, cfg, kGrid, opt);

    auto part = init_parameters(cfg, 10);
    auto part_state = AdamState::for_parameters(part);
    TrainOptions first = opt;
    first.steps = 3;
    auto c1 = train(part, part_state, pool, cfg, kGrid, first);
    const auto c2 = train(part, part_state, pool, cfg, kGrid, opt);
    c1.insert(c1.end(), c2.begin(), c2.end());
    EXPECT_TRUE(part == full);
    EXPECT_EQ(part_state.step, 8u);
    ASSERT_EQ(c1.size(), curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        EXPECT_EQ(c1[i].step, curve[i].step);
        EXPECT_EQ(c1[i].loss, curve[i].loss);
    }
}

TEST(Train, ThreadCountDoesNotChangeResult) {
    const auto cfg = config(CoordinateMode::ego_centric, true, SiMode::off);
    const std::vector<Sample> pool{make_sample(13), make_sample(14), make_sample(15), make_sample(16)};
    TrainOptions opt;
    opt.steps = 4;
    opt.batch_size = 4;
    auto a = init_parameters(cfg, 11), b = a;
    auto sa = AdamState::for_parameters(a), sb = AdamState::for_parameters(b);
    train(a, sa, pool, cfg, kGrid, opt);
    opt.threads = 4;
    train(b, sb, pool, cfg, kGrid, opt);
    EXPECT_TRUE(a == b);
}

TEST(Train, LossDecreases) {
    const auto cfg = config(CoordinateMode::ray_centric, true, SiMode::off);
    const std::vector<Sample> pool{make_sample(17), make_sample(18)};
    auto params = init_parameters(cfg, 12);
    auto state = AdamState::for_parameters(params);
    const double before = mean_loss(params, pool, cfg, kGrid);
    TrainOptions opt;
    opt.steps = 60;
    opt.batch_size = 2;
    train(params, state, pool, cfg, kGrid, opt);
    EXPECT_LT(mean_loss(params, pool, cfg, kGrid), 0.8 * before);
}

TEST(Train, BatchIndicesCycleThroughPool) {
    EXPECT_EQ(batch_indices(0, 3, 5), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(batch_indices(1, 3, 5), (std::vector<std::size_t>{3, 4, 0}));
    EXPECT_EQ(batch_indices(7, 4, 2), (std::vector<std::size_t>{0, 1}));
}
