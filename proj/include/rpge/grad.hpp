#pragma once

// Analytic reverse-mode gradients of the reconstruction loss through the
// encoder and the splat, a central finite-difference verifier, and Adam.
//
// The loss is piecewise smooth: footprint/w_min cutoffs, ReLU kinks, the scale
// clamp and bilinear cell boundaries all introduce kinks. Every forward pass
// reports a signature hash of which branch each of those took, so gradient
// probes can detect that a +-eps perturbation crossed a kink and redraw.

#include "rpge/encoder.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace rpge {

using GradientSet = ParameterSet;

/// One training example: a radar scan, its augmentation, optional camera
/// features and the target map over the training grid.
struct Sample {
    std::vector<RadarPoint> points;
    Mat3 m_aug = Mat3::identity();
    std::optional<ImageInputs> image;
    BasicFeatureMap<double> target;

    FrameInputs frame() const { return {m_aug, image ? &*image : nullptr}; }
};

struct LossAndGrad {
    double loss = 0;
    GradientSet grads;
    std::uint64_t signature = 0;
};

namespace detail {

struct Signature {
    std::uint64_t h = 1469598103934665603ull;
    void add(std::uint64_t v) {
        h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// y = W x + b backward: accumulates dW, db and returns dx.
inline std::vector<double> affine_backward(std::span<const double> params, std::span<double> grads, std::size_t offset,
                                           std::size_t in, std::size_t out, std::span<const double> x,
                                           std::span<const double> gy) {
    std::vector<double> gx(in, 0.0);
    const double *w = params.data() + offset;
    double *gw = grads.data() + offset;
    double *gb = gw + in * out;
    for (std::size_t o = 0; o < out; ++o) {
        const double g = gy[o];
        if (g == 0) continue;
        gb[o] += g;
        for (std::size_t i = 0; i < in; ++i) {
            gw[o * in + i] += g * x[i];
            gx[i] += g * w[o * in + i];
        }
    }
    return gx;
}

/// dL/dq for the unnormalized quaternion given dL/dR of R = quat_to_rotation(q).
inline std::array<double, 4> quaternion_backward(const Quaternion &unit, double norm, const Mat3 &g) {
    const double w = unit.w, x = unit.x, y = unit.y, z = unit.z;
    std::array<double, 4> gu{
        2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1)),
        2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1) -
             2 * x * g(2, 2)),
        2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1) -
             2 * y * g(2, 2)),
        2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
             x * g(2, 0) + y * g(2, 1))};
    const double proj = gu[0] * w + gu[1] * x + gu[2] * y + gu[3] * z;
    const std::array<double, 4> u{w, x, y, z};
    for (int i = 0; i < 4; ++i) gu[i] = (gu[i] - u[i] * proj) / norm;
    return gu;
}

// Gradient of an upper-triangle-mirrored symmetric result, folded onto the
// upper triangle that was actually computed.
inline Mat3 fold_symmetric(const Mat3 &g) {
    Mat3 h;
    for (int i = 0; i < 3; ++i) {
        h(i, i) = g(i, i);
        for (int j = i + 1; j < 3; ++j) h(i, j) = g(i, j) + g(j, i);
    }
    return h;
}

struct GaussianGrad {
    double mean[2]{};
    double cov2[4]{};
    double opacity = 0;
    std::vector<double> feature;
};

/// Backward through splat for dL/d(output) = `gout`, plus the signature of the
/// active contribution set.
inline std::vector<GaussianGrad> splat_backward(std::span<const Bev2DGaussian> gaussians, const BevGridSpec &grid,
                                                const SplatOptions &opt, const BasicFeatureMap<double> &gout,
                                                Signature &sig) {
    const std::size_t C = grid.channels, H = gout.height(), W = gout.width(), plane = H * W;
    std::vector<GaussianGrad> out(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto &g = gaussians[i];
        const auto pg = prepare(g, grid, opt.k_sigma);
        auto &gg = out[i];
        gg.feature.assign(C, 0.0);
        if (!pg.box) {
            sig.add(i * 2 + 1);
            continue;
        }
        const auto &b = *pg.box;
        sig.add((b.row_lo << 48) ^ (b.row_hi << 32) ^ (b.col_lo << 16) ^ b.col_hi);
        double g_cxx = 0, g_cxy = 0, g_cyy = 0;
        for (std::size_t r = b.row_lo; r <= b.row_hi; ++r) {
            const double cy = grid.center_y(r);
            for (std::size_t c = b.col_lo; c <= b.col_hi; ++c) {
                const double cx = grid.center_x(c);
                const double w = pg.weight(cx, cy);
                if (w < opt.w_min) continue;
                sig.add((i << 40) ^ (r << 20) ^ c);
                const std::size_t cell = r * W + c;
                double gw = 0;
                for (std::size_t k = 0; k < C; ++k) {
                    const double go = gout.data()[k * plane + cell];
                    gg.feature[k] += w * go;
                    gw += g.feature[k] * go;
                }
                if (gw == 0) continue;
                const double dx = cx - pg.mean_x, dy = cy - pg.mean_y;
                gg.opacity += gw * std::exp(-0.5 * (pg.conic_xx * dx * dx + pg.conic_xy * dx * dy +
                                                    pg.conic_yy * dy * dy));
                gg.mean[0] += gw * 0.5 * w * (2 * pg.conic_xx * dx + pg.conic_xy * dy);
                gg.mean[1] += gw * 0.5 * w * (pg.conic_xy * dx + 2 * pg.conic_yy * dy);
                g_cxx += gw * -0.5 * w * dx * dx;
                g_cxy += gw * -0.5 * w * dx * dy;
                g_cyy += gw * -0.5 * w * dy * dy;
            }
        }
        // conic entries -> general 2x2 covariance [a b; c d]
        const double a = g.cov2[0], bb = g.cov2[1], cc = g.cov2[2], d = g.cov2[3];
        const double det = a * d - bb * cc, det2 = det * det, s = bb + cc;
        gg.cov2[0] = g_cxx * (-d * d / det2) + g_cxy * (s * d / det2) + g_cyy * (1 / det - a * d / det2);
        gg.cov2[1] = g_cxx * (d * cc / det2) + g_cxy * (-1 / det - s * cc / det2) + g_cyy * (a * cc / det2);
        gg.cov2[2] = g_cxx * (d * bb / det2) + g_cxy * (-1 / det - s * bb / det2) + g_cyy * (a * bb / det2);
        gg.cov2[3] = g_cxx * (1 / det - d * a / det2) + g_cxy * (s * a / det2) + g_cyy * (-a * a / det2);
    }
    return out;
}

/// Backward from per-Gaussian gradients to every parameter. Returns nothing;
/// accumulates into `grads` and extends the signature with the encoder kinks.
inline void encoder_backward(const ParameterSet &params, const EncoderConfig &cfg,
                             std::span<const RadarPoint> points, const ForwardTrace &trace,
                             std::span<const GaussianGrad> ggrads, GradientSet &grads, Signature &sig) {
    const auto widths = cfg.point_widths();
    const std::size_t hin = cfg.head_input_dim(), hout = cfg.head_output_dim(), cp = cfg.point_feature_dim();
    const auto &head = params[param::head].data;
    auto &g_head = grads[param::head].data;
    const auto &mlp_params = params[param::point_mlp].data;
    auto &g_mlp = grads[param::point_mlp].data;
    const auto &lim = cfg.limits;

    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto &t = trace.points[i];
        const auto &gg = ggrads[i];
        const auto &ray = t.ray;
        const Mat3 &A = t.linear;

        // marginalization and ego placement
        Mat3 g_cov;
        g_cov(0, 0) = gg.cov2[0];
        g_cov(0, 1) = gg.cov2[1];
        g_cov(1, 0) = gg.cov2[2];
        g_cov(1, 1) = gg.cov2[3];
        const Vec3 g_mean{gg.mean[0], gg.mean[1], 0};
        const Vec3 g_dmu = A.transpose() * g_mean;
        const Mat3 g_sigma_ray = A.transpose() * fold_symmetric(g_cov) * A;

        // Sigma_ray = R diag(s^2) R^T, upper triangle mirrored
        const Mat3 R = quat_to_rotation(ray.quat);
        const Mat3 H = fold_symmetric(g_sigma_ray);
        const Mat3 HR = (H + H.transpose()) * R;
        const Mat3 RtHR = R.transpose() * H * R;
        Mat3 g_R;
        Vec3 g_scale;
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) g_R(a, b) = HR(a, b) * ray.scale[b] * ray.scale[b];
            g_scale[a] = 2 * ray.scale[a] * RtHR(a, a);
        }

        // activations -> raw head outputs
        std::vector<double> g_out(hout, 0.0);
        const auto &raw = t.head_output;
        for (int k = 0; k < 3; ++k) {
            if (cfg.offsets_enabled) {
                const double th = std::tanh(raw[k]);
                g_out[k] = g_dmu[k] * lim.max_offset * (1 - th * th);
            }
            const bool clamped = softplus(raw[3 + k]) + lim.min_scale > lim.max_scale;
            sig.add(clamped ? 0xc1a3 + k : 0x5ca1 + k);
            if (!clamped) g_out[3 + k] = g_scale[k] * sigmoid(raw[3 + k]);
        }
        const Quaternion q_raw{raw[6], raw[7], raw[8], raw[9]};
        const double qn = q_raw.norm();
        if (qn >= kMinQuatNorm) {
            const auto gq = quaternion_backward(ray.quat, qn, g_R);
            for (int k = 0; k < 4; ++k) g_out[6 + k] = gq[k];
        }
        g_out[10] = gg.opacity * ray.opacity * (1 - ray.opacity);
        for (std::size_t k = 0; k < cfg.feature_dim; ++k) g_out[kGeometryOutputs + k] = gg.feature[k];

        // attribute head
        auto g_h = affine_backward(head, g_head, 0, hin, hout, t.head_input, g_out);
        std::vector<double> g_fp(g_h.begin(), g_h.begin() + static_cast<std::ptrdiff_t>(cp));

        // semantic injection
        if (cfg.si_mode != SiMode::off) {
            const auto &st = t.semantic;
            sig.add(st.projection.in_view ? 0x1a : 0x2b);
            if (st.projection.in_view) {
                const std::span<const double> g_fi(g_h.data() + cp, cfg.image_channels);
                const auto &conv = params[param::si_conv].data;
                auto &g_conv = grads[param::si_conv].data;
                const std::size_t cin = trace.concat.channels, cout = cfg.image_channels;
                auto conv_backward = [&](const BilinearTap &tap, std::span<const double> g_sample) {
                    if (!tap.valid) return;
                    std::vector<double> x(cin, 0.0);
                    accumulate_sample(trace.concat, tap, x);
                    affine_backward(conv, g_conv, 0, cin, cout, x, g_sample);
                };
                auto tap_signature = [&](const BilinearTap &tap) {
                    sig.add(tap.valid ? (tap.x0 << 20) ^ tap.y0 ^ (tap.x1 << 40) ^ (tap.y1 << 50) : 0xdead);
                };
                if (cfg.si_mode == SiMode::bilinear) {
                    tap_signature(st.tap);
                    conv_backward(st.tap, g_fi);
                } else {
                    const std::size_t K = cfg.deform_points;
                    const auto &img = trace.feature_image;
                    std::vector<double> g_offsets(2 * K, 0.0), g_logits(K, 0.0);
                    double mix = 0;
                    std::vector<double> gs(K);
                    for (std::size_t j = 0; j < K; ++j) {
                        gs[j] = dot(g_fi, st.samples[j]);
                        mix += st.weights[j] * gs[j];
                    }
                    std::vector<double> du(cout), dv(cout), g_sample(cout);
                    for (std::size_t j = 0; j < K; ++j) {
                        tap_signature(st.taps[j]);
                        g_logits[j] = st.weights[j] * (gs[j] - mix);
                        if (!st.taps[j].valid) continue;
                        std::fill(du.begin(), du.end(), 0.0);
                        std::fill(dv.begin(), dv.end(), 0.0);
                        sample_gradient(img, st.taps[j], du, dv);
                        g_offsets[2 * j] = st.weights[j] * dot(g_fi, du);
                        g_offsets[2 * j + 1] = st.weights[j] * dot(g_fi, dv);
                        for (std::size_t c = 0; c < cout; ++c) g_sample[c] = st.weights[j] * g_fi[c];
                        conv_backward(st.taps[j], g_sample);
                    }
                    const auto &f_p = t.mlp.post.back();
                    const auto g1 = affine_backward(params[param::si_offset].data, grads[param::si_offset].data, 0,
                                                    cp, 2 * K, f_p, g_offsets);
                    const auto g2 = affine_backward(params[param::si_attn].data, grads[param::si_attn].data, 0, cp,
                                                    K, f_p, g_logits);
                    for (std::size_t c = 0; c < cp; ++c) g_fp[c] += g1[c] + g2[c];
                }
            }
        }

        // point MLP (ReLU after every layer)
        std::vector<double> g = std::move(g_fp);
        std::size_t offset = MlpSpec::parameter_count(widths);
        for (std::size_t l = widths.size() - 1; l-- > 0;) {
            const std::size_t in = widths[l], out = widths[l + 1];
            offset -= in * out + out;
            const auto &pre = t.mlp.pre[l];
            for (std::size_t o = 0; o < out; ++o) {
                const bool on = pre[o] > 0;
                sig.add(on ? 1 : 2);
                if (!on) g[o] = 0;
            }
            const auto input = normalized_inputs(points[i], cfg.normalization);
            const std::span<const double> x = l == 0 ? std::span<const double>(input) : std::span<const double>(t.mlp.post[l - 1]);
            g = affine_backward(mlp_params, g_mlp, offset, in, out, x, g);
        }
    }
}

} // namespace detail

/// Mean squared error over every channel and cell; optionally writes
/// dLoss/dOutput into `gout`.
inline double mse_loss(const BasicFeatureMap<double> &out, const BasicFeatureMap<double> &target,
                       BasicFeatureMap<double> *gout = nullptr) {
    require(out.grid() == target.grid(), ErrorCode::ShapeMismatch, "output and target grids differ");
    const double n = static_cast<double>(out.data().size());
    double loss = 0;
    for (std::size_t i = 0; i < out.data().size(); ++i) {
        const double r = out.data()[i] - target.data()[i];
        loss += r * r;
        if (gout) gout->data()[i] = 2 * r / n;
    }
    return n > 0 ? loss / n : 0.0;
}

/// Mean squared error between the splatted map and the target, and its
/// gradient with respect to every parameter.
inline LossAndGrad loss_and_grad(const ParameterSet &params, const Sample &sample, const EncoderConfig &cfg,
                                 const BevGridSpec &grid, const SplatOptions &opt = {}) {
    require(grid.channels == cfg.feature_dim, ErrorCode::ShapeMismatch, "grid channels must equal feature_dim");
    require(sample.target.grid() == grid, ErrorCode::ShapeMismatch, "target map does not match the grid");
    ForwardTrace trace;
    const auto frame = sample.frame();
    const auto gaussians = encode_gaussians(params, cfg, sample.points, frame, &trace);
    const auto bev = marginalize_all(gaussians);
    SplatOptions serial = opt;
    serial.threads = 1;
    const auto out = splat<double>(std::span<const Bev2DGaussian>(bev), grid, serial);

    LossAndGrad result;
    BasicFeatureMap<double> gout(grid);
    result.loss = mse_loss(out, sample.target, &gout);
    result.grads = params.zeros_like();
    detail::Signature sig;
    const auto ggrads = detail::splat_backward(bev, grid, serial, gout, sig);
    detail::encoder_backward(params, cfg, sample.points, trace, ggrads, result.grads, sig);
    result.signature = sig.h;
    return result;
}

/// Averages loss and gradients over a batch.
inline LossAndGrad loss_and_grad(const ParameterSet &params, std::span<const Sample> batch, const EncoderConfig &cfg,
                                 const BevGridSpec &grid, const SplatOptions &opt = {}) {
    LossAndGrad total;
    total.grads = params.zeros_like();
    detail::Signature sig;
    for (const auto &s : batch) {
        auto r = loss_and_grad(params, s, cfg, grid, opt);
        total.loss += r.loss;
        for (auto &[name, t] : total.grads) {
            const auto &src = r.grads[name].data;
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += src[i];
        }
        sig.add(r.signature);
    }
    if (!batch.empty()) {
        const double inv = 1.0 / static_cast<double>(batch.size());
        total.loss *= inv;
        for (auto &[_, t] : total.grads)
            for (double &v : t.data) v *= inv;
    }
    total.signature = sig.h;
    return total;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct ProbeResult {
    std::string tensor;
    std::size_t index = 0;
    double analytic = 0, numeric = 0, rel_error = 0;
};

struct FdReport {
    double max_rel_error = 0;
    std::size_t redraws = 0;
    std::vector<ProbeResult> probes;
};

/// `fn(params)` must return a LossAndGrad. Coordinates are drawn uniformly over
/// all parameters; a probe whose +-eps evaluations change the signature is
/// redrawn (up to 50 * n_probes attempts in total).
template <typename LossFn>
FdReport finite_difference_check(const ParameterSet &params, LossFn &&fn, std::size_t n_probes, std::uint64_t seed,
                                 double eps = 1e-4) {
    FdReport report;
    const std::size_t total = params.total_size();
    if (total == 0 || n_probes == 0) return report;
    const LossAndGrad base = fn(params);
    std::vector<std::pair<std::string, std::size_t>> index;
    for (const auto &[name, t] : params) index.emplace_back(name, t.size());
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    ParameterSet probe = params;
    const std::size_t budget = 50 * n_probes;
    for (std::size_t attempt = 0; report.probes.size() < n_probes && attempt < budget; ++attempt) {
        std::size_t flat = pick(rng);
        std::size_t k = 0;
        while (flat >= index[k].second) flat -= index[k++].second;
        const std::string &name = index[k].first;
        double &slot = probe[name].data[flat];
        const double original = slot;
        slot = original + eps;
        const auto plus = fn(probe);
        slot = original - eps;
        const auto minus = fn(probe);
        slot = original;
        if (plus.signature != base.signature || minus.signature != base.signature) {
            ++report.redraws;
            continue;
        }
        ProbeResult pr;
        pr.tensor = name;
        pr.index = flat;
        pr.analytic = base.grads[name].data[flat];
        pr.numeric = (plus.loss - minus.loss) / (2 * eps);
        pr.rel_error = std::abs(pr.analytic - pr.numeric) /
                       std::max({std::abs(pr.analytic), std::abs(pr.numeric), 1e-8});
        report.max_rel_error = std::max(report.max_rel_error, pr.rel_error);
        report.probes.push_back(pr);
    }
    return report;
}

inline FdReport finite_difference_check(const ParameterSet &params, std::span<const Sample> batch,
                                        const EncoderConfig &cfg, const BevGridSpec &grid, std::size_t n_probes,
                                        std::uint64_t seed = 0, const SplatOptions &opt = {}, double eps = 1e-4) {
    return finite_difference_check(
        params, [&](const ParameterSet &p) { return loss_and_grad(p, batch, cfg, grid, opt); }, n_probes, seed, eps);
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    ParameterSet m, v;
    std::uint64_t step = 0;
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState for_parameters(const ParameterSet &params, double lr = 1e-3) {
        AdamState s;
        s.m = params.zeros_like();
        s.v = params.zeros_like();
        s.lr = lr;
        return s;
    }
};

inline void adam_step(ParameterSet &params, const GradientSet &grads, AdamState &state) {
    require(params.same_shapes(grads) && params.same_shapes(state.m) && params.same_shapes(state.v),
            ErrorCode::ShapeMismatch, "parameter, gradient and optimizer shapes differ");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1 - std::pow(state.beta1, t), c2 = 1 - std::pow(state.beta2, t);
    for (auto &[name, p] : params) {
        const auto &g = grads[name].data;
        auto &m = state.m[name].data;
        auto &v = state.v[name].data;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1 - state.beta2) * g[i] * g[i];
            p.data[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
        }
    }
}

} // namespace rpge
