#pragma once

// Point Gaussian encoder forward pass.
//
//   radar points -> point MLP -> [semantic injection] -> attribute head
//     -> activation -> ego placement (ray-centric or ego-centric) -> BEV splat
//
// The forward pass can record a trace of its intermediates; grad.hpp consumes
// that trace for the analytic backward pass.

#include "rpge/gaussians.hpp"
#include "rpge/image.hpp"
#include "rpge/rasterizer.hpp"
#include "rpge/tensor.hpp"

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rpge {

enum class CoordinateMode { ego_centric, ray_centric };
enum class SiMode { off, bilinear, deform };
enum class Activation { relu, linear };

inline std::string to_string(CoordinateMode m) { return m == CoordinateMode::ray_centric ? "ray" : "ego"; }
inline std::string to_string(SiMode m) {
    switch (m) {
    case SiMode::off: return "off";
    case SiMode::bilinear: return "bilinear";
    case SiMode::deform: return "deform";
    }
    return "?";
}

struct RadarPoint {
    Vec3 position{}; // m, radar frame
    double rcs = 0;  // dBsm
    double v_r = 0;  // m/s, relative radial velocity
    double dt = 0;   // s, age of the frame the point came from
};

inline constexpr std::size_t kPointInputs = 8;

/// Per-channel standardization of (x, y, z, r, rcs, v_r, dt, rho).
struct InputNormalization {
    std::array<double, kPointInputs> mean{0, 0, 0, 20, 10, 0, 0.1, 20};
    std::array<double, kPointInputs> stddev{15, 15, 1, 10, 5, 5, 0.1, 10};
};

inline std::array<double, kPointInputs> point_input_channels(const RadarPoint &p) {
    const auto &q = p.position;
    return {q.x, q.y, q.z, q.norm(), p.rcs, p.v_r, p.dt, std::hypot(q.x, q.y)};
}

inline std::array<double, kPointInputs> normalized_inputs(const RadarPoint &p, const InputNormalization &n) {
    auto ch = point_input_channels(p);
    for (std::size_t i = 0; i < kPointInputs; ++i) ch[i] = (ch[i] - n.mean[i]) / n.stddev[i];
    return ch;
}

// ---------------------------------------------------------------------------
// MLP

/// Non-owning view of a fully connected stack. `parameters` holds, per layer,
/// a row-major (out x in) weight followed by `out` biases. The activation is
/// applied after every layer.
struct MlpSpec {
    std::vector<std::size_t> widths;
    std::span<const double> parameters;
    Activation activation = Activation::relu;

    static std::size_t parameter_count(std::span<const std::size_t> widths) {
        std::size_t n = 0;
        for (std::size_t i = 0; i + 1 < widths.size(); ++i) n += widths[i] * widths[i + 1] + widths[i + 1];
        return n;
    }

    void validate() const {
        require(widths.size() >= 2, ErrorCode::WidthMismatch, "MLP needs at least an input and an output width");
        require(parameters.size() == parameter_count(widths), ErrorCode::WidthMismatch,
                "MLP expects " + std::to_string(parameter_count(widths)) + " parameters, got " +
                    std::to_string(parameters.size()));
    }
};

struct MlpTrace {
    std::vector<std::vector<double>> pre;  // per layer, before activation
    std::vector<std::vector<double>> post; // per layer, after activation
};

inline void affine(std::span<const double> params, std::size_t offset, std::size_t in, std::size_t out,
                   std::span<const double> x, std::span<double> y) {
    const double *w = params.data() + offset;
    const double *b = w + in * out;
    for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        const double *row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

inline std::vector<double> mlp_forward(const MlpSpec &mlp, std::span<const double> input, MlpTrace *trace = nullptr) {
    require(input.size() == mlp.widths.front(), ErrorCode::WidthMismatch,
            "MLP input width " + std::to_string(mlp.widths.front()) + " != " + std::to_string(input.size()));
    std::vector<double> x(input.begin(), input.end());
    if (trace) {
        trace->pre.clear();
        trace->post.clear();
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < mlp.widths.size(); ++l) {
        const std::size_t in = mlp.widths[l], out = mlp.widths[l + 1];
        std::vector<double> y(out);
        affine(mlp.parameters, offset, in, out, x, y);
        offset += in * out + out;
        if (trace) trace->pre.push_back(y);
        if (mlp.activation == Activation::relu)
            for (double &v : y) v = std::max(v, 0.0);
        if (trace) trace->post.push_back(y);
        x = std::move(y);
    }
    return x;
}

inline std::vector<std::vector<double>> point_featurize(std::span<const RadarPoint> points, const MlpSpec &mlp,
                                                        const InputNormalization &norm) {
    mlp.validate();
    require(mlp.widths.front() == kPointInputs, ErrorCode::WidthMismatch, "point MLP input width must be 8");
    std::vector<std::vector<double>> out;
    out.reserve(points.size());
    for (const auto &p : points) out.push_back(mlp_forward(mlp, normalized_inputs(p, norm)));
    return out;
}

// ---------------------------------------------------------------------------
// Configuration and parameters

struct EncoderConfig {
    CoordinateMode mode = CoordinateMode::ray_centric;
    bool offsets_enabled = true;
    SiMode si_mode = SiMode::off;
    std::size_t feature_dim = 16;
    std::vector<std::size_t> hidden{64, 64};
    ActivationLimits limits{};
    std::size_t deform_heads = 1;
    std::size_t deform_points = 4;
    std::size_t image_channels = 8;                  // C after resolution alignment
    std::vector<std::size_t> pyramid_channels{2, 2, 2}; // C_i of the incoming pyramid
    InputNormalization normalization{};

    std::vector<std::size_t> point_widths() const {
        std::vector<std::size_t> w{kPointInputs};
        w.insert(w.end(), hidden.begin(), hidden.end());
        return w;
    }
    std::size_t point_feature_dim() const { return hidden.back(); }
    std::size_t head_input_dim() const {
        return point_feature_dim() + (si_mode == SiMode::off ? 0 : image_channels);
    }
    std::size_t head_output_dim() const { return kGeometryOutputs + feature_dim; }
    std::size_t pyramid_total_channels() const {
        std::size_t n = 0;
        for (auto c : pyramid_channels) n += c;
        return n;
    }

    void validate() const {
        require(!hidden.empty(), ErrorCode::Config, "point MLP needs at least one hidden layer");
        for (auto w : hidden) require(w > 0, ErrorCode::Config, "MLP widths must be positive");
        require(feature_dim > 0, ErrorCode::Config, "feature dimension must be positive");
        require(limits.min_scale > 0 && limits.max_scale > limits.min_scale && limits.max_offset >= 0,
                ErrorCode::Config, "activation limits are inconsistent");
        if (si_mode != SiMode::off) {
            require(image_channels > 0 && !pyramid_channels.empty(), ErrorCode::Config,
                    "semantic injection needs image and pyramid channels");
        }
        if (si_mode == SiMode::deform) {
            require(deform_heads == 1, ErrorCode::Config, "deformable sampling supports a single head");
            require(deform_points > 0, ErrorCode::Config, "deformable sampling needs at least one point");
        }
        for (std::size_t i = 0; i < kPointInputs; ++i)
            require(normalization.stddev[i] > 0, ErrorCode::Config, "normalization std must be positive");
    }
};

namespace param {
inline constexpr const char *point_mlp = "point_mlp";
inline constexpr const char *head = "head";
inline constexpr const char *si_conv = "si_conv";
inline constexpr const char *si_offset = "si_offset";
inline constexpr const char *si_attn = "si_attn";
} // namespace param

inline ParameterSet make_parameter_shapes(const EncoderConfig &cfg) {
    cfg.validate();
    ParameterSet p;
    p.add(param::point_mlp, {MlpSpec::parameter_count(cfg.point_widths())});
    const std::size_t hin = cfg.head_input_dim(), hout = cfg.head_output_dim();
    p.add(param::head, {hout * hin + hout});
    if (cfg.si_mode != SiMode::off) {
        const std::size_t cin = cfg.pyramid_total_channels(), cout = cfg.image_channels;
        p.add(param::si_conv, {cout * cin + cout});
    }
    if (cfg.si_mode == SiMode::deform) {
        const std::size_t cp = cfg.point_feature_dim(), k = cfg.deform_points;
        p.add(param::si_offset, {2 * k * cp + 2 * k});
        p.add(param::si_attn, {k * cp + k});
    }
    return p;
}

/// Deterministic initialization, rounded to 32-bit floats so that a freshly
/// initialized set survives a checkpoint round trip unchanged.
inline ParameterSet init_parameters(const EncoderConfig &cfg, std::uint64_t seed) {
    ParameterSet p = make_parameter_shapes(cfg);
    std::mt19937_64 rng(seed);
    auto fill_layer = [&](std::vector<double> &data, std::size_t offset, std::size_t in, std::size_t out,
                          double bound) {
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < in * out; ++i) data[offset + i] = u(rng);
    };
    {
        auto widths = cfg.point_widths();
        auto &d = p[param::point_mlp].data;
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            fill_layer(d, off, widths[l], widths[l + 1], std::sqrt(6.0 / static_cast<double>(widths[l])));
            off += widths[l] * widths[l + 1] + widths[l + 1];
        }
    }
    {
        const std::size_t in = cfg.head_input_dim(), out = cfg.head_output_dim();
        auto &d = p[param::head].data;
        fill_layer(d, 0, in, out, 0.1 * std::sqrt(6.0 / static_cast<double>(in + out)));
        d[in * out + 6] = 1.0; // quaternion w bias: start near identity rotation
    }
    if (cfg.si_mode != SiMode::off) {
        const std::size_t in = cfg.pyramid_total_channels(), out = cfg.image_channels;
        fill_layer(p[param::si_conv].data, 0, in, out, std::sqrt(6.0 / static_cast<double>(in + out)));
    }
    // deformable offsets and attention logits start at zero: sampling begins at
    // the projected point with uniform weights.
    p.round_to_float();
    return p;
}

// ---------------------------------------------------------------------------
// Semantic injection

struct ImageInputs {
    FeaturePyramid pyramid;
    CameraProjection projection;
};

struct FrameInputs {
    Mat3 m_aug = Mat3::identity();
    const ImageInputs *image = nullptr;
};

struct SemanticTrace {
    ImagePoint projection;
    BilinearTap tap;                          // bilinear mode
    std::vector<double> offsets;              // deform: (du, dv) per sampling point
    std::vector<double> logits, weights;      // deform: attention logits and softmax
    std::vector<BilinearTap> taps;            // deform
    std::vector<std::vector<double>> samples; // deform: per sampling point, C values
};

/// f = concat(f_P, f_I). Out-of-view points get f_I = 0.
inline std::vector<double> semantic_inject(std::span<const double> f_p, const FeatureImage &img, const Vec3 &p,
                                           const CameraProjection &proj, const EncoderConfig &cfg,
                                           const ParameterSet &params, SemanticTrace *trace = nullptr) {
    require(cfg.si_mode != SiMode::off, ErrorCode::Config, "semantic injection is disabled");
    const std::size_t cimg = img.channels;
    std::vector<double> f(f_p.begin(), f_p.end());
    f.resize(f_p.size() + cimg, 0.0);
    std::span<double> f_i(f.data() + f_p.size(), cimg);

    SemanticTrace local;
    SemanticTrace &t = trace ? *trace : local;
    t = SemanticTrace{};
    t.projection = project_to_image(p, proj);
    if (!t.projection.in_view) return f;

    if (cfg.si_mode == SiMode::bilinear) {
        t.tap = bilinear_tap(img.height, img.width, t.projection.u, t.projection.v);
        accumulate_sample(img, t.tap, f_i);
        return f;
    }

    const std::size_t k = cfg.deform_points, cp = f_p.size();
    const auto &off_params = params[param::si_offset].data;
    const auto &att_params = params[param::si_attn].data;
    require(off_params.size() == 2 * k * cp + 2 * k && att_params.size() == k * cp + k, ErrorCode::ShapeMismatch,
            "deformable sampling parameters do not match the point feature width");
    t.offsets.assign(2 * k, 0.0);
    t.logits.assign(k, 0.0);
    affine(off_params, 0, cp, 2 * k, f_p, t.offsets);
    affine(att_params, 0, cp, k, f_p, t.logits);
    const double top = *std::max_element(t.logits.begin(), t.logits.end());
    double z = 0;
    t.weights.resize(k);
    for (std::size_t j = 0; j < k; ++j) z += t.weights[j] = std::exp(t.logits[j] - top);
    for (double &w : t.weights) w /= z;
    t.taps.resize(k);
    t.samples.assign(k, std::vector<double>(cimg, 0.0));
    for (std::size_t j = 0; j < k; ++j) {
        t.taps[j] = bilinear_tap(img.height, img.width, t.projection.u + t.offsets[2 * j],
                                 t.projection.v + t.offsets[2 * j + 1]);
        accumulate_sample(img, t.taps[j], t.samples[j]);
        for (std::size_t c = 0; c < cimg; ++c) f_i[c] += t.weights[j] * t.samples[j][c];
    }
    return f;
}

// ---------------------------------------------------------------------------
// Forward pass

struct PointTrace {
    MlpTrace mlp;
    std::vector<double> head_input;
    std::vector<double> head_output;
    SemanticTrace semantic;
    GaussianRay ray;
    Mat3 linear = Mat3::identity(); // maps the predicted frame to ego
};

struct ForwardTrace {
    std::vector<PointTrace> points;
    Image concat;        // pyramid at base resolution, before the 1x1 conv
    Image feature_image; // after resolution alignment
};

inline std::vector<EgoGaussian> encode_gaussians(const ParameterSet &params, const EncoderConfig &cfg,
                                                 std::span<const RadarPoint> points, const FrameInputs &frame,
                                                 ForwardTrace *trace = nullptr) {
    cfg.validate();
    const Mat3 m_inv = inverse_augmentation(frame.m_aug);
    const MlpSpec mlp{cfg.point_widths(), params[param::point_mlp].data, Activation::relu};
    mlp.validate();
    const auto &head = params[param::head].data;
    const std::size_t hin = cfg.head_input_dim(), hout = cfg.head_output_dim();
    require(head.size() == hout * hin + hout, ErrorCode::ShapeMismatch, "attribute head has the wrong size");

    Image concat, feature_image;
    if (cfg.si_mode != SiMode::off) {
        require(frame.image != nullptr, ErrorCode::Config, "semantic injection requires an image input");
        const auto &pyr = frame.image->pyramid;
        pyr.validate();
        require(pyr.total_channels() == cfg.pyramid_total_channels(), ErrorCode::ShapeMismatch,
                "pyramid channel count does not match the configuration");
        concat = concat_levels(pyr);
        feature_image = conv1x1(concat, params[param::si_conv].data, cfg.image_channels);
    }

    std::vector<EgoGaussian> out;
    out.reserve(points.size());
    if (trace) trace->points.assign(points.size(), PointTrace{});
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto &pt = points[i];
        PointTrace local;
        PointTrace &t = trace ? trace->points[i] : local;
        const auto input = normalized_inputs(pt, cfg.normalization);
        auto f_p = mlp_forward(mlp, input, &t.mlp);
        t.head_input = cfg.si_mode == SiMode::off
                           ? std::move(f_p)
                           : semantic_inject(f_p, feature_image, pt.position, frame.image->projection, cfg, params,
                                             &t.semantic);
        t.head_output.assign(hout, 0.0);
        affine(head, 0, hin, hout, t.head_input, t.head_output);
        t.ray = activate(RawAttributes::from_span(t.head_output), cfg.limits);
        if (!cfg.offsets_enabled) t.ray.delta_mu = {};
        t.linear = cfg.mode == CoordinateMode::ray_centric
                       ? m_inv * ray_frame_from_point(pt.position).rotation.transpose()
                       : m_inv;
        out.push_back(place_in_ego(t.ray, m_inv * pt.position, t.linear));
    }
    if (trace) {
        trace->concat = std::move(concat);
        trace->feature_image = std::move(feature_image);
    }
    return out;
}

template <typename T = float>
BasicFeatureMap<T> encode(const ParameterSet &params, const EncoderConfig &cfg, std::span<const RadarPoint> points,
                          const FrameInputs &frame, const BevGridSpec &grid, const SplatOptions &opt = {}) {
    const auto gaussians = encode_gaussians(params, cfg, points, frame);
    return splat<T>(std::span<const EgoGaussian>(gaussians), grid, opt);
}

} // namespace rpge
