#pragma once

#include "manifest.hpp"
#include "run_config.hpp"

#include "rpge/bench.hpp"
#include "rpge/feature_map.hpp"
#include "rpge/image_io.hpp"
#include "rpge/radar_io.hpp"
#include "rpge/render.hpp"
#include "rpge/selftest.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

namespace rpge::cli {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kSelftestFailure = 3 };

inline int exit_code_for(ErrorCode c) {
    switch (c) {
    case ErrorCode::Io:
    case ErrorCode::PlacementFailure: return kRuntime;
    default: return kValidation;
    }
}

/// --threads wins, then RPGE_THREADS, then the config file, then hardware.
inline std::size_t resolve_threads(std::size_t flag, const RunConfig &cfg) {
    if (flag > 0) return flag;
    if (std::getenv("RPGE_THREADS") || cfg.threads == 0) return default_thread_count();
    return cfg.threads;
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    io::write_file(path, std::vector<char>(text.begin(), text.end()));
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// synth

inline std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (std::uint64_t{out[0]} << 32) | out[1];
}

inline CameraProjection dataset_camera(const RunConfig &cfg) {
    const auto &g = cfg.grid();
    return overhead_camera(g.x_min, g.x_max, g.y_min, g.y_max, cfg.ablation.data.camera_altitude,
                           cfg.ablation.data.image_size, cfg.ablation.data.image_size);
}

inline Manifest cmd_synth(const RunConfig &cfg, std::uint64_t seed, const std::filesystem::path &out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::Io, out_dir.string() + ": " + ec.message());
    const auto &g = cfg.grid();
    SimConfig sim = cfg.ablation.sim;
    sim.x_min = g.x_min;
    sim.x_max = g.x_max;
    sim.y_min = g.y_min;
    sim.y_max = g.y_max;
    const auto cam = dataset_camera(cfg);

    Manifest m;
    m.header = {{"format", "rpge-dataset"},
                {"version", 1},
                {"seed", seed},
                {"scene_count", cfg.scenes},
                {"grid",
                 {{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min}, {"y_max", g.y_max}, {"cell", g.cell},
                  {"channels", g.channels}}},
                {"image",
                 {{"size", cfg.ablation.data.image_size},
                  {"altitude", cfg.ablation.data.camera_altitude},
                  {"levels", cfg.ablation.data.image.levels},
                  {"classes", cfg.ablation.data.image.classes}}}};
    for (std::size_t i = 0; i < cfg.scenes; ++i) {
        Rng rng(scene_seed(seed, i));
        const auto boxes = sample_scene(rng, cfg.ablation.scene);
        auto points = simulate_radar(boxes, sim, rng);
        round_points_to_float(points);
        const auto target = render_target<float>(boxes, g);
        auto [pyr, proj] = make_feature_image(boxes, cam, rng, cfg.ablation.data.image);
        ImageInputs image{std::move(pyr), proj};

        char stem[32];
        std::snprintf(stem, sizeof stem, "scene_%04zu", i);
        SceneEntry e;
        e.index = i;
        e.boxes = boxes.size();
        e.points = points.size();
        e.files.push_back(write_tracked(out_dir, "points", std::string(stem) + ".points", encode_points(points)));
        e.files.push_back(write_tracked(out_dir, "target", std::string(stem) + ".fmap", encode_feature_map(target)));
        e.files.push_back(write_tracked(out_dir, "pyramid", std::string(stem) + ".pyr", encode_image_inputs(image)));
        m.scenes.push_back(std::move(e));
    }
    write_manifest(out_dir, m);
    return m;
}

inline std::vector<Sample> load_dataset(const std::filesystem::path &dir, const BevGridSpec &grid) {
    const auto m = read_manifest(dir);
    std::vector<Sample> out;
    for (const auto &s : m.scenes) {
        Sample sample;
        sample.points = read_points(dir / s.file("points").path);
        const auto target = read_feature_map(dir / s.file("target").path);
        if (!(target.grid() == grid))
            throw Error(ErrorCode::ShapeMismatch,
                        (dir / s.file("target").path).string() + ": target grid does not match the configured grid");
        sample.target = target.cast<double>();
        sample.image = read_image_inputs(dir / s.file("pyramid").path);
        out.push_back(std::move(sample));
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoints

inline std::string join(const std::vector<std::size_t> &v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

inline std::vector<std::size_t> split_sizes(const std::string &s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(std::stoul(part));
    return out;
}

inline std::map<std::string, std::string> encoder_meta(const EncoderConfig &e) {
    return {{"encoder.mode", to_string(e.mode)},
            {"encoder.offsets", e.offsets_enabled ? "true" : "false"},
            {"encoder.si", to_string(e.si_mode)},
            {"encoder.feature_dim", std::to_string(e.feature_dim)},
            {"encoder.hidden", join(e.hidden)},
            {"encoder.image_channels", std::to_string(e.image_channels)},
            {"encoder.pyramid_channels", join(e.pyramid_channels)},
            {"encoder.deform_heads", std::to_string(e.deform_heads)},
            {"encoder.deform_points", std::to_string(e.deform_points)},
            {"encoder.max_offset", fmt(e.limits.max_offset)},
            {"encoder.min_scale", fmt(e.limits.min_scale)},
            {"encoder.max_scale", fmt(e.limits.max_scale)}};
}

inline EncoderConfig encoder_from_meta(const std::map<std::string, std::string> &meta, const std::string &context) {
    auto get = [&](const std::string &k) {
        auto it = meta.find(k);
        if (it == meta.end()) throw Error(ErrorCode::Format, context + ": checkpoint lacks '" + k + "'");
        return it->second;
    };
    EncoderConfig e;
    try {
        e.mode = get("encoder.mode") == "ray" ? CoordinateMode::ray_centric : CoordinateMode::ego_centric;
        e.offsets_enabled = get("encoder.offsets") == "true";
        const auto si = get("encoder.si");
        e.si_mode = si == "deform" ? SiMode::deform : si == "bilinear" ? SiMode::bilinear : SiMode::off;
        e.feature_dim = std::stoul(get("encoder.feature_dim"));
        e.hidden = split_sizes(get("encoder.hidden"));
        e.image_channels = std::stoul(get("encoder.image_channels"));
        e.pyramid_channels = split_sizes(get("encoder.pyramid_channels"));
        e.deform_heads = std::stoul(get("encoder.deform_heads"));
        e.deform_points = std::stoul(get("encoder.deform_points"));
        e.limits.max_offset = std::stod(get("encoder.max_offset"));
        e.limits.min_scale = std::stod(get("encoder.min_scale"));
        e.limits.max_scale = std::stod(get("encoder.max_scale"));
    } catch (const std::logic_error &) {
        throw Error(ErrorCode::Format, context + ": malformed encoder settings");
    }
    e.validate();
    return e;
}

inline constexpr std::string_view kMomentM = "adam.m.", kMomentV = "adam.v.";

struct Checkpoint {
    EncoderConfig encoder;
    ParameterSet params;
    AdamState state;
    std::uint64_t seed = 0;
};

inline TensorArchive checkpoint_archive(const Checkpoint &c) {
    TensorArchive a;
    a.meta = encoder_meta(c.encoder);
    a.meta["format"] = "rpge-checkpoint";
    a.meta["step"] = std::to_string(c.state.step);
    a.meta["seed"] = std::to_string(c.seed);
    a.meta["lr"] = fmt(c.state.lr);
    for (const auto &[name, t] : c.params) a.tensors.set(name, t);
    for (const auto &[name, t] : c.state.m) a.tensors.set(std::string(kMomentM) + name, t);
    for (const auto &[name, t] : c.state.v) a.tensors.set(std::string(kMomentV) + name, t);
    return a;
}

inline Checkpoint read_checkpoint(const std::filesystem::path &path) {
    const auto a = read_archive(path);
    const auto ctx = path.string();
    auto meta = [&](const std::string &k) {
        auto it = a.meta.find(k);
        if (it == a.meta.end()) throw Error(ErrorCode::Format, ctx + ": checkpoint lacks '" + k + "'");
        return it->second;
    };
    if (meta("format") != "rpge-checkpoint") throw Error(ErrorCode::Format, ctx + ": not a checkpoint");
    Checkpoint c;
    c.encoder = encoder_from_meta(a.meta, ctx);
    try {
        c.state.step = std::stoull(meta("step"));
        c.seed = std::stoull(meta("seed"));
        c.state.lr = std::stod(meta("lr"));
    } catch (const std::logic_error &) {
        throw Error(ErrorCode::Format, ctx + ": malformed step, seed or lr");
    }
    for (const auto &[name, t] : a.tensors) {
        if (name.starts_with(kMomentM)) c.state.m.set(name.substr(kMomentM.size()), t);
        else if (name.starts_with(kMomentV)) c.state.v.set(name.substr(kMomentV.size()), t);
        else c.params.set(name, t);
    }
    const auto shapes = make_parameter_shapes(c.encoder);
    if (!shapes.same_shapes(c.params) || !shapes.same_shapes(c.state.m) || !shapes.same_shapes(c.state.v))
        throw Error(ErrorCode::ShapeMismatch, ctx + ": tensors do not match the encoder settings");
    return c;
}

// ---------------------------------------------------------------------------
// train

struct TrainReport {
    std::uint64_t start_step = 0, end_step = 0;
    std::vector<LossPoint> curve;
    std::filesystem::path checkpoint, loss_curve;
};

inline std::filesystem::path loss_curve_path(const std::filesystem::path &checkpoint) {
    auto p = checkpoint;
    p.replace_extension(".loss.tsv");
    return p;
}

inline TrainReport cmd_train(const RunConfig &cfg, std::uint64_t seed, const std::filesystem::path &data_dir,
                             const std::filesystem::path &out_checkpoint, const std::filesystem::path &resume,
                             std::size_t threads) {
    const auto samples = load_dataset(data_dir, cfg.grid());
    Checkpoint ck;
    if (!resume.empty()) {
        ck = read_checkpoint(resume);
        if (encoder_meta(ck.encoder) != encoder_meta(cfg.encoder()))
            throw Error(ErrorCode::Config, resume.string() + ": checkpoint encoder settings differ from the config");
    } else {
        ck.encoder = cfg.encoder();
        ck.seed = seed;
        ck.params = init_parameters(ck.encoder, seed);
        ck.state = AdamState::for_parameters(ck.params, cfg.ablation.train.lr);
    }
    for (const auto &s : samples)
        if (ck.encoder.si_mode != SiMode::off) {
            const auto &levels = s.image->pyramid.levels;
            require(levels.size() == ck.encoder.pyramid_channels.size(), ErrorCode::ShapeMismatch,
                    "dataset pyramid depth differs from encoder.pyramid_channels");
        }
    TrainOptions topt = cfg.ablation.train;
    topt.threads = threads;
    TrainReport r;
    r.start_step = ck.state.step;
    r.curve = train(ck.params, ck.state, samples, ck.encoder, cfg.grid(), topt, cfg.ablation.splat);
    r.end_step = ck.state.step;
    r.checkpoint = out_checkpoint;
    r.loss_curve = loss_curve_path(out_checkpoint);
    if (out_checkpoint.has_parent_path()) std::filesystem::create_directories(out_checkpoint.parent_path());
    write_archive(out_checkpoint, checkpoint_archive(ck));
    std::string curve = "step\tloss\n";
    for (const auto &p : r.curve) curve += std::to_string(p.step) + "\t" + fmt(p.loss) + "\n";
    write_text(r.loss_curve, curve);
    return r;
}

// ---------------------------------------------------------------------------
// encode

inline FeatureMap cmd_encode(const RunConfig &cfg, const std::filesystem::path &checkpoint,
                             const std::filesystem::path &points_file, const std::filesystem::path &pyramid_file,
                             std::size_t threads) {
    const auto ck = read_checkpoint(checkpoint);
    const auto points = read_points(points_file);
    std::optional<ImageInputs> image;
    if (!pyramid_file.empty()) image = read_image_inputs(pyramid_file);
    if (ck.encoder.si_mode != SiMode::off && !image)
        throw Error(ErrorCode::Config, "encoder uses semantic injection; pass --pyramid");
    SplatOptions opt = cfg.ablation.splat;
    opt.threads = threads;
    return encode<float>(ck.params, ck.encoder, points, FrameInputs{Mat3::identity(), image ? &*image : nullptr},
                         cfg.grid(), opt);
}

// ---------------------------------------------------------------------------
// selftest

inline nlohmann::ordered_json selftest_json(const std::vector<SelftestCheck> &checks, bool mutant) {
    nlohmann::ordered_json j;
    j["mutant"] = mutant;
    auto arr = nlohmann::ordered_json::array();
    bool all = true;
    for (const auto &c : checks) {
        all = all && c.passed;
        arr.push_back({{"name", c.name},
                       {"max_error", std::isfinite(c.max_error) ? nlohmann::ordered_json(c.max_error) : nullptr},
                       {"tolerance", c.tolerance},
                       {"passed", c.passed},
                       {"seconds", c.seconds}});
    }
    j["checks"] = arr;
    j["passed"] = all;
    return j;
}

inline std::string selftest_table(const std::vector<SelftestCheck> &checks) {
    std::string out;
    char line[160];
    for (const auto &c : checks) {
        std::snprintf(line, sizeof line, "%-4s %-24s max_error %-12.4g tolerance %-8.1g %.2fs\n",
                      c.passed ? "PASS" : "FAIL", c.name.c_str(), c.max_error, c.tolerance, c.seconds);
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// ablation

inline std::string ablation_summary(const AblationReport &r) {
    std::string out;
    char line[200];
    for (const auto &c : r.cells) {
        std::snprintf(line, sizeof line, "%-22s median %.6g  per-seed", c.cell.name().c_str(), c.median_final());
        out += line;
        for (const auto &s : c.seeds) {
            std::snprintf(line, sizeof line, " %.6g", s.final_eval_loss);
            out += line;
        }
        out += "\n";
    }
    for (const auto &o : r.orderings) {
        std::snprintf(line, sizeof line, "%-4s %s: %s %.6g < %s %.6g\n", o.holds ? "OK" : "FAIL", o.name.c_str(),
                      o.better.c_str(), o.better_median, o.worse.c_str(), o.worse_median);
        out += line;
    }
    return out;
}

} // namespace rpge::cli
