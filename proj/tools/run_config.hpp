#pragma once

// YAML run configuration. Every section and field is optional; unknown keys,
// wrong types and out-of-range values are reported as
// "<file>:<line>:<column>: <field>: <message>".

#include "rpge/ablation.hpp"
#include "rpge/bench.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace rpge::cli {

struct RunConfig {
    AblationConfig ablation;
    std::size_t scenes = 10; // synth
    BenchOptions bench;
    std::uint64_t seed = 0;
    std::size_t threads = 0; // 0: RPGE_THREADS or hardware concurrency
    std::string out;

    const BevGridSpec &grid() const { return ablation.grid; }
    const EncoderConfig &encoder() const { return ablation.encoder; }

    void validate() const {
        ablation.validate();
        bench.validate();
        require(scenes > 0, ErrorCode::Config, "data.scenes must be positive");
    }
};

namespace detail {

class Section {
public:
    Section(YAML::Node node, std::string path, std::string file)
        : node_(std::move(node)), path_(std::move(path)), file_(std::move(file)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) fail(node_, path_.empty() ? "document" : path_, "expected a mapping");
    }

    [[noreturn]] void fail(const YAML::Node &at, const std::string &field, const std::string &msg) const {
        const auto m = at.Mark();
        std::string where = file_;
        if (!m.is_null()) where += ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
        throw Error(ErrorCode::Config, where + ": " + field + ": " + msg);
    }

    std::string field(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node find(const std::string &key) {
        allowed_.insert(key);
        if (!node_ || !node_.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
        const YAML::Node &map = node_;
        return map[key];
    }

    Section sub(const std::string &key) { return Section(find(key), field(key), file_); }

    void get(const std::string &key, double &out) {
        if (auto n = find(key)) out = parse_double(n, field(key));
    }
    void get(const std::string &key, bool &out) {
        if (auto n = find(key)) {
            const auto s = scalar(n, field(key));
            if (s == "true") out = true;
            else if (s == "false") out = false;
            else fail(n, field(key), "expected true or false, got '" + s + "'");
        }
    }
    void get(const std::string &key, std::string &out) {
        if (auto n = find(key)) out = scalar(n, field(key));
    }
    template <typename U>
        requires std::is_unsigned_v<U>
    void get(const std::string &key, U &out) {
        if (auto n = find(key)) out = static_cast<U>(parse_unsigned(n, field(key)));
    }
    template <typename U>
    void get(const std::string &key, std::vector<U> &out) {
        auto n = find(key);
        if (!n) return;
        if (!n.IsSequence()) fail(n, field(key), "expected a list");
        out.clear();
        for (std::size_t i = 0; i < n.size(); ++i) {
            const auto f = field(key) + "[" + std::to_string(i) + "]";
            if constexpr (std::is_same_v<U, std::string>) out.push_back(scalar(n[i], f));
            else out.push_back(static_cast<U>(parse_unsigned(n[i], f)));
        }
    }
    template <typename E>
    void get_enum(const std::string &key, E &out, const std::vector<std::pair<std::string, E>> &names) {
        auto n = find(key);
        if (!n) return;
        const auto s = scalar(n, field(key));
        std::string options;
        for (const auto &[name, value] : names) {
            if (s == name) {
                out = value;
                return;
            }
            options += (options.empty() ? "" : ", ") + name;
        }
        fail(n, field(key), "unknown value '" + s + "' (expected one of " + options + ")");
    }

    /// Rejects keys that were never asked for.
    void finish() const {
        if (!node_ || !node_.IsMap()) return;
        for (const auto &kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!allowed_.count(key)) fail(kv.first, field(key), "unknown field");
        }
    }

private:
    std::string scalar(const YAML::Node &n, const std::string &f) const {
        if (!n.IsScalar()) fail(n, f, "expected a scalar value");
        return n.Scalar();
    }
    double parse_double(const YAML::Node &n, const std::string &f) const {
        const auto s = scalar(n, f);
        double v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
            fail(n, f, "expected a number, got '" + s + "'");
        return v;
    }
    std::uint64_t parse_unsigned(const YAML::Node &n, const std::string &f) const {
        const auto s = scalar(n, f);
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            fail(n, f, "expected a non-negative integer, got '" + s + "'");
        return v;
    }

    YAML::Node node_;
    std::string path_, file_;
    std::set<std::string> allowed_;
};

inline AblationCell parse_cell(const std::string &name) {
    for (const auto &c : all_ablation_cells())
        if (c.name() == name) return c;
    throw Error(ErrorCode::Config, "unknown ablation cell '" + name + "'");
}

inline void read_document(Section &doc, RunConfig &cfg) {
    auto &ab = cfg.ablation;
    doc.get("seed", cfg.seed);
    doc.get("threads", cfg.threads);
    doc.get("out", cfg.out);

    auto grid = doc.sub("grid");
    grid.get("x_min", ab.grid.x_min);
    grid.get("x_max", ab.grid.x_max);
    grid.get("y_min", ab.grid.y_min);
    grid.get("y_max", ab.grid.y_max);
    grid.get("cell", ab.grid.cell);
    grid.finish();

    auto enc = doc.sub("encoder");
    auto &e = ab.encoder;
    enc.get_enum("mode", e.mode, {{"ray", CoordinateMode::ray_centric}, {"ego", CoordinateMode::ego_centric}});
    enc.get("offsets", e.offsets_enabled);
    enc.get_enum("si", e.si_mode, {{"off", SiMode::off}, {"bilinear", SiMode::bilinear}, {"deform", SiMode::deform}});
    enc.get("hidden", e.hidden);
    enc.get("image_channels", e.image_channels);
    enc.get("deform_heads", e.deform_heads);
    enc.get("deform_points", e.deform_points);
    enc.get("max_offset", e.limits.max_offset);
    enc.get("min_scale", e.limits.min_scale);
    enc.get("max_scale", e.limits.max_scale);
    enc.finish();

    auto scene = doc.sub("scene");
    auto &s = ab.scene;
    scene.get("boxes", s.num_boxes);
    scene.get_enum("yaw", s.yaw_mode, {{"radial", YawMode::radial}, {"uniform", YawMode::uniform}});
    scene.get("yaw_jitter", s.yaw_jitter);
    scene.get("x_min", s.x_min);
    scene.get("x_max", s.x_max);
    scene.get("y_min", s.y_min);
    scene.get("y_max", s.y_max);
    scene.get("min_range", s.min_range);
    scene.get("max_range", s.max_range);
    scene.get("dynamic_fraction", s.dynamic_fraction);
    scene.get("speed_min", s.speed_min);
    scene.get("speed_max", s.speed_max);
    scene.get("ground_z", s.ground_z);
    scene.get("clearance", s.clearance);
    scene.finish();

    auto sim = doc.sub("sim");
    auto &m = ab.sim;
    sim.get("frames", m.frames);
    sim.get("frame_dt", m.frame_dt);
    sim.get("points_per_box_min", m.points_per_box_min);
    sim.get("points_per_box_max", m.points_per_box_max);
    sim.get("sigma_r", m.sigma_r);
    sim.get("sigma_theta", m.sigma_theta);
    sim.get("sigma_phi", m.sigma_phi);
    sim.get("ego_speed", m.ego_speed);
    sim.get("ego_yaw_rate", m.ego_yaw_rate);
    sim.get("clutter_points", m.clutter_points);
    sim.get("clutter_height", m.clutter_height);
    sim.get("rcs_mean", m.rcs_mean);
    sim.get("rcs_std", m.rcs_std);
    sim.finish();
    m.ground_z = s.ground_z;

    auto image = doc.sub("image");
    image.get("size", ab.data.image_size);
    image.get("altitude", ab.data.camera_altitude);
    image.get("levels", ab.data.image.levels);
    image.get("classes", ab.data.image.classes);
    image.get("noise_sigma", ab.data.image.noise_sigma);
    image.finish();
    e.pyramid_channels.assign(ab.data.image.levels, ab.data.image.classes);

    auto data = doc.sub("data");
    data.get("scenes", cfg.scenes);
    data.get("train_scenes", ab.data.train_scenes);
    data.get("eval_scenes", ab.data.eval_scenes);
    data.finish();

    auto train = doc.sub("train");
    train.get("steps", ab.train.steps);
    train.get("batch_size", ab.train.batch_size);
    train.get("lr", ab.train.lr);
    train.get("log_every", ab.train.log_every);
    train.finish();

    auto splat = doc.sub("splat");
    splat.get("k_sigma", ab.splat.k_sigma);
    splat.get("w_min", ab.splat.w_min);
    splat.get("tile", ab.splat.tile);
    splat.finish();

    auto abl = doc.sub("ablation");
    abl.get("seeds", ab.seeds);
    std::vector<std::string> cells;
    abl.get("cells", cells);
    if (!cells.empty()) {
        ab.cells.clear();
        for (const auto &c : cells) ab.cells.push_back(parse_cell(c));
    }
    abl.finish();

    auto bench = doc.sub("bench");
    auto &b = cfg.bench;
    bench.get("runs", b.runs);
    bench.get("warmup", b.warmup);
    bench.get("warmup_seconds", b.warmup_seconds);
    bench.get("min_sample_seconds", b.min_sample_seconds);
    bench.get("grid_sizes", b.grid_sizes);
    bench.get("cell", b.cell);
    bench.get("scene_boxes", b.scene_boxes);
    bench.get("points_per_box", b.points_per_box);
    bench.get("reference_gaussians", b.reference_gaussians);
    bench.get("reference_grid", b.reference_grid);
    bench.get("reference_runs", b.reference_runs);
    bench.finish();

    doc.finish();
}

} // namespace detail

inline RunConfig parse_run_config(const std::string &text, const std::string &file = "<config>") {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException &e) {
        throw Error(ErrorCode::Config, file + ":" + std::to_string(e.mark.line + 1) + ":" +
                                           std::to_string(e.mark.column + 1) + ": " + e.msg);
    }
    RunConfig cfg;
    detail::Section doc(root, "", file);
    detail::read_document(doc, cfg);
    try {
        cfg.validate();
    } catch (const Error &e) {
        throw Error(ErrorCode::Config, file + ": " + e.what());
    }
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path &path) {
    const auto bytes = io::read_file(path);
    return parse_run_config(std::string(bytes.begin(), bytes.end()), path.string());
}

} // namespace rpge::cli
