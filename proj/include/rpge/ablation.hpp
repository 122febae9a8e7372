#pragma once

// Desk-scale ablation over {ego, ray} x {offsets off, on} x {SI off, bilinear,
// deform}: every cell is trained on the same synthetic scene pools for several
// seeds and scored by held-out reconstruction loss.

#include "rpge/synthlab.hpp"
#include "rpge/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

namespace rpge {

struct AblationCell {
    CoordinateMode mode = CoordinateMode::ray_centric;
    bool offsets = true;
    SiMode si = SiMode::off;

    std::string name() const {
        return to_string(mode) + (offsets ? "+off" : "") + (si == SiMode::off ? "" : "+si_" + to_string(si));
    }
    friend bool operator==(const AblationCell &, const AblationCell &) = default;
};

inline std::vector<AblationCell> all_ablation_cells() {
    std::vector<AblationCell> cells;
    for (auto mode : {CoordinateMode::ego_centric, CoordinateMode::ray_centric})
        for (bool off : {false, true})
            for (auto si : {SiMode::off, SiMode::bilinear, SiMode::deform}) cells.push_back({mode, off, si});
    return cells;
}

struct DataOptions {
    std::size_t train_scenes = 256;
    std::size_t eval_scenes = 64;
    std::size_t image_size = 64; // square overhead feature image
    double camera_altitude = 50;
    FeatureImageOptions image{};
};

struct AblationConfig {
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<AblationCell> cells = all_ablation_cells();
    BevGridSpec grid{-25.6, 25.6, -25.6, 25.6, 0.4, kTargetChannels};
    SceneSpec scene{};
    SimConfig sim{};
    DataOptions data{};
    EncoderConfig encoder = [] {
        EncoderConfig e;
        e.feature_dim = kTargetChannels;
        e.hidden = {32, 32};
        e.image_channels = 4;
        e.pyramid_channels = {2, 2, 2};
        return e;
    }();
    TrainOptions train{};
    SplatOptions splat{};
    std::size_t threads = 1; // concurrent (cell, seed) jobs

    void validate() const {
        require(!seeds.empty() && !cells.empty(), ErrorCode::Config, "ablation needs seeds and cells");
        require(grid.channels == kTargetChannels, ErrorCode::Config, "ablation grid must have 3 target channels");
        require(encoder.feature_dim == kTargetChannels, ErrorCode::Config, "feature_dim must equal target channels");
        require(encoder.pyramid_channels.size() == data.image.levels, ErrorCode::Config,
                "pyramid channel list must have one entry per image level");
        for (auto c : encoder.pyramid_channels)
            require(c == data.image.classes, ErrorCode::Config, "each pyramid level carries one channel per class");
        require(data.train_scenes > 0 && data.eval_scenes > 0, ErrorCode::Config, "scene pools must be non-empty");
        grid.validate();
        scene.validate();
        sim.validate();
        encoder.validate();
    }
};

struct Dataset {
    std::vector<Sample> train, eval;
};

/// Scene pools for one seed; camera images are attached to every sample.
inline Dataset make_dataset(const AblationConfig &cfg, std::uint64_t seed) {
    Rng rng(0x9E3779B97F4A7C15ull ^ (seed * 0x100000001B3ull));
    SimConfig sim = cfg.sim;
    sim.x_min = cfg.grid.x_min;
    sim.x_max = cfg.grid.x_max;
    sim.y_min = cfg.grid.y_min;
    sim.y_max = cfg.grid.y_max;
    const auto cam = overhead_camera(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.y_min, cfg.grid.y_max,
                                     cfg.data.camera_altitude, cfg.data.image_size, cfg.data.image_size);
    auto make = [&](std::size_t n) {
        std::vector<Sample> out;
        for (std::size_t i = 0; i < n; ++i) {
            Sample s;
            const auto boxes = sample_scene(rng, cfg.scene);
            s.points = simulate_radar(boxes, sim, rng);
            s.target = render_target<double>(boxes, cfg.grid);
            auto [pyr, proj] = make_feature_image(boxes, cam, rng, cfg.data.image);
            s.image = ImageInputs{std::move(pyr), proj};
            out.push_back(std::move(s));
        }
        return out;
    };
    Dataset d;
    d.train = make(cfg.data.train_scenes);
    d.eval = make(cfg.data.eval_scenes);
    return d;
}

struct SeedResult {
    std::uint64_t seed = 0;
    double initial_eval_loss = 0, final_eval_loss = 0, final_train_loss = 0;
    // timing
    double wall_seconds = 0, encode_points_per_sec = 0, splat_gaussians_per_sec = 0;
};

struct CellResult {
    AblationCell cell;
    std::vector<SeedResult> seeds;

    std::vector<double> final_losses() const {
        std::vector<double> v;
        for (const auto &s : seeds) v.push_back(s.final_eval_loss);
        return v;
    }
    double median_final() const { return median(final_losses()); }
    double mean_final() const {
        const auto v = final_losses();
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    }

    static double median(std::vector<double> v) {
        if (v.empty()) return 0;
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
};

inline EncoderConfig cell_encoder(const AblationConfig &cfg, const AblationCell &cell) {
    EncoderConfig e = cfg.encoder;
    e.mode = cell.mode;
    e.offsets_enabled = cell.offsets;
    e.si_mode = cell.si;
    return e;
}

inline SeedResult run_ablation_job(const AblationConfig &cfg, const AblationCell &cell, std::uint64_t seed,
                                   const Dataset &data) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const EncoderConfig enc = cell_encoder(cfg, cell);
    ParameterSet params = init_parameters(enc, seed);
    AdamState state = AdamState::for_parameters(params, cfg.train.lr);
    SeedResult r;
    r.seed = seed;
    r.initial_eval_loss = mean_loss(params, data.eval, enc, cfg.grid, cfg.splat);
    TrainOptions topt = cfg.train;
    topt.threads = 1;
    topt.log_every = std::max<std::size_t>(topt.steps, 1);
    train(params, state, data.train, enc, cfg.grid, topt, cfg.splat);
    r.final_train_loss = mean_loss(params, data.train, enc, cfg.grid, cfg.splat);

    // held-out loss, timing encode and splat separately
    double encode_s = 0, splat_s = 0, loss_sum = 0;
    std::size_t n_points = 0, n_gauss = 0;
    for (const auto &s : data.eval) {
        const auto a = clock::now();
        const auto gs = encode_gaussians(params, enc, s.points, s.frame());
        const auto b = clock::now();
        const auto map = splat<double>(std::span<const EgoGaussian>(gs), cfg.grid, cfg.splat);
        const auto c = clock::now();
        encode_s += std::chrono::duration<double>(b - a).count();
        splat_s += std::chrono::duration<double>(c - b).count();
        n_points += s.points.size();
        n_gauss += gs.size();
        double l = 0;
        for (std::size_t i = 0; i < map.data().size(); ++i) {
            const double d = map.data()[i] - s.target.data()[i];
            l += d * d;
        }
        loss_sum += l / static_cast<double>(map.data().size());
    }
    r.final_eval_loss = loss_sum / static_cast<double>(data.eval.size());
    r.encode_points_per_sec = encode_s > 0 ? static_cast<double>(n_points) / encode_s : 0;
    r.splat_gaussians_per_sec = splat_s > 0 ? static_cast<double>(n_gauss) / splat_s : 0;
    r.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return r;
}

struct AblationOrdering {
    std::string name, better, worse;
    double better_median = 0, worse_median = 0;
    bool holds = false;
};

struct AblationReport {
    std::vector<CellResult> cells;
    std::vector<AblationOrdering> orderings;
    double wall_seconds = 0;

    const CellResult *find(const AblationCell &c) const {
        for (const auto &r : cells)
            if (r.cell == c) return &r;
        return nullptr;
    }
    bool all_orderings_hold() const {
        return !orderings.empty() &&
               std::all_of(orderings.begin(), orderings.end(), [](const auto &o) { return o.holds; });
    }
};

/// The expected directions: ray < ego (offsets and SI off), offsets on < off
/// (ray, SI off), and SI bilinear / deform < SI off (ray, offsets on).
inline std::vector<AblationOrdering> ablation_orderings(const AblationReport &report) {
    using CM = CoordinateMode;
    const AblationCell a{CM::ego_centric, false, SiMode::off}, b{CM::ray_centric, false, SiMode::off},
        c{CM::ray_centric, true, SiMode::off}, d{CM::ray_centric, true, SiMode::bilinear},
        e{CM::ray_centric, true, SiMode::deform};
    std::vector<AblationOrdering> out;
    auto cmp = [&](const std::string &name, const AblationCell &better, const AblationCell &worse) {
        const auto *rb = report.find(better), *rw = report.find(worse);
        if (!rb || !rw) return;
        AblationOrdering o;
        o.name = name;
        o.better = better.name();
        o.worse = worse.name();
        o.better_median = rb->median_final();
        o.worse_median = rw->median_final();
        o.holds = o.better_median < o.worse_median;
        out.push_back(o);
    };
    cmp("ray_vs_ego", b, a);
    cmp("offsets", c, b);
    cmp("si_bilinear", d, c);
    cmp("si_deform", e, c);
    return out;
}

inline AblationReport run_ablation(const AblationConfig &cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t ns = cfg.seeds.size();
    std::vector<SeedResult> results(cfg.cells.size() * ns);
    for (std::size_t k = 0; k < ns; ++k) {
        const Dataset data = make_dataset(cfg, cfg.seeds[k]);
        parallel_for(cfg.cells.size(), cfg.threads, [&](std::size_t c) {
            results[c * ns + k] = run_ablation_job(cfg, cfg.cells[c], cfg.seeds[k], data);
        });
    }

    AblationReport report;
    for (std::size_t c = 0; c < cfg.cells.size(); ++c) {
        CellResult cr;
        cr.cell = cfg.cells[c];
        cr.seeds.assign(results.begin() + static_cast<std::ptrdiff_t>(c * ns),
                        results.begin() + static_cast<std::ptrdiff_t>((c + 1) * ns));
        report.cells.push_back(std::move(cr));
    }
    report.orderings = ablation_orderings(report);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

/// Deterministic results live under "cells" and "orderings"; everything
/// clock-dependent is under "timing".
inline nlohmann::ordered_json ablation_report_json(const AblationReport &report, const AblationConfig &cfg) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["config"] = {{"seeds", cfg.seeds},
                   {"steps", cfg.train.steps},
                   {"batch_size", cfg.train.batch_size},
                   {"lr", cfg.train.lr},
                   {"train_scenes", cfg.data.train_scenes},
                   {"eval_scenes", cfg.data.eval_scenes},
                   {"grid", {{"width", cfg.grid.width()}, {"height", cfg.grid.height()}, {"cell", cfg.grid.cell}}},
                   {"frames", cfg.sim.frames}};
    ordered_json cells = ordered_json::array(), timing = ordered_json::array();
    for (const auto &c : report.cells) {
        ordered_json per_seed = ordered_json::array(), t_seed = ordered_json::array();
        for (const auto &s : c.seeds) {
            per_seed.push_back({{"seed", s.seed},
                                {"initial_eval_loss", s.initial_eval_loss},
                                {"final_train_loss", s.final_train_loss},
                                {"final_eval_loss", s.final_eval_loss}});
            t_seed.push_back({{"seed", s.seed},
                              {"wall_seconds", s.wall_seconds},
                              {"encode_points_per_sec", s.encode_points_per_sec},
                              {"splat_gaussians_per_sec", s.splat_gaussians_per_sec}});
        }
        cells.push_back({{"cell", c.cell.name()},
                         {"mode", to_string(c.cell.mode)},
                         {"offsets", c.cell.offsets},
                         {"si", to_string(c.cell.si)},
                         {"mean_final_loss", c.mean_final()},
                         {"median_final_loss", c.median_final()},
                         {"seeds", per_seed}});
        timing.push_back({{"cell", c.cell.name()}, {"seeds", t_seed}});
    }
    j["cells"] = cells;
    ordered_json ord = ordered_json::array();
    for (const auto &o : report.orderings)
        ord.push_back({{"name", o.name},
                       {"better", o.better},
                       {"worse", o.worse},
                       {"better_median", o.better_median},
                       {"worse_median", o.worse_median},
                       {"holds", o.holds}});
    j["orderings"] = ord;
    j["timing"] = {{"wall_seconds", report.wall_seconds}, {"cells", timing}};
    return j;
}

} // namespace rpge
