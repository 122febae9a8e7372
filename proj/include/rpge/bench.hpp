#pragma once

// Throughput measurement for encode (points/s), splat (Gaussians/s) and the
// pillar_scatter baseline (points/s), plus the tiled splat against the dense
// reference. Every sample times enough back-to-back calls to last at least
// `min_sample_seconds`; the reported time per call is the median sample.

#include "rpge/ablation.hpp"
#include "rpge/selftest.hpp"

#include <json.hpp>

#include <chrono>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace rpge {

struct BenchOptions {
    std::size_t runs = 20;
    std::size_t warmup = 3;
    double warmup_seconds = 0.2;
    double min_sample_seconds = 0.05;
    std::vector<std::size_t> grid_sizes{128, 512}; // cells per side, same cell size
    double cell = 0.4;
    std::size_t scene_boxes = 20;
    std::size_t points_per_box = 30; // per frame
    std::size_t reference_gaussians = 10000;
    std::size_t reference_grid = 320;
    std::size_t reference_runs = 1;
    std::size_t threads = 1;
    std::uint64_t seed = 0;

    void validate() const {
        require(runs >= 1 && reference_runs >= 1, ErrorCode::Config, "bench needs at least one run");
        require(!grid_sizes.empty(), ErrorCode::Config, "bench needs at least one grid size");
        for (auto g : grid_sizes) require(g > 0, ErrorCode::Config, "grid sizes must be positive");
        require(cell > 0 && reference_grid > 0, ErrorCode::Config, "bench grid must be non-empty");
    }
};

struct Timing {
    double median_s = 0, min_s = 0, max_s = 0; // per call
    std::size_t calls_per_sample = 1;
    std::size_t samples = 0;
};

// A timed workload. Calibration runs the warmup and picks a batch size;
// sampling is then interleaved across workloads so that a slow spell of the
// host lands on a few samples of every workload rather than on all samples of
// one.
struct TimedJob {
    std::function<void()> fn;
    Timing *out = nullptr;
    std::vector<double> samples;
};

inline void calibrate(TimedJob &job, std::size_t warmup, double warmup_seconds, double min_sample_seconds) {
    using clock = std::chrono::steady_clock;
    const auto w0 = clock::now();
    for (std::size_t i = 0; i < warmup || std::chrono::duration<double>(clock::now() - w0).count() < warmup_seconds; ++i)
        job.fn();
    job.out->calls_per_sample = 1;
    for (;;) {
        const auto a = clock::now();
        for (std::size_t i = 0; i < job.out->calls_per_sample; ++i) job.fn();
        const double s = std::chrono::duration<double>(clock::now() - a).count();
        if (s >= min_sample_seconds || job.out->calls_per_sample >= (std::size_t{1} << 20)) break;
        job.out->calls_per_sample *= 2;
    }
}

inline void sample_interleaved(std::vector<TimedJob> &jobs, std::size_t runs) {
    using clock = std::chrono::steady_clock;
    for (std::size_t r = 0; r < runs; ++r)
        for (auto &job : jobs) {
            const std::size_t n = job.out->calls_per_sample;
            const auto a = clock::now();
            for (std::size_t i = 0; i < n; ++i) job.fn();
            job.samples.push_back(std::chrono::duration<double>(clock::now() - a).count() / static_cast<double>(n));
        }
    for (auto &job : jobs) {
        auto &v = job.samples;
        std::sort(v.begin(), v.end());
        job.out->samples = v.size();
        job.out->median_s = CellResult::median(v);
        job.out->min_s = v.front();
        job.out->max_s = v.back();
    }
}

template <typename Fn>
Timing measure(Fn &&fn, std::size_t runs, std::size_t warmup, double min_sample_seconds,
               double warmup_seconds = 0) {
    Timing t;
    std::vector<TimedJob> jobs{{[&] { fn(); }, &t, {}}};
    calibrate(jobs[0], warmup, warmup_seconds, min_sample_seconds);
    sample_interleaved(jobs, runs);
    return t;
}

struct BenchCase {
    std::string name;
    std::size_t grid = 0, points = 0, gaussians = 0;
    Timing encode, splat, pillar;

    double encode_points_per_sec() const { return encode.median_s > 0 ? points / encode.median_s : 0; }
    double splat_gaussians_per_sec() const { return splat.median_s > 0 ? gaussians / splat.median_s : 0; }
    double pillar_points_per_sec() const { return pillar.median_s > 0 ? points / pillar.median_s : 0; }
};

struct ReferenceComparison {
    std::size_t gaussians = 0, grid = 0;
    Timing splat, dense;
    double max_abs_diff = 0;             // at the timed settings, includes the k-sigma truncation
    double equivalence_max_abs_diff = 0; // footprint wide enough that only w_min applies
    double speedup() const { return splat.median_s > 0 ? dense.median_s / splat.median_s : 0; }
};

struct BenchReport {
    std::vector<BenchCase> cases;
    ReferenceComparison reference;
    std::size_t threads = 1;
};

inline BevGridSpec bench_grid(std::size_t cells, double cell, std::size_t channels) {
    const double half = 0.5 * static_cast<double>(cells) * cell;
    return {-half, half, -half, half, cell, channels};
}

namespace detail {

struct CaseData {
    std::vector<RadarPoint> points;
    std::vector<Bev2DGaussian> bev;
    std::vector<PointFeature> pillars;
    BevGridSpec grid;
};

} // namespace detail

/// Cases: the synthetic scene on every grid size, then an empty scene on the
/// first grid size. The scene lies inside the smallest grid, so the splat work
/// is the same for every size.
inline BenchReport run_bench(const EncoderConfig &enc, const BenchOptions &opt) {
    opt.validate();
    const ParameterSet params = init_parameters(enc, opt.seed);
    const std::size_t smallest = *std::min_element(opt.grid_sizes.begin(), opt.grid_sizes.end());
    const auto scene_grid = bench_grid(smallest, opt.cell, enc.feature_dim);

    Rng rng(opt.seed);
    SceneSpec spec;
    spec.num_boxes = opt.scene_boxes;
    const double reach = 0.5 * static_cast<double>(smallest) * opt.cell;
    spec.x_min = spec.y_min = -reach + 3;
    spec.x_max = spec.y_max = reach - 3;
    spec.min_range = std::min(5.0, 0.2 * reach);
    spec.max_range = reach - 3;
    SimConfig sim;
    sim.points_per_box_min = sim.points_per_box_max = opt.points_per_box;
    sim.x_min = sim.y_min = -reach;
    sim.x_max = sim.y_max = reach;
    sim.clutter_points = 10 * opt.scene_boxes;
    const auto boxes = sample_scene(rng, spec);
    const auto points = simulate_radar(boxes, sim, rng);
    std::optional<ImageInputs> image;
    if (enc.si_mode != SiMode::off) {
        FeatureImageOptions fio;
        fio.levels = enc.pyramid_channels.size();
        fio.classes = enc.pyramid_channels.front();
        const std::size_t size = 64;
        auto [pyr, proj] = make_feature_image(
            boxes, overhead_camera(scene_grid.x_min, scene_grid.x_max, scene_grid.y_min, scene_grid.y_max, 50, size, size),
            rng, fio);
        image = ImageInputs{std::move(pyr), proj};
    }
    const FrameInputs frame{Mat3::identity(), image ? &*image : nullptr};

    BenchReport report;
    report.threads = opt.threads;
    SplatOptions sopt;
    sopt.threads = opt.threads;

    std::vector<std::pair<std::string, detail::CaseData>> data;
    for (auto g : opt.grid_sizes) data.push_back({"scene", {points, {}, {}, bench_grid(g, opt.cell, enc.feature_dim)}});
    data.push_back({"empty", {{}, {}, {}, scene_grid}});
    report.cases.resize(data.size());

    std::vector<TimedJob> jobs;
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto &[name, d] = data[i];
        auto &bc = report.cases[i];
        const auto gaussians = encode_gaussians(params, enc, d.points, frame);
        d.bev = marginalize_all(gaussians);
        for (std::size_t k = 0; k < gaussians.size(); ++k) d.pillars.push_back({d.points[k].position, gaussians[k].feature});
        bc.name = name;
        bc.grid = d.grid.width();
        bc.points = d.points.size();
        bc.gaussians = gaussians.size();
        jobs.push_back({[&] { encode_gaussians(params, enc, d.points, frame); }, &bc.encode, {}});
        jobs.push_back({[&] { splat<float>(std::span<const Bev2DGaussian>(d.bev), d.grid, sopt); }, &bc.splat, {}});
        jobs.push_back(
            {[&] { pillar_scatter<float>(std::span<const PointFeature>(d.pillars), d.grid); }, &bc.pillar, {}});
    }

    auto &rc = report.reference;
    const auto ref_grid = bench_grid(opt.reference_grid, opt.cell, enc.feature_dim);
    std::mt19937_64 ref_rng(opt.seed + 99);
    const auto ref = detail::random_bev_gaussians(ref_rng, opt.reference_gaussians, ref_grid, 0, 0.2, 2.0);
    const std::span<const Bev2DGaussian> ref_span(ref);
    rc.gaussians = ref.size();
    rc.grid = opt.reference_grid;
    jobs.push_back({[&] { splat<float>(ref_span, ref_grid, sopt); }, &rc.splat, {}});

    for (auto &job : jobs) calibrate(job, opt.warmup, opt.warmup_seconds, opt.min_sample_seconds);
    sample_interleaved(jobs, opt.runs);

    rc.dense = measure([&] { return splat_reference<float>(ref_span, ref_grid, sopt); }, opt.reference_runs, 1, 0);
    rc.max_abs_diff =
        max_abs_diff(splat<double>(ref_span, ref_grid, sopt), splat_reference<double>(ref_span, ref_grid, sopt));
    auto wide = sopt;
    wide.k_sigma = 4.3;
    rc.equivalence_max_abs_diff =
        max_abs_diff(splat<double>(ref_span, ref_grid, wide), splat_reference<double>(ref_span, ref_grid, wide));
    return report;
}

inline nlohmann::ordered_json timing_json(const Timing &t) {
    return {{"median_s", t.median_s}, {"min_s", t.min_s}, {"max_s", t.max_s},
            {"calls_per_sample", t.calls_per_sample}, {"samples", t.samples}};
}

inline nlohmann::ordered_json bench_report_json(const BenchReport &r, const BenchOptions &opt) {
    nlohmann::ordered_json j;
    j["runs"] = opt.runs;
    j["warmup"] = opt.warmup;
    j["warmup_seconds"] = opt.warmup_seconds;
    j["threads"] = r.threads;
    auto cases = nlohmann::ordered_json::array();
    for (const auto &c : r.cases)
        cases.push_back({{"name", c.name},
                         {"grid", c.grid},
                         {"points", c.points},
                         {"gaussians", c.gaussians},
                         {"encode_points_per_sec", c.encode_points_per_sec()},
                         {"splat_gaussians_per_sec", c.splat_gaussians_per_sec()},
                         {"pillar_points_per_sec", c.pillar_points_per_sec()},
                         {"encode", timing_json(c.encode)},
                         {"splat", timing_json(c.splat)},
                         {"pillar", timing_json(c.pillar)}});
    j["cases"] = cases;
    j["reference"] = {{"gaussians", r.reference.gaussians},
                      {"grid", r.reference.grid},
                      {"splat", timing_json(r.reference.splat)},
                      {"dense", timing_json(r.reference.dense)},
                      {"speedup", r.reference.speedup()},
                      {"max_abs_diff", r.reference.max_abs_diff},
                      {"equivalence_max_abs_diff", r.reference.equivalence_max_abs_diff}};
    return j;
}

} // namespace rpge
