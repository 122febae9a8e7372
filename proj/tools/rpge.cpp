#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace rpge;
using namespace rpge::cli;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    std::string out;
};

void add_common(CLI::App *cmd, Common &c, bool out_required) {
    cmd->add_option("--config", c.config, "YAML run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
    cmd->add_option("--threads", c.threads, "worker threads (overrides RPGE_THREADS)");
    auto *o = cmd->add_option("--out", c.out, "output path");
    if (out_required) o->required();
}

RunConfig load(const Common &c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.out = c.out;
    return cfg;
}

void print_json(const nlohmann::ordered_json &j, const std::string &out) {
    const auto text = j.dump(2) + "\n";
    if (out.empty()) std::cout << text;
    else write_text(out, text);
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Ray-centric Gaussian BEV encoder toolkit"};
    app.require_subcommand(1);

    Common synth_c, train_c, encode_c, selftest_c, bench_c, render_c, ablate_c;

    auto *synth = app.add_subcommand("synth", "generate a synthetic dataset with a hashed manifest");
    add_common(synth, synth_c, true);
    std::optional<std::size_t> scenes;
    synth->add_option("--scenes", scenes, "number of scenes (overrides data.scenes)");

    auto *train_cmd = app.add_subcommand("train", "train the encoder on a synthetic dataset");
    add_common(train_cmd, train_c, true);
    std::string data_dir, resume;
    std::optional<std::size_t> steps;
    train_cmd->add_option("--data", data_dir, "dataset directory with manifest.json")->required();
    train_cmd->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
    train_cmd->add_option("--steps", steps, "total optimizer steps (overrides train.steps)");

    auto *encode_cmd = app.add_subcommand("encode", "encode a point file into a BEV feature map");
    add_common(encode_cmd, encode_c, true);
    std::string checkpoint, points_file, pyramid_file;
    encode_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
    encode_cmd->add_option("--points", points_file, "radar point file")->required()->check(CLI::ExistingFile);
    encode_cmd->add_option("--pyramid", pyramid_file, "feature pyramid file")->check(CLI::ExistingFile);

    auto *selftest = app.add_subcommand("selftest", "run the built-in property checks");
    add_common(selftest, selftest_c, false);
    bool mutant = false;
    selftest->add_flag("--mutant", mutant, "use the row-3 sign-error frame formula (must fail)");

    auto *bench = app.add_subcommand("bench", "measure encode, splat and pillar throughput");
    add_common(bench, bench_c, false);
    std::optional<std::size_t> runs;
    bench->add_option("--runs", runs, "timed runs per measurement (overrides bench.runs)");

    auto *render = app.add_subcommand("render", "render a feature map to PGM/PPM images");
    add_common(render, render_c, true);
    std::string map_file;
    render->add_option("map", map_file, "feature map file")->required()->check(CLI::ExistingFile);

    auto *ablate = app.add_subcommand("ablate", "run the ablation grid and report per-seed losses");
    add_common(ablate, ablate_c, false);
    std::optional<std::size_t> ablate_steps;
    ablate->add_option("--steps", ablate_steps, "optimizer steps per job (overrides train.steps)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        if (*synth) {
            auto cfg = load(synth_c);
            if (scenes) cfg.scenes = *scenes;
            cfg.validate();
            const auto m = cmd_synth(cfg, cfg.seed, synth_c.out);
            std::cout << "wrote " << m.scenes.size() << " scenes to " << synth_c.out << "\n";
        } else if (*train_cmd) {
            auto cfg = load(train_c);
            if (steps) cfg.ablation.train.steps = *steps;
            const auto r = cmd_train(cfg, cfg.seed, data_dir, train_c.out, resume, resolve_threads(train_c.threads, cfg));
            nlohmann::ordered_json j{{"start_step", r.start_step},
                                     {"end_step", r.end_step},
                                     {"checkpoint", r.checkpoint.string()},
                                     {"loss_curve", r.loss_curve.string()}};
            if (!r.curve.empty()) {
                j["first_loss"] = r.curve.front().loss;
                j["last_loss"] = r.curve.back().loss;
            }
            std::cout << j.dump(2) << "\n";
        } else if (*encode_cmd) {
            const auto cfg = load(encode_c);
            const auto map = cmd_encode(cfg, checkpoint, points_file, pyramid_file, resolve_threads(encode_c.threads, cfg));
            write_feature_map(encode_c.out, map);
            std::cout << "wrote " << encode_c.out << "\n";
        } else if (*selftest) {
            const auto cfg = load(selftest_c);
            SelftestOptions opt;
            opt.formula = mutant ? FrameFormula::mutant_row3_sign : FrameFormula::exact;
            opt.seed = cfg.seed;
            const auto checks = run_selftest(opt);
            std::cout << selftest_table(checks);
            const auto j = selftest_json(checks, mutant);
            if (!selftest_c.out.empty()) write_text(selftest_c.out, j.dump(2) + "\n");
            if (!j["passed"].get<bool>()) {
                std::cout << "selftest FAILED\n";
                return kSelftestFailure;
            }
            std::cout << "selftest passed\n";
        } else if (*bench) {
            auto cfg = load(bench_c);
            if (runs) cfg.bench.runs = *runs;
            cfg.bench.threads = resolve_threads(bench_c.threads, cfg);
            cfg.bench.seed = cfg.seed;
            const auto report = run_bench(cfg.encoder(), cfg.bench);
            print_json(bench_report_json(report, cfg.bench), bench_c.out);
        } else if (*render) {
            const auto map = read_feature_map(map_file);
            const auto out = render_feature_map(map, render_c.out);
            for (const auto &p : out.channel_files) std::cout << "wrote " << p.string() << "\n";
            std::cout << "wrote " << out.composite.string() << "\n";
        } else if (*ablate) {
            auto cfg = load(ablate_c);
            if (ablate_steps) cfg.ablation.train.steps = *ablate_steps;
            cfg.ablation.threads = resolve_threads(ablate_c.threads, cfg);
            const auto report = run_ablation(cfg.ablation);
            std::cout << ablation_summary(report);
            if (!ablate_c.out.empty()) write_text(ablate_c.out, ablation_report_json(report, cfg.ablation).dump(2) + "\n");
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}
