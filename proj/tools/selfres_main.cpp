// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen | run | eval | bench | dump-weights | selftest.
// Exit codes: 0 ok, 2 missing input, 3 bad config, 4 malformed data.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "selfres/experiment.hpp"
#include "selfres/selftest.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
    std::string preset;
    std::string mode;
    std::string schedule;
    std::optional<std::size_t> r;
    std::optional<std::size_t> ns;
    std::optional<std::size_t> m;
    std::string score;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file; flags override its values");
    cmd->add_option("--seed", flags.seed, "experiment seed");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--data", flags.data, "dataset directory");
    cmd->add_option("--preset", flags.preset, "generator preset (table1-grid, smoke)");
    cmd->add_option("--mode", flags.mode, "sampler mode: linear | selfres")
        ->check(CLI::IsMember({"linear", "selfres"}));
    cmd->add_option("--schedule", flags.schedule, "schedule mode: regular | smooth")
        ->check(CLI::IsMember({"regular", "smooth"}));
    cmd->add_option("--r", flags.r, "first self-reflective layer index");
    cmd->add_option("--ns", flags.ns, "number of segments");
    cmd->add_option("--m", flags.m, "smooth schedule step count");
    cmd->add_option("--score", flags.score, "token scoring: attention | cosine")
        ->check(CLI::IsMember({"attention", "cosine"}));
}

// File config first, then flag overrides.
selfres::ExperimentConfig build_config(const CommonFlags& flags) {
    selfres::ExperimentConfig cfg;
    if (!flags.config_path.empty()) {
        cfg = selfres::load_experiment_config(flags.config_path);
    }
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.model.seed = *flags.seed;
    }
    if (!flags.out.empty()) cfg.out = flags.out;
    if (!flags.data.empty()) cfg.dataset = flags.data;
    if (!flags.preset.empty()) cfg.gen.preset = flags.preset;
    if (!flags.mode.empty()) cfg.mode = flags.mode;
    if (!flags.schedule.empty()) {
        cfg.schedule.mode = flags.schedule == "regular" ? selfres::ScheduleMode::regular
                                                        : selfres::ScheduleMode::smooth;
    }
    if (flags.r) cfg.schedule.r = *flags.r;
    if (flags.ns) cfg.schedule.ns = *flags.ns;
    if (flags.m) cfg.schedule.m = *flags.m;
    if (!flags.score.empty()) {
        cfg.score = flags.score == "attention" ? selfres::ScoreMode::attention
                                               : selfres::ScoreMode::cosine;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic toy LVLM engine: self-reflective token sampling vs linear "
                 "frame sampling"};
    app.require_subcommand(1);

    CommonFlags gen_flags, run_flags, eval_flags, bench_flags, dump_flags;
    std::string predictions_path;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    add_common_flags(gen, gen_flags);

    CLI::App* run = app.add_subcommand("run", "classify a dataset with one sampler");
    add_common_flags(run, run_flags);

    CLI::App* eval = app.add_subcommand("eval", "score a predictions CSV");
    eval->add_option("predictions", predictions_path, "predictions CSV path")->required();
    add_common_flags(eval, eval_flags);

    CLI::App* bench = app.add_subcommand("bench", "compare samplers over a schedule grid");
    add_common_flags(bench, bench_flags);

    CLI::App* dump = app.add_subcommand("dump-weights", "write every weight tensor");
    add_common_flags(dump, dump_flags);

    app.add_subcommand("selftest", "run the built-in invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) return selfres::cmd_gen(build_config(gen_flags), std::cout, std::cerr);
        if (run->parsed()) return selfres::cmd_run(build_config(run_flags), std::cout, std::cerr);
        if (eval->parsed()) {
            const selfres::ExperimentConfig cfg = build_config(eval_flags);
            return selfres::cmd_eval(predictions_path, cfg.out, std::cout, std::cerr);
        }
        if (bench->parsed()) {
            return selfres::cmd_bench(build_config(bench_flags), std::cout, std::cerr);
        }
        if (dump->parsed()) {
            return selfres::cmd_dump_weights(build_config(dump_flags), std::cout, std::cerr);
        }
        return selfres::run_selftest(std::cout);
    } catch (const selfres::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return selfres::kExitBadConfig;
    } catch (const selfres::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return selfres::kExitMalformedData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
