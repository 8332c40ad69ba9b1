// Copyright (C) 2026 The selfres authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfres/errors.hpp"
#include "selfres/evalkit.hpp"
#include "selfres/model.hpp"
#include "selfres/sampler.hpp"
#include "selfres/segment.hpp"
#include "selfres/synth.hpp"

namespace selfres {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitMissingInput = 2;
inline constexpr int kExitBadConfig = 3;
inline constexpr int kExitMalformedData = 4;

struct ScheduleConfig {
    ScheduleMode mode = ScheduleMode::smooth;
    std::size_t r = 3;
    std::size_t ns = 5;
    std::size_t m = 3;
};

struct GenConfig {
    std::string preset;  // "", "table1-grid", or "smoke"
    std::size_t n_videos = 20;
    std::size_t total_frames = 160;
    std::size_t window_count = 2;
    std::size_t window_len = 8;
    float plant_patch_fraction = 1.0f;
    float noise_sigma = 0.5f;
};

// Everything one experiment needs: model overrides, sampler mode, schedule,
// paths, and the generator recipe. Flags override file values; the effective
// config is echoed into the output directory.
struct ExperimentConfig {
    ModelConfig model;
    Prompts prompts;
    std::string mode = "selfres";  // "linear" | "selfres"
    ScheduleConfig schedule;
    ScoreMode score = ScoreMode::attention;
    std::filesystem::path dataset;
    std::filesystem::path out;
    std::uint64_t seed = 7;  // experiment seed: drives generation
    GenConfig gen;
    std::vector<ScheduleConfig> bench_grid;  // empty = default grid
};

// ---------------------------------------------------------------------------
// JSON config file. Unknown keys are rejected so typos fail loudly.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                       const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("config: unknown key '" + key + "' in " + where);
        }
    }
}

inline ScheduleMode parse_schedule_mode(const std::string& s) {
    if (s == "regular") return ScheduleMode::regular;
    if (s == "smooth") return ScheduleMode::smooth;
    throw ConfigError("config: schedule mode must be 'regular' or 'smooth', got '" + s + "'");
}

inline ScoreMode parse_score_mode(const std::string& s) {
    if (s == "attention") return ScoreMode::attention;
    if (s == "cosine") return ScoreMode::cosine;
    throw ConfigError("config: score must be 'attention' or 'cosine', got '" + s + "'");
}

inline ScheduleConfig parse_schedule(const nlohmann::json& obj, const std::string& where) {
    check_keys(obj, {"mode", "r", "ns", "m"}, where);
    ScheduleConfig sc;
    if (obj.contains("mode")) sc.mode = parse_schedule_mode(obj.at("mode").get<std::string>());
    if (obj.contains("r")) sc.r = obj.at("r").get<std::size_t>();
    if (obj.contains("ns")) sc.ns = obj.at("ns").get<std::size_t>();
    if (obj.contains("m")) sc.m = obj.at("m").get<std::size_t>();
    return sc;
}

}  // namespace detail

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }

    ExperimentConfig cfg;
    detail::check_keys(j, {"model", "prompts", "mode", "schedule", "score", "dataset", "out",
                           "seed", "gen", "bench"},
                       "top level");
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::check_keys(m, {"d", "heads", "layers", "d_ff", "frames_per_segment",
                               "patches_per_frame", "patch_dim", "init_epsilon", "ln_eps",
                               "seed"},
                           "model");
        if (m.contains("d")) cfg.model.d = m.at("d").get<std::size_t>();
        if (m.contains("heads")) cfg.model.heads = m.at("heads").get<std::size_t>();
        if (m.contains("layers")) cfg.model.layers = m.at("layers").get<std::size_t>();
        if (m.contains("d_ff")) cfg.model.d_ff = m.at("d_ff").get<std::size_t>();
        if (m.contains("frames_per_segment"))
            cfg.model.frames_per_segment = m.at("frames_per_segment").get<std::size_t>();
        if (m.contains("patches_per_frame"))
            cfg.model.patches_per_frame = m.at("patches_per_frame").get<std::size_t>();
        if (m.contains("patch_dim")) cfg.model.patch_dim = m.at("patch_dim").get<std::size_t>();
        if (m.contains("init_epsilon"))
            cfg.model.init_epsilon = m.at("init_epsilon").get<float>();
        if (m.contains("ln_eps")) cfg.model.ln_eps = m.at("ln_eps").get<float>();
        if (m.contains("seed")) cfg.model.seed = m.at("seed").get<std::uint64_t>();
    }
    if (j.contains("prompts")) {
        const auto& p = j.at("prompts");
        detail::check_keys(p, {"system", "user"}, "prompts");
        if (p.contains("system")) cfg.prompts.system = p.at("system").get<std::string>();
        if (p.contains("user")) cfg.prompts.user = p.at("user").get<std::string>();
    }
    if (j.contains("mode")) {
        cfg.mode = j.at("mode").get<std::string>();
        if (cfg.mode != "linear" && cfg.mode != "selfres") {
            throw ConfigError("config: mode must be 'linear' or 'selfres', got '" + cfg.mode +
                              "'");
        }
    }
    if (j.contains("schedule")) cfg.schedule = detail::parse_schedule(j.at("schedule"), "schedule");
    if (j.contains("score")) cfg.score = detail::parse_score_mode(j.at("score").get<std::string>());
    if (j.contains("dataset")) cfg.dataset = j.at("dataset").get<std::string>();
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("gen")) {
        const auto& g = j.at("gen");
        detail::check_keys(g, {"preset", "n_videos", "total_frames", "window_count",
                               "window_len", "plant_patch_fraction", "noise_sigma"},
                           "gen");
        if (g.contains("preset")) cfg.gen.preset = g.at("preset").get<std::string>();
        if (g.contains("n_videos")) cfg.gen.n_videos = g.at("n_videos").get<std::size_t>();
        if (g.contains("total_frames"))
            cfg.gen.total_frames = g.at("total_frames").get<std::size_t>();
        if (g.contains("window_count"))
            cfg.gen.window_count = g.at("window_count").get<std::size_t>();
        if (g.contains("window_len")) cfg.gen.window_len = g.at("window_len").get<std::size_t>();
        if (g.contains("plant_patch_fraction"))
            cfg.gen.plant_patch_fraction = g.at("plant_patch_fraction").get<float>();
        if (g.contains("noise_sigma")) cfg.gen.noise_sigma = g.at("noise_sigma").get<float>();
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        detail::check_keys(b, {"grid"}, "bench");
        if (b.contains("grid")) {
            for (const auto& entry : b.at("grid")) {
                cfg.bench_grid.push_back(detail::parse_schedule(entry, "bench.grid"));
            }
        }
    }
    return cfg;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["model"] = {{"d", cfg.model.d},
                  {"heads", cfg.model.heads},
                  {"layers", cfg.model.layers},
                  {"d_ff", cfg.model.d_ff},
                  {"frames_per_segment", cfg.model.frames_per_segment},
                  {"patches_per_frame", cfg.model.patches_per_frame},
                  {"patch_dim", cfg.model.patch_dim},
                  {"init_epsilon", cfg.model.init_epsilon},
                  {"ln_eps", cfg.model.ln_eps},
                  {"seed", cfg.model.seed}};
    j["prompts"] = {{"system", cfg.prompts.system}, {"user", cfg.prompts.user}};
    j["mode"] = cfg.mode;
    j["schedule"] = {{"mode", cfg.schedule.mode == ScheduleMode::regular ? "regular" : "smooth"},
                     {"r", cfg.schedule.r},
                     {"ns", cfg.schedule.ns},
                     {"m", cfg.schedule.m}};
    j["score"] = cfg.score == ScoreMode::attention ? "attention" : "cosine";
    j["dataset"] = cfg.dataset.string();
    j["out"] = cfg.out.string();
    j["seed"] = cfg.seed;
    j["gen"] = {{"preset", cfg.gen.preset},
                {"n_videos", cfg.gen.n_videos},
                {"total_frames", cfg.gen.total_frames},
                {"window_count", cfg.gen.window_count},
                {"window_len", cfg.gen.window_len},
                {"plant_patch_fraction", cfg.gen.plant_patch_fraction},
                {"noise_sigma", cfg.gen.noise_sigma}};
    return j;
}

inline void echo_effective_config(const ExperimentConfig& cfg,
                                  const std::filesystem::path& dir) {
    std::ofstream f(dir / "effective_config.json", std::ios::trunc | std::ios::binary);
    if (!f) throw IoError("cannot write effective config in " + dir.string());
    f << experiment_config_to_json(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Dataset layout: <dir>/manifest.txt, one video per line "path,class,seed"
// with paths relative to the dataset directory; tensors live under videos/.
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::filesystem::path path;  // absolute
    std::string class_name;
    std::uint64_t seed = 0;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dataset) {
    const std::filesystem::path manifest = dataset / "manifest.txt";
    std::ifstream f(manifest);
    if (!f) throw IoError("cannot open manifest " + manifest.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string path, cls, seed;
        if (!std::getline(ss, path, ',') || !std::getline(ss, cls, ',') ||
            !std::getline(ss, seed)) {
            throw IoError(manifest.string() + " line " + std::to_string(lineno) +
                          ": expected path,class,seed");
        }
        ManifestEntry e;
        e.path = dataset / path;
        e.class_name = cls;
        try {
            e.seed = std::stoull(seed);
        } catch (const std::exception&) {
            throw IoError(manifest.string() + " line " + std::to_string(lineno) +
                          ": bad seed '" + seed + "'");
        }
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw IoError(manifest.string() + ": no videos listed");
    return entries;
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns a process exit code and reports through the
// given streams, so tests can run them in-process.
// ---------------------------------------------------------------------------

namespace detail {

inline void apply_gen_preset(GenConfig& gen) {
    if (gen.preset.empty()) return;
    if (gen.preset == "table1-grid") {
        gen.n_videos = 200;
        gen.total_frames = 160;
        gen.window_count = 2;
        gen.window_len = 8;
        gen.plant_patch_fraction = 1.0f;
        gen.noise_sigma = 0.5f;
    } else if (gen.preset == "smoke") {
        gen.n_videos = 11;
        gen.total_frames = 64;
        gen.window_count = 1;
        gen.window_len = 6;
        gen.plant_patch_fraction = 1.0f;
        gen.noise_sigma = 0.5f;
    } else {
        throw ConfigError("unknown preset '" + gen.preset + "'");
    }
}

inline std::string video_stem(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "video_%05zu", index);
    return buf;
}

}  // namespace detail

// Generates a synthetic dataset: per-video tensors with sidecars plus a
// manifest. Plants are placed off the uniform sampling grid so that linear
// sampling misses most of them; benchmark presets cap planted tokens at 10%
// of the total token count.
inline int cmd_gen(ExperimentConfig cfg, std::ostream& out, std::ostream& err) {
    try {
        cfg.model.validate();
        detail::apply_gen_preset(cfg.gen);
        if (cfg.out.empty()) throw ConfigError("gen: --out directory required");
        if (cfg.gen.n_videos == 0) throw ConfigError("gen: n_videos must be >= 1");

        const std::size_t tokens_per_frame = cfg.model.patches_per_frame;
        const std::size_t planted_per_frame = static_cast<std::size_t>(
            std::floor(cfg.gen.plant_patch_fraction * static_cast<double>(tokens_per_frame)));
        const std::size_t planted_total =
            cfg.gen.window_count * cfg.gen.window_len * planted_per_frame;
        const std::size_t token_total = cfg.gen.total_frames * tokens_per_frame;
        if (!cfg.gen.preset.empty() &&
            planted_total * 10 > token_total) {
            throw ConfigError("gen: preset plants " + std::to_string(planted_total) +
                              " tokens, more than 10% of " + std::to_string(token_total));
        }

        std::filesystem::create_directories(cfg.out / "videos");
        const Weights weights = init_weights(cfg.model);
        const ClassSet classes;

        std::ostringstream manifest;
        for (std::size_t i = 0; i < cfg.gen.n_videos; ++i) {
            SyntheticSpec spec;
            spec.seed = cfg.seed + i;
            spec.class_name = classes.name(i % classes.size());
            spec.total_frames = cfg.gen.total_frames;
            spec.plant_patch_fraction = cfg.gen.plant_patch_fraction;
            spec.noise_sigma = cfg.gen.noise_sigma;
            SplitMix64 wrng(spec.seed ^ fnv1a64("windows"));
            spec.plant_windows =
                choose_offgrid_windows(wrng, spec.total_frames, cfg.model.frames_per_segment,
                                       cfg.gen.window_count, cfg.gen.window_len);

            VideoTokens video = gen_synthetic(spec, weights, cfg.model);
            video.video_id = detail::video_stem(i);
            const std::string rel = "videos/" + video.video_id + ".srst";
            save_video(cfg.out / rel, video);
            manifest << rel << "," << spec.class_name << "," << spec.seed << "\n";
        }
        {
            std::ofstream mf(cfg.out / "manifest.txt", std::ios::trunc | std::ios::binary);
            if (!mf) throw IoError("cannot write manifest in " + cfg.out.string());
            mf << manifest.str();
        }
        echo_effective_config(cfg, cfg.out);
        out << "generated " << cfg.gen.n_videos << " videos in " << cfg.out.string() << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitMalformedData;
    }
}

// Builds the schedule for an experiment, clamping an out-of-range sampling
// layer to the last layer with a warning (deep-stack layer indices from
// full-scale configurations land on a shallower toy stack).
inline SamplingSchedule schedule_from_config(const ScheduleConfig& sc, std::size_t num_layers,
                                             std::ostream& warn) {
    std::size_t r = sc.r;
    if (r >= num_layers) {
        warn << "warning: sampling layer " << r << " exceeds depth L=" << num_layers
             << "; clamped to " << (num_layers - 1) << "\n";
        r = num_layers - 1;
    }
    return make_schedule(sc.mode, r, sc.ns, sc.m, num_layers);
}

struct RunOutcome {
    std::vector<EvalRecord> records;              // sorted by video_id
    std::vector<double> recalls;                  // per video, -1 when no ground truth
    std::vector<FlopReport> flops;                // per video
    std::vector<std::string> ids;                 // sorted video ids
};

// Shared run loop: classify every manifest video with the configured sampler.
inline RunOutcome run_dataset(const ExperimentConfig& cfg, const Weights& weights,
                              const std::optional<SamplingSchedule>& schedule,
                              const std::filesystem::path* signature_dir = nullptr) {
    std::vector<ManifestEntry> entries = read_manifest(cfg.dataset);
    std::sort(entries.begin(), entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
    const ClassSet classes;

    RunOutcome outcome;
    for (const ManifestEntry& entry : entries) {
        VideoTokens video = load_video(entry.path);
        if (video.class_name.empty()) video.class_name = entry.class_name;
        const Signature sig =
            schedule ? run_selfres(video, *schedule, cfg.schedule.ns, weights, cfg.model,
                                   cfg.prompts, cfg.score)
                     : run_linear(video, weights, cfg.model, cfg.prompts);

        EvalRecord record;
        record.video_id = video.video_id.empty()
                              ? entry.path.stem().string()
                              : video.video_id;
        record.true_label = entry.class_name;
        record.predicted_text = classify(sig, classes, weights, cfg.model);
        outcome.ids.push_back(record.video_id);
        outcome.records.push_back(std::move(record));

        outcome.recalls.push_back(
            video.planted_tokens.empty()
                ? -1.0
                : planted_recall(sig, video.planted_tokens, video.patches_per_frame));
        outcome.flops.push_back(flops_estimate(trace_lengths(sig), cfg.model));

        if (signature_dir) {
            dump_signature(*signature_dir, outcome.ids.back(), sig);
        }
    }
    return outcome;
}

// Runs the configured sampler over a dataset and writes predictions,
// signature dumps, and the flop report.
inline int cmd_run(ExperimentConfig cfg, std::ostream& out, std::ostream& err) {
    try {
        cfg.model.validate();
        if (cfg.dataset.empty()) throw ConfigError("run: dataset directory required");
        if (cfg.out.empty()) throw ConfigError("run: --out directory required");
        if (!std::filesystem::exists(cfg.dataset / "manifest.txt")) {
            err << "error: no dataset manifest at " << (cfg.dataset / "manifest.txt").string()
                << "\n";
            return kExitMissingInput;
        }

        std::optional<SamplingSchedule> schedule;
        if (cfg.mode == "selfres") {
            schedule = schedule_from_config(cfg.schedule, cfg.model.layers, err);
        }

        std::filesystem::create_directories(cfg.out / "signatures");
        const Weights weights = init_weights(cfg.model);
        const std::filesystem::path sig_dir = cfg.out / "signatures";
        const RunOutcome outcome = run_dataset(cfg, weights, schedule, &sig_dir);

        write_predictions_csv(cfg.out / "predictions.csv", outcome.records);
        {
            std::ofstream ff(cfg.out / "flops.csv", std::ios::trunc | std::ios::binary);
            if (!ff) throw IoError("cannot write flops.csv in " + cfg.out.string());
            ff << "video_id,total_flops,baseline_flops,flop_ratio\n";
            char buf[32];
            for (std::size_t i = 0; i < outcome.ids.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.6f", outcome.flops[i].ratio);
                ff << outcome.ids[i] << "," << outcome.flops[i].total << ","
                   << outcome.flops[i].baseline_total << "," << buf << "\n";
            }
        }
        echo_effective_config(cfg, cfg.out);
        out << "ran " << outcome.ids.size() << " videos (" << cfg.mode
            << "); wrote predictions.csv, flops.csv, signatures/ in " << cfg.out.string()
            << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitMalformedData;
    }
}

// Scores a predictions file: prints the accuracy row and writes the confusion
// matrix CSV.
inline int cmd_eval(const std::filesystem::path& predictions,
                    const std::filesystem::path& out_dir, std::ostream& out,
                    std::ostream& err) {
    try {
        if (!std::filesystem::exists(predictions)) {
            err << "error: no predictions file at " << predictions.string() << "\n";
            return kExitMissingInput;
        }
        const std::vector<EvalRecord> records = read_predictions_csv(predictions);
        const ClassSet classes;
        const double acc = accuracy(records, classes);
        const ConfusionMatrix matrix = confusion_matrix(records, classes);

        // Method metadata, when the predictions sit next to an echoed config.
        std::string method = "-";
        std::string segments = "-";
        std::string layer = "-";
        const std::filesystem::path cfg_path = predictions.parent_path() / "effective_config.json";
        if (std::filesystem::exists(cfg_path)) {
            try {
                const ExperimentConfig cfg = load_experiment_config(cfg_path);
                if (cfg.mode == "linear") {
                    method = "Linear";
                    segments = "1";
                } else {
                    method = std::string("+ Self-ReS ") +
                             (cfg.schedule.mode == ScheduleMode::regular ? "Regular" : "Smooth");
                    segments = std::to_string(cfg.schedule.ns);
                    layer = std::to_string(cfg.schedule.r);
                }
            } catch (const Error&) {
                // metadata is optional; fall through with dashes
            }
        }

        out << report_header() << "\n";
        out << format_report_row(method, segments, layer, acc) << "\n";
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            write_confusion_csv(out_dir / "confusion.csv", matrix);
            out << "wrote " << (out_dir / "confusion.csv").string() << "\n";
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitMalformedData;
    }
}

struct BenchRow {
    std::string method;
    std::string segments;
    std::string layer;  // r (and m for smooth)
    double accuracy = 0.0;
    double mean_recall = 0.0;
    double mean_flop_ratio = 0.0;
};

inline std::vector<ScheduleConfig> default_bench_grid() {
    std::vector<ScheduleConfig> grid;
    for (std::size_t ns : {3, 5}) {
        for (std::size_t r : {8, 12}) {
            grid.push_back({ScheduleMode::regular, r, ns, 1});
        }
    }
    for (std::size_t r : {3, 5, 8}) {
        grid.push_back({ScheduleMode::smooth, r, 5, 3});
    }
    return grid;
}

// Runs the linear baseline plus every schedule in the grid and prints a
// comparison table.
inline int cmd_bench(ExperimentConfig cfg, std::ostream& out, std::ostream& err) {
    try {
        cfg.model.validate();
        if (cfg.dataset.empty()) throw ConfigError("bench: dataset directory required");
        if (!std::filesystem::exists(cfg.dataset / "manifest.txt")) {
            err << "error: no dataset manifest at " << (cfg.dataset / "manifest.txt").string()
                << "\n";
            return kExitMissingInput;
        }
        const Weights weights = init_weights(cfg.model);
        const ClassSet classes;
        std::vector<ScheduleConfig> grid =
            cfg.bench_grid.empty() ? default_bench_grid() : cfg.bench_grid;

        auto summarize = [&](const RunOutcome& o, BenchRow row) {
            row.accuracy = accuracy(o.records, classes);
            double recall_sum = 0.0;
            std::size_t recall_n = 0;
            for (double r : o.recalls) {
                if (r >= 0.0) {
                    recall_sum += r;
                    ++recall_n;
                }
            }
            row.mean_recall = recall_n ? recall_sum / static_cast<double>(recall_n) : 0.0;
            double ratio_sum = 0.0;
            for (const FlopReport& f : o.flops) ratio_sum += f.ratio;
            row.mean_flop_ratio = ratio_sum / static_cast<double>(o.flops.size());
            return row;
        };

        std::vector<BenchRow> rows;
        {
            ExperimentConfig linear_cfg = cfg;
            linear_cfg.mode = "linear";
            rows.push_back(summarize(run_dataset(linear_cfg, weights, std::nullopt),
                                     {"Linear", "1", "-", 0, 0, 0}));
        }
        for (const ScheduleConfig& sc : grid) {
            ExperimentConfig run_cfg = cfg;
            run_cfg.mode = "selfres";
            run_cfg.schedule = sc;
            const SamplingSchedule schedule =
                schedule_from_config(sc, cfg.model.layers, err);
            BenchRow row;
            row.method = std::string("+ Self-ReS ") +
                         (sc.mode == ScheduleMode::regular ? "Regular" : "Smooth");
            row.segments = std::to_string(sc.ns);
            row.layer = std::to_string(schedule.steps.front().layer);
            if (sc.mode == ScheduleMode::smooth) row.layer += "/m=" + std::to_string(sc.m);
            rows.push_back(summarize(run_dataset(run_cfg, weights, schedule), row));
        }

        out << "toy-scale benchmark; absolute numbers are not comparable to full-scale runs\n";
        out << detail::pad("Method", 24) << detail::pad("N_s", 6) << detail::pad("r_j/m", 8)
            << detail::pad("Accuracy", 10) << detail::pad("MeanRecall", 12) << "FlopRatio\n";
        std::ostringstream table;
        char buf[128];
        for (const BenchRow& r : rows) {
            std::snprintf(buf, sizeof(buf), "%-24s%-6s%-8s%-10s%-12.4f%.4f",
                          r.method.c_str(), r.segments.c_str(), r.layer.c_str(),
                          format_percent(r.accuracy).c_str(), r.mean_recall,
                          r.mean_flop_ratio);
            table << buf << "\n";
        }
        out << table.str();
        if (!cfg.out.empty()) {
            std::filesystem::create_directories(cfg.out);
            std::ofstream bf(cfg.out / "bench.csv", std::ios::trunc | std::ios::binary);
            if (!bf) throw IoError("cannot write bench.csv in " + cfg.out.string());
            bf << "method,ns,layer,accuracy,mean_recall,mean_flop_ratio\n";
            for (const BenchRow& r : rows) {
                std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", r.accuracy, r.mean_recall,
                              r.mean_flop_ratio);
                bf << detail::csv_escape(r.method) << "," << r.segments << "," << r.layer << ","
                   << buf << "\n";
            }
            echo_effective_config(cfg, cfg.out);
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitMalformedData;
    }
}

// Writes every weight matrix as an SRST tensor with documented names.
inline int cmd_dump_weights(ExperimentConfig cfg, std::ostream& out, std::ostream& err) {
    try {
        cfg.model.validate();
        if (cfg.out.empty()) throw ConfigError("dump-weights: --out directory required");
        std::filesystem::create_directories(cfg.out);
        const Weights weights = init_weights(cfg.model);
        write_tensor_file(cfg.out / "embedding.srst", matrix_to_tensor(weights.embedding));
        write_tensor_file(cfg.out / "projector.srst", matrix_to_tensor(weights.projector));
        std::size_t files = 2;
        for (std::size_t l = 0; l < weights.layers.size(); ++l) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "layer%02zu", l);
            const LayerWeights& lw = weights.layers[l];
            const std::pair<const char*, const Matrix*> parts[] = {
                {"wq", &lw.wq}, {"wk", &lw.wk}, {"wv", &lw.wv},
                {"wo", &lw.wo}, {"w1", &lw.w1}, {"w2", &lw.w2}};
            for (const auto& [name, m] : parts) {
                write_tensor_file(cfg.out / (std::string(stem) + "." + name + ".srst"),
                                  matrix_to_tensor(*m));
                ++files;
            }
        }
        out << "wrote " << files << " weight tensors to " << cfg.out.string() << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitMalformedData;
    }
}

}  // namespace selfres
