#include "mgslam/config.hpp"
#include "mgslam/errors.hpp"
#include "mgslam/evaluation.hpp"
#include "mgslam/losses.hpp"
#include "mgslam/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

using namespace mgslam;

namespace {

struct ConfigFlags {
    std::string config_file;
    std::vector<std::string> overrides;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
    cmd->add_option("--config", flags.config_file, "JSON config file");
    cmd->add_option("--set", flags.overrides, "Override one key, e.g. --set loopclosure.tau_sim=0.9");
}

PipelineConfig build_config(const ConfigFlags& flags) {
    PipelineConfig cfg;
    if (!flags.config_file.empty()) load_config_file(cfg, flags.config_file);
    for (const auto& o : flags.overrides) apply_override(cfg, o);
    return cfg;
}

AlignMode parse_align(const std::string& s) {
    if (s == "similarity") return AlignMode::similarity;
    if (s == "rigid") return AlignMode::rigid;
    if (s == "none") return AlignMode::none;
    throw Error(ErrorCode::InvalidConfig, "align must be similarity, rigid or none");
}

std::string fmt(double v, const char* f = "%.6f") {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monocular Gaussian-splatting SLAM toolkit"};
    app.require_subcommand(1);

    ConfigFlags run_flags;
    auto* run = app.add_subcommand("run", "Track, map and close loops over an input sequence");
    add_config_flags(run, run_flags);
    bool serial = false, concurrent = false, no_global = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::string output, provider, input, format, embeddings;
    run->add_flag("--serial", serial, "Run every stage sequentially (deterministic)");
    run->add_flag("--concurrent", concurrent, "Run mapping on a worker thread");
    run->add_flag("--no-global-opt", no_global, "Disable back-end global optimization");
    run->add_option("--seed", seed, "Random seed");
    run->add_option("--trials", trials, "Number of trials; the median ATE is reported");
    run->add_option("--output", output, "Output directory");
    run->add_option("--provider", provider, "Correspondence provider: oracle or matcher");
    run->add_option("--input", input, "Dataset directory (omit for the synthetic scene)");
    run->add_option("--format", format, "Input format: synthetic, tum_rgb or image_dir");
    run->add_option("--embeddings", embeddings, "EMB1 file with one embedding per input frame");

    auto* eval = app.add_subcommand("eval", "Trajectory and image metrics");
    std::vector<std::string> trajectories;
    std::string groundtruth, renders, references, align = "similarity", json_out;
    double max_dt = 0.02;
    eval->add_option("--trajectory", trajectories, "Estimated TUM trajectory (repeat for trials)")->required();
    eval->add_option("--groundtruth", groundtruth, "Reference TUM trajectory")->required();
    eval->add_option("--renders", renders, "Directory of rendered PNGs");
    eval->add_option("--references", references, "Directory of reference PNGs with matching names");
    eval->add_option("--align", align, "similarity, rigid or none");
    eval->add_option("--max-dt", max_dt, "Timestamp association window in seconds");
    eval->add_option("--json", json_out, "Also write the report as JSON");

    auto* query = app.add_subcommand("query", "Rank a run's keyframes against a prompt embedding");
    std::string run_dir, prompt;
    std::size_t top_k = 5;
    query->add_option("--run", run_dir, "Run output directory")->required();
    query->add_option("--prompt", prompt, "EMB1 file; its first record is the prompt")->required();
    query->add_option("--top-k", top_k, "Number of results");

    ConfigFlags gen_flags;
    auto* gen = app.add_subcommand("generate-scene", "Write the synthetic scene in TUM layout");
    add_config_flags(gen, gen_flags);
    std::string gen_out;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--output", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Scene seed");

    ConfigFlags show_flags;
    auto* show = app.add_subcommand("config", "Print the effective configuration with every default");
    add_config_flags(show, show_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            PipelineConfig cfg = build_config(run_flags);
            if (serial) cfg.serial = true;
            if (concurrent) cfg.serial = false;
            if (no_global) cfg.global_opt = false;
            if (seed) cfg.seed = *seed;
            if (trials) cfg.trials = *trials;
            if (!output.empty()) cfg.output = output;
            if (!provider.empty()) cfg.provider = provider;
            if (!input.empty()) {
                cfg.input.path = input;
                if (format.empty() && cfg.input.format == "synthetic") cfg.input.format = "tum_rgb";
            }
            if (!format.empty()) cfg.input.format = format;
            if (!embeddings.empty()) cfg.embeddings = embeddings;
            const TrialsSummary s = run_trials(cfg);
            for (std::size_t t = 0; t < s.ate.size(); ++t)
                std::printf("trial %zu ate_rmse %s\n", t, s.ate[t] ? fmt(*s.ate[t], "%.9f").c_str() : "n/a");
            if (s.median_ate) std::printf("median ate_rmse %s\n", fmt(*s.median_ate, "%.9f").c_str());
            std::printf("outputs in %s\n", cfg.output.c_str());
        } else if (*eval) {
            const AlignMode mode = parse_align(align);
            const auto gt = read_trajectory(groundtruth);
            nlohmann::json j;
            j["trajectories"] = nlohmann::json::array();
            std::vector<double> ates;
            std::printf("%-40s %14s\n", "trajectory", "ate_rmse");
            for (const auto& path : trajectories) {
                const double a = ate_rmse(read_trajectory(path), gt, mode, max_dt);
                ates.push_back(a);
                std::printf("%-40s %14s\n", path.c_str(), fmt(a, "%.9f").c_str());
                j["trajectories"].push_back({{"path", path}, {"ate_rmse", a}});
            }
            j["median_ate_rmse"] = median(ates);
            if (ates.size() > 1) std::printf("%-40s %14s\n", "median", fmt(median(ates), "%.9f").c_str());
            if (!renders.empty()) {
                if (references.empty()) throw Error(ErrorCode::InvalidConfig, "--renders needs --references");
                std::vector<std::filesystem::path> files;
                for (const auto& e : std::filesystem::directory_iterator(renders))
                    if (e.path().extension() == ".png") files.push_back(e.path());
                std::sort(files.begin(), files.end());
                MetricsReport m;
                std::printf("%-40s %10s %10s\n", "image", "psnr", "ssim");
                for (const auto& f : files) {
                    const Image r = load_image(f);
                    const Image ref = load_image(std::filesystem::path(references) / f.filename(), r.width, r.height);
                    m.psnr.push_back(psnr(r, ref));
                    m.ssim.push_back(ssim(r, ref));
                    std::printf("%-40s %10s %10s\n", f.filename().c_str(), fmt(m.psnr.back(), "%.4f").c_str(),
                                fmt(m.ssim.back(), "%.6f").c_str());
                }
                std::printf("%-40s %10s %10s\n", "mean", fmt(m.mean_psnr(), "%.4f").c_str(),
                            fmt(m.mean_ssim(), "%.6f").c_str());
                j["images"] = nlohmann::json::parse(m.to_json());
            }
            if (!json_out.empty()) {
                std::ofstream out(json_out);
                out << j.dump(2) << "\n";
            }
        } else if (*query) {
            const auto ranked = query_run(run_dir, prompt, top_k);
            std::printf("%6s %12s %10s\n", "frame", "timestamp", "score");
            for (const auto& r : ranked)
                std::printf("%6d %12.6f %10.6f\n", r.source_index, r.timestamp, r.score);
        } else if (*gen) {
            const PipelineConfig cfg = build_config(gen_flags);
            const auto scene = SyntheticScene::generate(cfg.scene, gen_seed.value_or(cfg.scene_seed));
            scene.write_tum(gen_out);
            std::printf("wrote %d frames to %s\n", scene.frame_count(), gen_out.c_str());
        } else if (*show) {
            std::cout << config_to_json(build_config(show_flags));
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
