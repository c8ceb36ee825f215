#pragma once

#include "mgslam/backend.hpp"
#include "mgslam/frontend.hpp"
#include "mgslam/loop_closure.hpp"
#include "mgslam/mapper.hpp"
#include "mgslam/sampler.hpp"
#include "mgslam/synthetic.hpp"

#include <filesystem>
#include <string>

namespace mgslam {

struct InputConfig {
    std::string path;                   // dataset directory; unused for synthetic input
    std::string format = "synthetic";   // synthetic | tum_rgb | image_dir
    int width = 640;
    int height = 480;
    double fps = 30.0;
    // Pinhole intrinsics for dataset input at the configured resolution (TUM fr1 defaults).
    double fx = 517.3, fy = 516.5, cx = 318.6, cy = 255.3;
    int max_frames = 0;  // 0 means all
};

struct PipelineConfig {
    InputConfig input;
    SceneSpec scene;
    std::uint64_t scene_seed = 7;
    std::string output = "mgslam_out";
    std::string embeddings;            // optional EMB1 file, records keyed by input frame index
    std::string provider = "oracle";   // oracle | matcher
    int trials = 1;
    std::uint64_t seed = 0;
    bool serial = true;
    bool global_opt = true;
    bool mapping = true;
    bool render_guided = true;
    int updates_per_frame = 2;
    int iterations_per_update = 2;
    int maturity_iterations = 4;
    int mapping_warmup_frames = 8;  // no Gaussians are created before this many input frames
    // Odometric corruption of non-loop oracle edges, per frame of the input stream.
    double drift_yaw_per_frame = 0.0;
    double drift_translation_per_frame = 0.0;

    FrontEndConfig frontend;
    SamplerConfig sampler;
    MapperConfig mapper;
    LoopConfig loop;
    BackEndConfig backend;
    MatcherOptions matcher;

    void validate() const;
};

/// JSON object with every key and its current value.
std::string config_to_json(const PipelineConfig& config);

/// Applies a JSON document on top of `config`. Unknown keys throw InvalidConfig.
void apply_config_json(PipelineConfig& config, const std::string& json_text);
void load_config_file(PipelineConfig& config, const std::filesystem::path& path);

/// Applies one "section.key=value" override; value is parsed as JSON when
/// possible and as a string otherwise.
void apply_override(PipelineConfig& config, const std::string& assignment);

}  // namespace mgslam
