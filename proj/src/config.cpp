#include "mgslam/config.hpp"

#include "mgslam/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mgslam {

using nlohmann::json;

namespace {

struct Binding {
    std::string section;
    std::string key;
    std::function<json(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const json&)> set;
};

template <class T, class Ref>
Binding field(std::string section, std::string key, Ref ref) {
    Binding b;
    b.section = std::move(section);
    b.key = std::move(key);
    b.get = [ref](const PipelineConfig& c) { return json(ref(const_cast<PipelineConfig&>(c))); };
    b.set = [ref](PipelineConfig& c, const json& j) { ref(c) = j.get<T>(); };
    return b;
}

#define MG_FIELD(T, section, key, expr) field<T>(section, key, [](PipelineConfig& c) -> T& { return expr; })

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> all = [] {
        std::vector<Binding> b{
            MG_FIELD(std::string, "", "output", c.output),
            MG_FIELD(std::string, "", "embeddings", c.embeddings),
            MG_FIELD(std::string, "", "provider", c.provider),
            MG_FIELD(int, "", "trials", c.trials),
            MG_FIELD(std::uint64_t, "", "seed", c.seed),
            MG_FIELD(std::uint64_t, "", "scene_seed", c.scene_seed),
            MG_FIELD(bool, "", "serial", c.serial),
            MG_FIELD(bool, "", "global_opt", c.global_opt),
            MG_FIELD(bool, "", "mapping", c.mapping),
            MG_FIELD(bool, "", "render_guided", c.render_guided),
            MG_FIELD(int, "", "updates_per_frame", c.updates_per_frame),
            MG_FIELD(int, "", "iterations_per_update", c.iterations_per_update),
            MG_FIELD(int, "", "maturity_iterations", c.maturity_iterations),
            MG_FIELD(int, "", "mapping_warmup_frames", c.mapping_warmup_frames),
            MG_FIELD(double, "", "drift_yaw_per_frame", c.drift_yaw_per_frame),
            MG_FIELD(double, "", "drift_translation_per_frame", c.drift_translation_per_frame),

            MG_FIELD(std::string, "input", "path", c.input.path),
            MG_FIELD(std::string, "input", "format", c.input.format),
            MG_FIELD(int, "input", "width", c.input.width),
            MG_FIELD(int, "input", "height", c.input.height),
            MG_FIELD(double, "input", "fps", c.input.fps),
            MG_FIELD(double, "input", "fx", c.input.fx),
            MG_FIELD(double, "input", "fy", c.input.fy),
            MG_FIELD(double, "input", "cx", c.input.cx),
            MG_FIELD(double, "input", "cy", c.input.cy),
            MG_FIELD(int, "input", "max_frames", c.input.max_frames),

            MG_FIELD(int, "scene", "width", c.scene.width),
            MG_FIELD(int, "scene", "height", c.scene.height),
            MG_FIELD(double, "scene", "focal", c.scene.focal),
            MG_FIELD(int, "scene", "frames", c.scene.frames),
            MG_FIELD(double, "scene", "radius", c.scene.radius),
            MG_FIELD(double, "scene", "room_half_size", c.scene.room_half_size),
            MG_FIELD(double, "scene", "angle_step", c.scene.angle_step),
            MG_FIELD(double, "scene", "pitch", c.scene.pitch),
            MG_FIELD(int, "scene", "texture_size", c.scene.texture_size),
            MG_FIELD(double, "scene", "texel", c.scene.texel),
            MG_FIELD(int, "scene", "texture_lattice", c.scene.texture_lattice),
            MG_FIELD(double, "scene", "fps", c.scene.fps),

            MG_FIELD(int, "frontend", "patches_per_frame", c.frontend.patches_per_frame),
            MG_FIELD(int, "frontend", "optimization_window", c.frontend.optimization_window),
            MG_FIELD(int, "frontend", "removal_window", c.frontend.removal_window),
            MG_FIELD(double, "frontend", "keyframe_flow_px", c.frontend.keyframe_flow_px),
            MG_FIELD(int, "frontend", "patch_extent", c.frontend.patch_extent),
            MG_FIELD(double, "frontend", "min_inv_depth", c.frontend.dba.min_inv_depth),
            MG_FIELD(double, "frontend", "max_inv_depth", c.frontend.dba.max_inv_depth),
            MG_FIELD(double, "frontend", "initial_damping", c.frontend.dba.initial_damping),

            MG_FIELD(int, "sampler", "grid_rows", c.sampler.grid_rows),
            MG_FIELD(int, "sampler", "grid_cols", c.sampler.grid_cols),
            MG_FIELD(int, "sampler", "suppression_radius", c.sampler.suppression_radius),
            MG_FIELD(int, "sampler", "border", c.sampler.border),

            MG_FIELD(int, "gaussianmap", "window_length", c.mapper.window_length),
            MG_FIELD(int, "gaussianmap", "map_iters_per_keyframe", c.mapper.iters_per_keyframe),
            MG_FIELD(int, "gaussianmap", "refinement_iterations", c.mapper.refinement_iterations),
            MG_FIELD(double, "gaussianmap", "prune_opacity", c.mapper.prune_opacity),
            MG_FIELD(double, "gaussianmap", "tau_s_depth_factor", c.mapper.tau_s_depth_factor),
            MG_FIELD(double, "gaussianmap", "lambda_ssim", c.mapper.lambda_ssim),
            MG_FIELD(double, "gaussianmap", "lambda_reg", c.mapper.lambda_reg),
            MG_FIELD(double, "gaussianmap", "lr_position_per_extent", c.mapper.lr.position_per_extent),
            MG_FIELD(double, "gaussianmap", "lr_rotation", c.mapper.lr.rotation),
            MG_FIELD(double, "gaussianmap", "lr_scale", c.mapper.lr.log_scale),
            MG_FIELD(double, "gaussianmap", "lr_opacity", c.mapper.lr.opacity),
            MG_FIELD(double, "gaussianmap", "lr_color", c.mapper.lr.color),
            MG_FIELD(bool, "gaussianmap", "step_halving", c.mapper.step_halving),
            MG_FIELD(int, "gaussianmap", "render_threads", c.mapper.raster.threads),
            MG_FIELD(int, "gaussianmap", "tile_size", c.mapper.raster.tile_size),

            MG_FIELD(double, "loopclosure", "tau_sim", c.loop.tau_sim),
            MG_FIELD(double, "loopclosure", "tau_flow_px", c.loop.tau_flow_px),
            MG_FIELD(int, "loopclosure", "recent", c.loop.recent),

            MG_FIELD(std::size_t, "backend", "edge_budget", c.backend.edge_budget),
            MG_FIELD(int, "backend", "global_iters", c.backend.global_iterations),

            MG_FIELD(int, "matcher", "template_radius", c.matcher.template_radius),
            MG_FIELD(int, "matcher", "search_radius", c.matcher.search_radius),
            MG_FIELD(double, "matcher", "min_ncc", c.matcher.min_ncc),
        };
        Binding tau;
        tau.section = "gaussianmap";
        tau.key = "tau_s";
        tau.get = [](const PipelineConfig& c) { return c.mapper.tau_s ? json(*c.mapper.tau_s) : json(nullptr); };
        tau.set = [](PipelineConfig& c, const json& j) {
            if (j.is_null()) c.mapper.tau_s.reset();
            else c.mapper.tau_s = j.get<double>();
        };
        b.push_back(std::move(tau));
        return b;
    }();
    return all;
}

#undef MG_FIELD

const Binding* find(const std::string& section, const std::string& key) {
    for (const auto& b : bindings())
        if (b.section == section && b.key == key) return &b;
    return nullptr;
}

void set_value(PipelineConfig& c, const Binding& b, const json& v) {
    try {
        b.set(c, v);
    } catch (const json::exception& e) {
        const std::string name = b.section.empty() ? b.key : b.section + "." + b.key;
        throw Error(ErrorCode::InvalidConfig, "bad value for " + name + ": " + e.what());
    }
}

}  // namespace

void PipelineConfig::validate() const {
    if (provider != "oracle" && provider != "matcher")
        throw Error(ErrorCode::InvalidConfig, "provider must be oracle or matcher");
    if (input.format != "synthetic" && input.format != "tum_rgb" && input.format != "image_dir")
        throw Error(ErrorCode::InvalidConfig, "input.format must be synthetic, tum_rgb or image_dir");
    if (trials < 1) throw Error(ErrorCode::InvalidConfig, "trials must be >= 1");
    if (updates_per_frame < 1 || iterations_per_update < 1)
        throw Error(ErrorCode::InvalidConfig, "updates_per_frame and iterations_per_update must be >= 1");
    if (mapping_warmup_frames < 0) throw Error(ErrorCode::InvalidConfig, "mapping_warmup_frames must be >= 0");
    if (maturity_iterations < 0) throw Error(ErrorCode::InvalidConfig, "maturity_iterations must be >= 0");
    if (input.format != "synthetic" && provider == "oracle")
        throw Error(ErrorCode::InvalidConfig, "the oracle provider needs synthetic input");
    frontend.validate();
    sampler.validate();
    mapper.validate();
    loop.validate();
    backend.validate();
}

std::string config_to_json(const PipelineConfig& config) {
    json j = json::object();
    for (const auto& b : bindings()) {
        if (b.section.empty()) j[b.key] = b.get(config);
        else j[b.section][b.key] = b.get(config);
    }
    return j.dump(2) + "\n";
}

void apply_config_json(PipelineConfig& config, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (const Binding* b = find("", key)) {
            set_value(config, *b, value);
            continue;
        }
        if (!value.is_object()) throw Error(ErrorCode::InvalidConfig, "unknown config key: " + key);
        bool known_section = false;
        for (const auto& b : bindings()) known_section = known_section || b.section == key;
        if (!known_section) throw Error(ErrorCode::InvalidConfig, "unknown config section: " + key);
        for (const auto& [sub, v] : value.items()) {
            const Binding* b = find(key, sub);
            if (!b) throw Error(ErrorCode::InvalidConfig, "unknown config key: " + key + "." + sub);
            set_value(config, *b, v);
        }
    }
}

void load_config_file(PipelineConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_json(config, ss.str());
}

void apply_override(PipelineConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "override must look like key=value: " + assignment);
    const std::string name = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    const auto dot = name.find('.');
    const std::string section = dot == std::string::npos ? "" : name.substr(0, dot);
    const std::string key = dot == std::string::npos ? name : name.substr(dot + 1);
    const Binding* b = find(section, key);
    if (!b) throw Error(ErrorCode::InvalidConfig, "unknown config key: " + name);
    json v;
    try {
        v = json::parse(raw);
    } catch (const json::exception&) {
        v = raw;
    }
    set_value(config, *b, v);
}

}  // namespace mgslam
