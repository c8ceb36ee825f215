#pragma once

#include "mgslam/gaussian_map.hpp"
#include "mgslam/losses.hpp"
#include "mgslam/rasterizer.hpp"

#include <map>
#include <memory>
#include <optional>
#include <random>

namespace mgslam {

struct LearningRates {
    double position_per_extent = 1e-4;
    double rotation = 1e-3;
    double log_scale = 1e-3;
    double opacity = 5e-2;
    double color = 2.5e-3;
};

struct MapperConfig {
    int window_length = 7;
    int iters_per_keyframe = 20;
    int refinement_iterations = 200;
    double prune_opacity = 0.005;
    std::optional<double> tau_s;      // unset: tau_s_depth_factor * median depth of the first batch
    double tau_s_depth_factor = 0.1;
    double lambda_ssim = 0.2;
    double lambda_reg = 1.0;
    LearningRates lr;
    bool step_halving = false;
    int max_halvings = 30;
    RasterSettings raster;
    std::uint64_t seed = 0;

    void validate() const;
};

/// A keyframe as seen by the mapper: current pose estimate plus its image.
struct MapView {
    FrameId id = 0;
    Pose pose;
    std::shared_ptr<const Image> image;
};

struct MapStepReport {
    int iterations = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t pruned = 0;
    std::vector<double> loss_history;  // loss before each step, then the final loss
};

/// Sliding-window photometric optimization of the Gaussian map.
class GaussianMapper {
public:
    GaussianMapper(Intrinsics k, MapperConfig config);

    /// Appends freshly initialized primitives. The first call fixes tau_s when it
    /// is not configured, using the depths implied by the initial scales.
    void add_primitives(std::span<const GaussianPrimitive> prims, FrameId creation_frame);

    /// Total loss (color summed over views plus weighted scale penalty).
    double loss(std::span<const MapView> views) const;

    MapStepReport optimize_window(std::span<const MapView> window, int iterations);
    MapStepReport final_refinement(std::span<const MapView> keyframes, int iterations);

    /// Drops primitives below prune_opacity; returns the count removed.
    std::size_t prune();

    RenderOutput render_view(const Pose& pose) const { return render(map_.primitives(), pose, k_, config_.raster); }

    const GaussianMap& map() const { return map_; }
    GaussianMap& map() { return map_; }
    double tau_s() const { return tau_s_.value_or(0.0); }
    double scene_extent() const;
    const MapperConfig& config() const { return config_; }
    const Intrinsics& intrinsics() const { return k_; }

private:
    struct Moments {
        double m[14] = {};
        double v[14] = {};
        long step = 0;
    };

    double evaluate(std::span<const MapView> views, GaussianGradients* grads) const;
    void adam_step(const GaussianGradients& grads, double step_scale);
    double step(std::span<const MapView> views, double* loss_before);
    void note_views(std::span<const MapView> views);

    Intrinsics k_;
    MapperConfig config_;
    GaussianMap map_;
    std::vector<Moments> moments_;
    std::optional<double> tau_s_;
    std::map<FrameId, Vec3> camera_centers_;
    std::mt19937_64 rng_;
};

}  // namespace mgslam
