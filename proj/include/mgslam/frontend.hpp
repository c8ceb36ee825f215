#pragma once

#include "mgslam/dba.hpp"
#include "mgslam/graph.hpp"
#include "mgslam/providers.hpp"
#include "mgslam/sampler.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace mgslam {

struct FrontEndConfig {
    int patches_per_frame = 96;
    int optimization_window = 10;
    int removal_window = 22;
    double keyframe_flow_px = 16.0;  // mean flow threshold, expressed for a 640 px wide image
    int patch_extent = 3;
    std::uint64_t seed = 0;
    DbaOptions dba;

    void validate() const;
    /// keyframe_flow_px rescaled to the actual image width.
    double keyframe_threshold(int image_width) const { return keyframe_flow_px * image_width / 640.0; }
};

enum class GraphEventType { frame_added, keyframe_decided, frame_removed };

struct GraphEvent {
    GraphEventType type = GraphEventType::frame_added;
    FrameId frame = 0;
    bool is_keyframe = false;
    std::vector<GraphEdge> new_edges;
    std::vector<PatchId> removed_patches;
};

/// Front-end patch-frame graph: frame intake, windowed DBA, keyframe
/// selection and edge aging. Nodes live in a PatchGraph shared with the back-end;
/// structural changes other than edge aging are announced to the listener.
class FrontEnd {
public:
    FrontEnd(std::shared_ptr<PatchGraph> graph, FrontEndConfig config);

    void set_listener(std::function<void(const GraphEvent&)> listener) { listener_ = std::move(listener); }

    /// Appends a frame. Its pose is the guess if given, else constant-velocity
    /// extrapolation from the two previously added frames. Patch centers default
    /// to random sampling. Throws DimensionMismatch.
    FrameId add_frame(std::shared_ptr<const Image> image, double timestamp, int source_index = -1,
                      std::optional<Pose> initial_pose_guess = std::nullopt, std::span<const Pixel> centers = {});

    /// Constant-velocity guess for the next frame (identity before two frames).
    Pose predict_pose() const;

    /// Most recent optimization_window frames, oldest first.
    std::vector<FrameId> window() const;

    /// Provider evaluation followed by solve_dba over the window.
    DbaReport optimize(const CorrespondenceProvider& provider, int iterations);

    /// Mean reprojected displacement of the previous keyframe's patches into `frame`.
    double flow_from_previous_keyframe(FrameId frame) const;

    /// Applies the motion rule and marks the frame; returns the decision.
    bool decide_keyframe(FrameId frame);

    /// Freezes frames outside the window, deletes non-keyframes (both graphs)
    /// and ages out edges beyond the removal window (front-end only).
    void retire_frames();

    std::vector<StampedPose> trajectory() const;

    const EdgeSet& edges() const { return edges_; }
    EdgeSet& edges() { return edges_; }
    PatchGraph& graph() { return *graph_; }
    const PatchGraph& graph() const { return *graph_; }
    const FrontEndConfig& config() const { return config_; }
    std::optional<FrameId> last_keyframe() const;
    std::optional<FrameId> newest_frame() const;

private:
    struct FrameRecord {
        FrameId id = 0;
        double timestamp = 0.0;
        bool removed = false;
        bool keyframe = false;
        Pose pose_at_decision;       // keyframes: pose when accepted
        Pose pose_at_removal;        // removed frames
        std::optional<FrameId> prev_keyframe;
        Pose prev_keyframe_pose;     // prev keyframe pose when this frame was removed
    };

    void emit(const GraphEvent& e) {
        if (listener_) listener_(e);
    }
    FrameRecord& record(FrameId id);
    FrameId anchor() const;

    std::shared_ptr<PatchGraph> graph_;
    FrontEndConfig config_;
    EdgeSet edges_;
    std::function<void(const GraphEvent&)> listener_;
    std::vector<FrameRecord> records_;
    std::vector<std::pair<FrameId, Pose>> motion_history_;  // last two added frames
};

}  // namespace mgslam
