#pragma once

#include "mgslam/geometry.hpp"
#include "mgslam/image.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace mgslam {

using FrameId = std::int64_t;
using PatchId = std::int64_t;

struct Frame {
    FrameId id = 0;
    double timestamp = 0.0;
    std::shared_ptr<const Image> image;
    std::shared_ptr<const ScalarImage> gray;
    Pose pose;
    bool is_keyframe = false;
    bool keyframe_decided = false;
    bool frozen = false;
    int solver_iterations = 0;  // accumulated DBA iterations over this frame's patches
    int source_index = -1;      // position in the input stream
};

struct Patch {
    PatchId id = 0;
    FrameId source_frame = 0;
    Pixel center = Pixel::Zero();
    double inv_depth = 1.0;
    int extent = 3;
};

/// (patch, target frame) pair. The DBA target for this edge is predicted + residual,
/// where predicted is the reprojected patch center at the time the provider ran.
struct GraphEdge {
    PatchId patch = 0;
    FrameId target = 0;
    Vec2 predicted = Vec2::Zero();
    Vec2 residual = Vec2::Zero();
    Vec2 weight = Vec2::Zero();
    bool loop = false;
};

/// Frame and patch nodes shared by the front-end and back-end graphs.
class PatchGraph {
public:
    explicit PatchGraph(Intrinsics k) : intrinsics_(k) {}

    const Intrinsics& intrinsics() const { return intrinsics_; }

    Frame& add_frame(Frame f);
    Patch& add_patch(FrameId source, const Pixel& center, double inv_depth, int extent = 3);

    /// Removes a frame and its patches; returns the removed patch ids.
    std::vector<PatchId> remove_frame(FrameId id);

    bool has_frame(FrameId id) const { return frames_.contains(id); }
    bool has_patch(PatchId id) const { return patches_.contains(id); }
    Frame& frame(FrameId id);
    const Frame& frame(FrameId id) const;
    Patch& patch(PatchId id);
    const Patch& patch(PatchId id) const;

    const std::map<FrameId, Frame>& frames() const { return frames_; }
    std::map<FrameId, Frame>& frames() { return frames_; }
    const std::map<PatchId, Patch>& patches() const { return patches_; }
    std::span<const PatchId> patches_of(FrameId id) const;

    std::vector<FrameId> frame_ids() const;
    FrameId next_frame_id() const { return next_frame_id_; }

private:
    Intrinsics intrinsics_;
    std::map<FrameId, Frame> frames_;
    std::map<PatchId, Patch> patches_;
    std::map<FrameId, std::vector<PatchId>> frame_patches_;
    FrameId next_frame_id_ = 0;
    PatchId next_patch_id_ = 0;
};

/// Ordered, duplicate-free edge collection.
class EdgeSet {
public:
    /// Returns false if an edge with the same (patch, target) already exists.
    bool insert(const GraphEdge& e);
    bool contains(PatchId p, FrameId t) const { return keys_.contains({p, t}); }

    template <class Pred>
    std::size_t remove_if(Pred pred) {
        std::size_t removed = 0;
        std::vector<GraphEdge> kept;
        kept.reserve(edges_.size());
        for (auto& e : edges_) {
            if (pred(e)) {
                keys_.erase({e.patch, e.target});
                ++removed;
            } else {
                kept.push_back(e);
            }
        }
        edges_.swap(kept);
        return removed;
    }

    /// Removes edges targeting `frame` or originating from one of `patches`.
    std::size_t remove_incident(FrameId frame, std::span<const PatchId> patches);

    std::size_t size() const { return edges_.size(); }
    bool empty() const { return edges_.empty(); }
    std::span<const GraphEdge> edges() const { return edges_; }
    std::span<GraphEdge> edges() { return edges_; }

private:
    std::vector<GraphEdge> edges_;
    std::set<std::pair<PatchId, FrameId>> keys_;
};

}  // namespace mgslam
